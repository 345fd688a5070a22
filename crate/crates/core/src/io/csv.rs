//! Region summaries of measure maps as CSV.
//!
//! Numbers use Rust's shortest round-trip formatting, so output never depends
//! on the process locale. Lines end in `\n`.

use crate::analysis::percentile;

pub const SUMMARY_HEADER: &str = "region,measure,estimator,shell_b,mean,median,p05,p95";

#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub region: String,
    pub measure: String,
    pub estimator: String,
    pub shell_b: Option<f64>,
    pub mean: f64,
    pub median: f64,
    pub p05: f64,
    pub p95: f64,
}

/// Summary of the finite entries of `values` selected by `mask`; `None` if there are none.
pub fn summarize(
    region: &str,
    measure: &str,
    estimator: &str,
    shell_b: Option<f64>,
    values: &[f64],
    mask: Option<&[bool]>,
) -> Option<SummaryRow> {
    let mut v: Vec<f64> = values
        .iter()
        .enumerate()
        .filter(|(i, x)| x.is_finite() && mask.map_or(true, |m| m[*i]))
        .map(|(_, x)| *x)
        .collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    Some(SummaryRow {
        region: region.to_string(),
        measure: measure.to_string(),
        estimator: estimator.to_string(),
        shell_b,
        mean: v.iter().sum::<f64>() / v.len() as f64,
        median: percentile(&v, 50.0),
        p05: percentile(&v, 5.0),
        p95: percentile(&v, 95.0),
    })
}

fn field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    for r in rows {
        let shell = r.shell_b.map(|b| b.to_string()).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            field(&r.region),
            field(&r.measure),
            field(&r.estimator),
            shell,
            r.mean,
            r.median,
            r.p05,
            r.p95
        ));
    }
    out
}
