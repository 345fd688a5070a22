//! Synthetic multi-shell acquisitions with known ground truth.

use std::collections::HashMap;

use nalgebra::{Matrix3, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::acquisition::{effective_diffusion_time, hemisphere_directions, GradientScheme};
use crate::error::{Error, Result};
use crate::fitting::tensor_from_components;
use crate::io::Volume4D;
use crate::measures::moment_analytic;
use crate::par::{map_range, Execution};
use crate::signal_model::{predict_attenuation, StretchedParams};
use crate::sphere::SphereRule;

/// Subdivision level of the icosahedral rule used for truth moments.
pub const TRUTH_SPHERE_LEVEL: usize = 5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtocolSpec {
    /// Effective diffusion time [s].
    pub tau: f64,
    pub b0_count: usize,
    /// Shell b-values [s/mm²].
    pub shells: Vec<f64>,
    /// Same hemisphere table on every shell.
    pub directions_per_shell: usize,
}

impl ProtocolSpec {
    /// Five-shell in vivo protocol: δ/Δ = 29/58 ms, 33 directions.
    pub fn human_five_shell() -> Self {
        Self {
            tau: effective_diffusion_time(0.029, 0.058),
            b0_count: 1,
            shells: vec![200.0, 1000.0, 1800.0, 2400.0, 3000.0],
            directions_per_shell: 33,
        }
    }

    /// Fifteen in vivo shells, 200 to 3000 in steps of 200.
    pub fn human_full() -> Self {
        Self { shells: (1..=15).map(|k| 200.0 * k as f64).collect(), ..Self::human_five_shell() }
    }

    /// Ex vivo b_max sweep: 1000, 2000, 3000, then 3400 to 5000 in steps of 400; δ/Δ = 4/14 ms.
    pub fn ex_vivo_sweep() -> Self {
        Self {
            tau: effective_diffusion_time(0.004, 0.014),
            b0_count: 1,
            shells: vec![1000.0, 2000.0, 3000.0, 3400.0, 3800.0, 4200.0, 4600.0, 5000.0],
            directions_per_shell: 33,
        }
    }

    pub fn scheme(&self) -> Result<GradientScheme> {
        let dirs = hemisphere_directions(self.directions_per_shell);
        let mut v = vec![Vector3::zeros(); self.b0_count];
        let mut b = vec![0.0; self.b0_count];
        for &sb in &self.shells {
            v.extend_from_slice(&dirs);
            b.extend(std::iter::repeat(sb).take(dirs.len()));
        }
        GradientScheme::new(v, b, self.tau)
    }
}

impl Default for ProtocolSpec {
    fn default() -> Self {
        Self::human_five_shell()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Shape {
    All,
    /// Inclusive voxel-index box.
    Box { min: [usize; 3], max: [usize; 3] },
    /// Voxel centers within `radius` (voxels) of `center`.
    Sphere { center: [f64; 3], radius: f64 },
}

impl Shape {
    fn contains(&self, p: [usize; 3]) -> bool {
        match self {
            Shape::All => true,
            Shape::Box { min, max } => (0..3).all(|k| p[k] >= min[k] && p[k] <= max[k]),
            Shape::Sphere { center, radius } => {
                (0..3).map(|k| (p[k] as f64 - center[k]).powi(2)).sum::<f64>() <= radius * radius
            }
        }
    }
}

/// Linear variation across the grid: at normalized position t ∈ [−½, ½]
/// along `axis`, the tensor is scaled by 1 + d_scale·t and α shifted by alpha_shift·t.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ramp {
    pub axis: usize,
    #[serde(default)]
    pub d_scale: f64,
    #[serde(default)]
    pub alpha_shift: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionSpec {
    pub shape: Shape,
    /// (Dxx, Dyy, Dzz, Dxy, Dxz, Dyz) [mm²/s]
    pub tensor: [f64; 6],
    pub alpha: f64,
    #[serde(default)]
    pub ramp: Option<Ramp>,
}

#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Noise {
    #[default]
    None,
    /// σ = s0 / snr on both channels.
    Rician { snr: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub dims: [usize; 3],
    #[serde(default = "default_voxel_size")]
    pub voxel_size: [f64; 3],
    /// The first region containing a voxel defines it.
    pub regions: Vec<RegionSpec>,
    pub s0: f64,
    #[serde(default)]
    pub protocol: ProtocolSpec,
    #[serde(default)]
    pub noise: Noise,
    #[serde(default)]
    pub seed: u64,
}

fn default_voxel_size() -> [f64; 3] {
    [2.0; 3]
}

impl PhantomSpec {
    /// One region covering the whole grid.
    pub fn uniform(dims: [usize; 3], tensor: [f64; 6], alpha: f64, protocol: ProtocolSpec) -> Self {
        Self {
            dims,
            voxel_size: default_voxel_size(),
            regions: vec![RegionSpec { shape: Shape::All, tensor, alpha, ramp: None }],
            s0: 100.0,
            protocol,
            noise: Noise::None,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhantomTruth {
    pub region: Vec<usize>,
    pub tensors: Vec<[f64; 6]>,
    pub alpha: Vec<f64>,
    pub rtop: Vec<f64>,
    pub qmsd: Vec<f64>,
    pub qmfd: Vec<f64>,
}

impl PhantomTruth {
    /// gᵀDg at voxel `i`.
    pub fn diffusivity(&self, i: usize, g: &Vector3<f64>) -> f64 {
        (g.transpose() * tensor_from_components(&self.tensors[i]) * g)[0]
    }
}

fn validate(spec: &PhantomSpec) -> Result<()> {
    if spec.dims.iter().any(|&d| d == 0) {
        return Err(Error::Input(format!("phantom dims must be positive, got {:?}", spec.dims)));
    }
    if !(spec.s0 > 0.0 && spec.s0.is_finite()) {
        return Err(Error::Input(format!("s0 must be positive, got {}", spec.s0)));
    }
    if let Noise::Rician { snr } = spec.noise {
        if !(snr > 0.0 && snr.is_finite()) {
            return Err(Error::Input(format!("SNR must be positive, got {snr}")));
        }
    }
    for (k, r) in spec.regions.iter().enumerate() {
        if !(r.alpha > 0.0 && r.alpha <= 1.0) {
            return Err(Error::Input(format!("region {k}: alpha {} outside (0, 1]", r.alpha)));
        }
        let t = tensor_from_components(&r.tensor);
        if r.tensor.iter().any(|v| !v.is_finite()) || t.cholesky().is_none() {
            return Err(Error::Input(format!("region {k}: tensor {:?} is not symmetric positive definite", r.tensor)));
        }
        if let Some(ramp) = r.ramp {
            if ramp.axis > 2 || ramp.d_scale.abs() >= 2.0 {
                return Err(Error::Input(format!("region {k}: ramp needs axis < 3 and |d_scale| < 2")));
            }
        }
    }
    Ok(())
}

/// Per-voxel (region, tensor, α) after ramps.
fn voxel_truth(spec: &PhantomSpec, p: [usize; 3]) -> Result<(usize, [f64; 6], f64)> {
    let (k, r) = spec
        .regions
        .iter()
        .enumerate()
        .find(|(_, r)| r.shape.contains(p))
        .ok_or_else(|| Error::Input(format!("voxel {p:?} is not covered by any region")))?;
    let (mut tensor, mut alpha) = (r.tensor, r.alpha);
    if let Some(ramp) = r.ramp {
        let n = spec.dims[ramp.axis];
        let t = if n > 1 { p[ramp.axis] as f64 / (n - 1) as f64 - 0.5 } else { 0.0 };
        tensor = tensor.map(|c| c * (1.0 + ramp.d_scale * t));
        alpha += ramp.alpha_shift * t;
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::Input(format!("region {k}: ramped alpha {alpha} at {p:?} outside (0, 1]")));
        }
    }
    Ok((k, tensor, alpha))
}

/// Simulate the phantom: S = s0·exp(−(b·gᵀDg)^α), optionally with Rician noise
/// drawn from a per-voxel stream of `seed`.
pub fn generate_phantom(spec: &PhantomSpec, exec: Execution) -> Result<(Volume4D, PhantomTruth)> {
    validate(spec)?;
    let scheme = spec.protocol.scheme()?;
    let [nx, ny, nz] = spec.dims;
    let n_vox = nx * ny * nz;
    let coords = |i: usize| [i % nx, (i / nx) % ny, i / (nx * ny)];
    let per_voxel: Vec<(usize, [f64; 6], f64)> =
        (0..n_vox).map(|i| voxel_truth(spec, coords(i))).collect::<Result<_>>()?;

    let noise = match spec.noise {
        Noise::None => None,
        Noise::Rician { snr } => Some(Normal::new(0.0, spec.s0 / snr).map_err(|e| Error::Input(e.to_string()))?),
    };
    let series = map_range(exec, n_vox, |i| {
        let (_, c, alpha) = per_voxel[i];
        let t: Matrix3<f64> = tensor_from_components(&c);
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(i as u64);
        scheme
            .directions
            .iter()
            .zip(&scheme.bvals)
            .map(|(g, &b)| {
                let d = (g.transpose() * t * g)[0];
                let s = if b == 0.0 { spec.s0 } else { spec.s0 * predict_attenuation(&StretchedParams { d, alpha }, b) };
                match &noise {
                    None => s,
                    Some(nd) => {
                        let (n1, n2) = (nd.sample(&mut rng), nd.sample(&mut rng));
                        ((s + n1).powi(2) + n2 * n2).sqrt()
                    }
                }
            })
            .collect::<Vec<f64>>()
    });
    let mut vol = Volume4D::from_series(spec.dims, spec.voxel_size, &series)?;
    for k in 0..3 {
        vol.affine[k][k] = spec.voxel_size[k];
    }

    // truth moments, computed once per distinct (tensor, α)
    let key = |c: &[f64; 6], a: f64| (c.map(f64::to_bits), a.to_bits());
    let mut unique: Vec<([f64; 6], f64)> = Vec::new();
    let mut index: HashMap<([u64; 6], u64), usize> = HashMap::new();
    for (_, c, a) in &per_voxel {
        index.entry(key(c, *a)).or_insert_with(|| {
            unique.push((*c, *a));
            unique.len() - 1
        });
    }
    let rule = SphereRule::icosahedral(TRUTH_SPHERE_LEVEL);
    let tau = spec.protocol.tau;
    let moments: Vec<Result<[f64; 3]>> = map_range(exec, unique.len(), |u| {
        let (c, a) = unique[u];
        let t = tensor_from_components(&c);
        let d = |g: &Vector3<f64>| (g.transpose() * t * g)[0];
        Ok([
            moment_analytic(d, |_| a, tau, 0, &rule)?.value,
            moment_analytic(d, |_| a, tau, 2, &rule)?.value,
            moment_analytic(d, |_| a, tau, 4, &rule)?.value,
        ])
    });
    let moments: Vec<[f64; 3]> = moments.into_iter().collect::<Result<_>>()?;
    let m = |i: usize, k: usize| {
        let (_, c, a) = &per_voxel[i];
        moments[index[&key(c, *a)]][k]
    };
    let truth = PhantomTruth {
        region: per_voxel.iter().map(|p| p.0).collect(),
        tensors: per_voxel.iter().map(|p| p.1).collect(),
        alpha: per_voxel.iter().map(|p| p.2).collect(),
        rtop: (0..n_vox).map(|i| m(i, 0)).collect(),
        qmsd: (0..n_vox).map(|i| m(i, 1)).collect(),
        qmfd: (0..n_vox).map(|i| m(i, 2)).collect(),
    };
    Ok((vol, truth))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::moment_constant;

    fn iso(d: f64) -> [f64; 6] {
        [d, d, d, 0.0, 0.0, 0.0]
    }

    #[test]
    fn noiseless_reproduces_model() {
        let spec = PhantomSpec::uniform([2, 2, 1], [1.2e-3, 0.6e-3, 0.5e-3, 0.1e-3, 0.0, 0.0], 0.75, ProtocolSpec::human_five_shell());
        let (vol, truth) = generate_phantom(&spec, Execution::Parallel).unwrap();
        let scheme = spec.protocol.scheme().unwrap();
        assert_eq!(vol.dims, [2, 2, 1, 1 + 5 * 33]);
        for i in 0..4 {
            let s = vol.voxel_series(i);
            assert_eq!(s[0], 100.0);
            for m in 1..s.len() {
                let d = truth.diffusivity(i, &scheme.directions[m]);
                let want = 100.0 * predict_attenuation(&StretchedParams { d, alpha: 0.75 }, scheme.bvals[m]);
                assert_eq!(s[m], want);
            }
        }
        assert!((spec.protocol.tau - 0.048333).abs() < 1e-6);
    }

    #[test]
    fn rician_mean_at_b0() {
        let protocol = ProtocolSpec { b0_count: 10, shells: vec![1000.0], directions_per_shell: 1, tau: 0.05 };
        let mut spec = PhantomSpec::uniform([200, 200, 1], iso(1e-3), 0.8, protocol);
        spec.noise = Noise::Rician { snr: 39.0 };
        spec.seed = 7;
        let (vol, _) = generate_phantom(&spec, Execution::Parallel).unwrap();
        let b0: Vec<f64> = (0..10).flat_map(|v| vol.volume(v).to_vec()).collect();
        let mean = b0.iter().sum::<f64>() / b0.len() as f64;
        let want = 100.0 * (1.0 + 1.0 / (2.0 * 39.0 * 39.0));
        let se = 100.0 / 39.0 / (b0.len() as f64).sqrt();
        assert!((mean - want).abs() < 4.0 * se, "{mean} vs {want} (se {se})");
        // the noise-free value is outside that band
        assert!((mean - 100.0).abs() > 4.0 * se);
    }

    #[test]
    fn seeded_determinism_across_schedules() {
        let mut spec = PhantomSpec::uniform([4, 3, 2], iso(0.8e-3), 0.7, ProtocolSpec::human_five_shell());
        spec.noise = Noise::Rician { snr: 20.0 };
        spec.seed = 42;
        let (a, _) = generate_phantom(&spec, Execution::Parallel).unwrap();
        let (b, _) = generate_phantom(&spec, Execution::Sequential).unwrap();
        assert_eq!(a.data, b.data);
        spec.seed = 43;
        let (c, _) = generate_phantom(&spec, Execution::Parallel).unwrap();
        assert_ne!(a.data, c.data);
    }

    #[test]
    fn two_regions_have_distinct_truth() {
        let spec = PhantomSpec {
            dims: [4, 1, 1],
            voxel_size: [1.0; 3],
            regions: vec![
                RegionSpec { shape: Shape::Box { min: [0, 0, 0], max: [1, 0, 0] }, tensor: iso(0.9e-3), alpha: 1.0, ramp: None },
                RegionSpec { shape: Shape::All, tensor: [1.5e-3, 0.4e-3, 0.4e-3, 0.0, 0.0, 0.0], alpha: 0.7, ramp: None },
            ],
            s0: 50.0,
            protocol: ProtocolSpec::human_five_shell(),
            noise: Noise::None,
            seed: 0,
        };
        let (_, truth) = generate_phantom(&spec, Execution::Parallel).unwrap();
        assert_eq!(truth.region, vec![0, 0, 1, 1]);
        let want = moment_constant(0.9e-3, 1.0, spec.protocol.tau, 0).unwrap();
        assert!((truth.rtop[0] / want - 1.0).abs() < 1e-9);
        assert!((truth.rtop[2] / truth.rtop[0] - 1.0).abs() > 0.05);
    }

    #[test]
    fn ramp_and_validation() {
        let mut spec = PhantomSpec::uniform([5, 1, 1], iso(1e-3), 0.8, ProtocolSpec::human_five_shell());
        spec.regions[0].ramp = Some(Ramp { axis: 0, d_scale: 0.4, alpha_shift: 0.1 });
        let (_, truth) = generate_phantom(&spec, Execution::Parallel).unwrap();
        assert!((truth.tensors[0][0] - 0.8e-3).abs() < 1e-15 && (truth.tensors[4][0] - 1.2e-3).abs() < 1e-15);
        assert!((truth.alpha[4] - 0.85).abs() < 1e-15);

        let bad = |f: &dyn Fn(&mut PhantomSpec)| {
            let mut s = PhantomSpec::uniform([2, 1, 1], iso(1e-3), 0.8, ProtocolSpec::human_five_shell());
            f(&mut s);
            generate_phantom(&s, Execution::Sequential).is_err()
        };
        assert!(bad(&|s| s.regions[0].tensor = [1e-3, 1e-3, -1e-3, 0.0, 0.0, 0.0]));
        assert!(bad(&|s| s.regions[0].alpha = 1.2));
        assert!(bad(&|s| s.noise = Noise::Rician { snr: 0.0 }));
        assert!(bad(&|s| s.regions[0].shape = Shape::Box { min: [0, 0, 0], max: [0, 0, 0] }));
    }

    #[test]
    fn spec_json_round_trip() {
        let mut spec = PhantomSpec::uniform([2, 2, 2], iso(1e-3), 0.8, ProtocolSpec::ex_vivo_sweep());
        spec.noise = Noise::Rician { snr: 75.0 };
        let text = serde_json::to_string(&spec).unwrap();
        assert_eq!(serde_json::from_str::<PhantomSpec>(&text).unwrap(), spec);
        let minimal: PhantomSpec = serde_json::from_str(
            r#"{"dims":[1,1,1],"s0":1,"regions":[{"shape":{"type":"all"},"tensor":[1e-3,1e-3,1e-3,0,0,0],"alpha":0.9}]}"#,
        )
        .unwrap();
        assert_eq!(minimal.protocol, ProtocolSpec::human_five_shell());
    }
}
