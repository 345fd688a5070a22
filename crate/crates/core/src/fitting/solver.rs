//! Dense, box-constrained Levenberg–Marquardt for small problems.
//!
//! Steps are computed on the free variables only (a variable at a bound whose
//! gradient points outward is frozen) and then projected back onto the box.
//! The damping follows Nielsen's gain-ratio update.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Residual model r(x) with Jacobian ∂r/∂x.
pub trait LeastSquaresProblem {
    fn n_params(&self) -> usize;
    fn n_residuals(&self) -> usize;
    fn residuals(&self, x: &DVector<f64>, out: &mut DVector<f64>);
    fn jacobian(&self, x: &DVector<f64>, out: &mut DMatrix<f64>);
}

/// Stopping rules.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StopCriteria {
    /// Relative step size ‖Δx‖ ≤ xtol·(‖x‖ + xtol).
    pub xtol: f64,
    /// Infinity norm of the projected gradient.
    pub gtol: f64,
    pub max_iter: usize,
}

impl Default for StopCriteria {
    fn default() -> Self {
        Self { xtol: 1e-10, gtol: 1e-8, max_iter: 200 }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Termination {
    Gradient,
    Step,
    /// Damping grew without finding a decrease; the point is a numerical optimum.
    NoProgress,
    MaxIterations,
}

#[derive(Clone, Debug)]
pub struct Solution {
    pub x: DVector<f64>,
    /// ½‖r‖²
    pub cost: f64,
    pub n_iter: usize,
    pub termination: Termination,
    pub at_lower: Vec<bool>,
    pub at_upper: Vec<bool>,
}

impl Solution {
    pub fn converged(&self) -> bool {
        self.termination != Termination::MaxIterations
    }
}

fn projected_gradient(x: &DVector<f64>, g: &DVector<f64>, lo: &[f64], hi: &[f64]) -> (DVector<f64>, Vec<bool>) {
    let mut pg = g.clone();
    let mut free = vec![true; x.len()];
    for i in 0..x.len() {
        if (x[i] <= lo[i] && g[i] > 0.0) || (x[i] >= hi[i] && g[i] < 0.0) {
            pg[i] = 0.0;
            free[i] = false;
        }
    }
    (pg, free)
}

fn project(x: &mut DVector<f64>, lo: &[f64], hi: &[f64]) {
    for i in 0..x.len() {
        x[i] = x[i].clamp(lo[i], hi[i]);
    }
}

/// Minimize ½‖r(x)‖² subject to lo ≤ x ≤ hi, starting from `x0` (projected).
pub fn minimize<P: LeastSquaresProblem>(
    problem: &P,
    x0: DVector<f64>,
    lo: &[f64],
    hi: &[f64],
    stop: &StopCriteria,
) -> Solution {
    let n = problem.n_params();
    let m = problem.n_residuals();
    let mut x = x0;
    project(&mut x, lo, hi);

    let mut r = DVector::zeros(m);
    let mut j = DMatrix::zeros(m, n);
    problem.residuals(&x, &mut r);
    problem.jacobian(&x, &mut j);
    let mut cost = 0.5 * r.norm_squared();

    let mut jtj = j.tr_mul(&j);
    let mut g = j.tr_mul(&r);
    let mut mu = 1e-3 * (0..n).map(|i| jtj[(i, i)]).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let mut nu = 2.0;

    let mut r_new = DVector::zeros(m);
    let mut n_iter = 0;
    let termination = loop {
        let (pg, free) = projected_gradient(&x, &g, lo, hi);
        if pg.amax() <= stop.gtol {
            break Termination::Gradient;
        }
        if n_iter >= stop.max_iter {
            break Termination::MaxIterations;
        }
        n_iter += 1;

        let idx: Vec<usize> = (0..n).filter(|&i| free[i]).collect();
        let k = idx.len();
        let mut accepted = None;
        while mu.is_finite() && mu < 1e300 {
            let mut a = DMatrix::zeros(k, k);
            let mut rhs = DVector::zeros(k);
            for (p, &ip) in idx.iter().enumerate() {
                rhs[p] = -g[ip];
                for (q, &iq) in idx.iter().enumerate() {
                    a[(p, q)] = jtj[(ip, iq)];
                }
                a[(p, p)] += mu * jtj[(ip, ip)].max(1e-12);
            }
            let Some(step_free) = a.cholesky().map(|c| c.solve(&rhs)) else {
                mu *= nu;
                nu *= 2.0;
                continue;
            };
            let mut x_new = x.clone();
            for (p, &ip) in idx.iter().enumerate() {
                x_new[ip] += step_free[p];
            }
            project(&mut x_new, lo, hi);
            let step = &x_new - &x;
            if step.norm() == 0.0 {
                break;
            }
            problem.residuals(&x_new, &mut r_new);
            let cost_new = 0.5 * r_new.norm_squared();
            let js = &j * &step;
            let predicted = -(g.dot(&step) + 0.5 * js.norm_squared());
            let actual = cost - cost_new;
            if cost_new.is_finite() && actual > 0.0 && predicted > 0.0 {
                let rho = actual / predicted;
                mu *= (1.0f64 / 3.0).max(1.0 - (2.0 * rho - 1.0).powi(3));
                nu = 2.0;
                accepted = Some((x_new, step.norm(), cost_new));
                break;
            }
            mu *= nu;
            nu *= 2.0;
        }

        let Some((x_new, step_norm, cost_new)) = accepted else {
            break Termination::NoProgress;
        };
        let x_norm = x.norm();
        x = x_new;
        std::mem::swap(&mut r, &mut r_new);
        cost = cost_new;
        problem.jacobian(&x, &mut j);
        jtj = j.tr_mul(&j);
        g = j.tr_mul(&r);
        if step_norm <= stop.xtol * (x_norm + stop.xtol) {
            break Termination::Step;
        }
    };

    let at_lower = (0..n).map(|i| x[i] <= lo[i]).collect();
    let at_upper = (0..n).map(|i| x[i] >= hi[i]).collect();
    Solution { x, cost, n_iter, termination, at_lower, at_upper }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Rosenbrock as residuals (10(y − x²), 1 − x).
    struct Rosenbrock;

    impl LeastSquaresProblem for Rosenbrock {
        fn n_params(&self) -> usize {
            2
        }
        fn n_residuals(&self) -> usize {
            2
        }
        fn residuals(&self, x: &DVector<f64>, out: &mut DVector<f64>) {
            out[0] = 10.0 * (x[1] - x[0] * x[0]);
            out[1] = 1.0 - x[0];
        }
        fn jacobian(&self, x: &DVector<f64>, out: &mut DMatrix<f64>) {
            out[(0, 0)] = -20.0 * x[0];
            out[(0, 1)] = 10.0;
            out[(1, 0)] = -1.0;
            out[(1, 1)] = 0.0;
        }
    }

    #[test]
    fn unconstrained_rosenbrock() {
        let inf = f64::INFINITY;
        let s = minimize(&Rosenbrock, DVector::from_vec(vec![-1.2, 1.0]), &[-inf, -inf], &[inf, inf], &StopCriteria::default());
        assert!(s.converged());
        assert!((s.x[0] - 1.0).abs() < 1e-8 && (s.x[1] - 1.0).abs() < 1e-8, "{:?}", s.x);
    }

    #[test]
    fn active_upper_bound() {
        // optimum (1, 1) lies outside x ≤ 0.5; the constrained optimum is on the bound
        let inf = f64::INFINITY;
        let s = minimize(&Rosenbrock, DVector::from_vec(vec![0.0, 0.0]), &[-inf, -inf], &[0.5, inf], &StopCriteria::default());
        assert!(s.converged());
        assert_eq!(s.x[0], 0.5);
        assert!(s.at_upper[0] && !s.at_upper[1]);
        assert!((s.x[1] - 0.25).abs() < 1e-8);
    }

    #[test]
    fn deterministic() {
        let inf = f64::INFINITY;
        let run = || minimize(&Rosenbrock, DVector::from_vec(vec![-1.2, 1.0]), &[-inf, -2.0], &[inf, 3.0], &StopCriteria::default());
        let (a, b) = (run(), run());
        assert_eq!(a.x, b.x);
        assert_eq!(a.n_iter, b.n_iter);
    }
}
