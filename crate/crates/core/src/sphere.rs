//! Quadrature rules on the unit sphere and on intervals.

use std::collections::HashMap;
use std::f64::consts::PI;

use nalgebra::Vector3;

/// Gauss–Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let nf = n as f64;
    for i in 0..(n + 1) / 2 {
        // Tricomi initial guess, then Newton on P_n.
        let mut z = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { z } else { p1 };
            let pm1 = if n == 1 { 1.0 } else { p0 };
            dp = nf * (z * pn - pm1) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    (x, w)
}

/// Points on the unit sphere with weights summing to 4π.
#[derive(Clone, Debug)]
pub struct SphereRule {
    pub points: Vec<Vector3<f64>>,
    pub weights: Vec<f64>,
}

impl SphereRule {
    /// Equal weights 4π/N over the given directions.
    pub fn uniform(points: Vec<Vector3<f64>>) -> Self {
        let w = 4.0 * PI / points.len() as f64;
        let weights = vec![w; points.len()];
        Self { points, weights }
    }

    /// `n` points on a golden-angle spiral over the full sphere, equal weights.
    pub fn fibonacci(n: usize) -> Self {
        let golden = PI * (1.0 + 5f64.sqrt());
        let points = (0..n)
            .map(|i| {
                let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
                let r = (1.0 - z * z).sqrt();
                let phi = golden * (i as f64 + 0.5);
                Vector3::new(r * phi.cos(), r * phi.sin(), z)
            })
            .collect();
        Self::uniform(points)
    }

    /// Tensor-product rule: Gauss–Legendre in cos θ, trapezoidal in φ.
    pub fn gauss_product(n_theta: usize, n_phi: usize) -> Self {
        let (x, w) = gauss_legendre(n_theta);
        let mut points = Vec::with_capacity(n_theta * n_phi);
        let mut weights = Vec::with_capacity(n_theta * n_phi);
        let dphi = 2.0 * PI / n_phi as f64;
        for (ct, wt) in x.iter().zip(&w) {
            let st = (1.0 - ct * ct).sqrt();
            for j in 0..n_phi {
                let phi = dphi * j as f64;
                points.push(Vector3::new(st * phi.cos(), st * phi.sin(), *ct));
                weights.push(wt * dphi);
            }
        }
        Self { points, weights }
    }

    /// Vertices of a recursively subdivided icosahedron. Each vertex carries
    /// one third of the spherical area of every triangle touching it.
    ///
    /// Level k has 10·4^k + 2 vertices.
    pub fn icosahedral(level: usize) -> Self {
        let t = (1.0 + 5f64.sqrt()) / 2.0;
        let mut points: Vec<Vector3<f64>> = [
            (-1.0, t, 0.0),
            (1.0, t, 0.0),
            (-1.0, -t, 0.0),
            (1.0, -t, 0.0),
            (0.0, -1.0, t),
            (0.0, 1.0, t),
            (0.0, -1.0, -t),
            (0.0, 1.0, -t),
            (t, 0.0, -1.0),
            (t, 0.0, 1.0),
            (-t, 0.0, -1.0),
            (-t, 0.0, 1.0),
        ]
        .iter()
        .map(|&(a, b, c)| Vector3::new(a, b, c).normalize())
        .collect();
        let mut faces: Vec<[usize; 3]> = vec![
            [0, 11, 5],
            [0, 5, 1],
            [0, 1, 7],
            [0, 7, 10],
            [0, 10, 11],
            [1, 5, 9],
            [5, 11, 4],
            [11, 10, 2],
            [10, 7, 6],
            [7, 1, 8],
            [3, 9, 4],
            [3, 4, 2],
            [3, 2, 6],
            [3, 6, 8],
            [3, 8, 9],
            [4, 9, 5],
            [2, 4, 11],
            [6, 2, 10],
            [8, 6, 7],
            [9, 8, 1],
        ];
        for _ in 0..level {
            let mut midpoints: HashMap<(usize, usize), usize> = HashMap::new();
            let mut mid = |a: usize, b: usize, points: &mut Vec<Vector3<f64>>| -> usize {
                *midpoints.entry((a.min(b), a.max(b))).or_insert_with(|| {
                    points.push((points[a] + points[b]).normalize());
                    points.len() - 1
                })
            };
            let mut next = Vec::with_capacity(faces.len() * 4);
            for [a, b, c] in faces {
                let ab = mid(a, b, &mut points);
                let bc = mid(b, c, &mut points);
                let ca = mid(c, a, &mut points);
                next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
            }
            faces = next;
        }
        let mut weights = vec![0.0; points.len()];
        for [a, b, c] in &faces {
            let (pa, pb, pc) = (points[*a], points[*b], points[*c]);
            // Van Oosterom–Strackee solid angle
            let num = pa.dot(&pb.cross(&pc)).abs();
            let den = 1.0 + pa.dot(&pb) + pb.dot(&pc) + pc.dot(&pa);
            let area = 2.0 * num.atan2(den);
            for v in [a, b, c] {
                weights[*v] += area / 3.0;
            }
        }
        Self { points, weights }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(&Vector3<f64>) -> f64) -> f64 {
        self.points.iter().zip(&self.weights).map(|(p, w)| w * f(p)).sum()
    }
}
