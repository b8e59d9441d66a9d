//! Basic Gauss rules on intervals and triangles.

use std::cell::RefCell;
use std::collections::HashMap;

use faer::{Mat, Side};

use crate::error::{invalid, AfemError, Result};

/// A quadrature rule on a reference domain.
///
/// Points are given in reference coordinates: for [0,1] one coordinate is
/// used, for the reference triangle {a1, a2 >= 0, a1 + a2 <= 1} two.
#[derive(Clone, Debug)]
pub struct QuadRule {
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
    /// Polynomials up to this total degree are integrated exactly.
    pub degree: usize,
}

impl QuadRule {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// Gauss-Legendre nodes and weights on [0, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    if n == 1 {
        return (vec![0.5], vec![1.0]);
    }
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..(n + 1) / 2 {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        x[i] = 0.5 * (1.0 - z);
        x[n - 1 - i] = 0.5 * (1.0 + z);
        w[i] = 0.5 * wi;
        w[n - 1 - i] = 0.5 * wi;
    }
    (x, w)
}

type JacobiKey = (usize, u64, u64);

thread_local! {
    static JACOBI_CACHE: RefCell<HashMap<JacobiKey, (Vec<f64>, Vec<f64>)>> = RefCell::new(HashMap::new());
}

/// Gauss-Jacobi rule on [0, 1] for the weight t^alpha (1 - t)^beta.
///
/// Golub-Welsch on the Jacobi matrix; alpha, beta > -1.
pub fn gauss_jacobi(n: usize, alpha: f64, beta: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let key = (n, alpha.to_bits(), beta.to_bits());
    if let Some(hit) = JACOBI_CACHE.with(|c| c.borrow().get(&key).cloned()) {
        return Ok(hit);
    }
    let rule = gauss_jacobi_uncached(n, alpha, beta)?;
    JACOBI_CACHE.with(|c| c.borrow_mut().insert(key, rule.clone()));
    Ok(rule)
}

fn gauss_jacobi_uncached(n: usize, alpha: f64, beta: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(alpha > -1.0 && beta > -1.0) {
        return invalid(format!(
            "Gauss-Jacobi exponents must exceed -1 (got {alpha}, {beta})"
        ));
    }
    if n == 0 {
        return invalid("Gauss-Jacobi rule needs at least one point");
    }
    // Jacobi polynomials on [-1,1] with weight (1-x)^a (1+x)^b; t = (1+x)/2 gives
    // t^b (1-t)^a, so a = beta, b = alpha.
    let (a, b) = (beta, alpha);
    let mut j = Mat::<f64>::zeros(n, n);
    for k in 0..n {
        let kf = k as f64;
        let s = 2.0 * kf + a + b;
        let diag = if k == 0 {
            (b - a) / (a + b + 2.0)
        } else {
            (b * b - a * a) / (s * (s + 2.0))
        };
        j[(k, k)] = diag;
        if k + 1 < n {
            let k1 = kf + 1.0;
            let s1 = 2.0 * k1 + a + b;
            let num = 4.0 * k1 * (k1 + a) * (k1 + b) * (k1 + a + b);
            let den = s1 * s1 * (s1 + 1.0) * (s1 - 1.0);
            let off = (num / den).sqrt();
            j[(k + 1, k)] = off;
            j[(k, k + 1)] = off;
        }
    }
    let eig = j
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| AfemError::Numerical(format!("Gauss-Jacobi eigen solve: {e:?}")))?;
    let mu0 = 2f64.powf(a + b + 1.0)
        * statrs::function::gamma::gamma(a + 1.0)
        * statrs::function::gamma::gamma(b + 1.0)
        / statrs::function::gamma::gamma(a + b + 2.0);
    let s = eig.S();
    let u = eig.U();
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|k| {
            let x = s[k];
            let v0 = u[(0, k)];
            (0.5 * (1.0 + x), mu0 * v0 * v0 / 2f64.powf(a + b + 1.0))
        })
        .collect();
    pairs.sort_by(|p, q| p.0.total_cmp(&q.0));
    Ok(pairs.into_iter().unzip())
}

/// Collapsed (Duffy) tensor Gauss rule on the reference triangle, n points
/// per direction; exact for total degree 2n - 2.
pub fn triangle_collapsed(n: usize) -> QuadRule {
    let (x, w) = gauss_legendre(n);
    let mut points = Vec::with_capacity(n * n);
    let mut weights = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let u = x[i];
            points.push([u, (1.0 - u) * x[j]]);
            weights.push(w[i] * w[j] * (1.0 - u));
        }
    }
    QuadRule {
        points,
        weights,
        degree: 2 * n - 2,
    }
}

/// Centroid rule on the reference triangle (degree 1).
pub fn triangle_centroid() -> QuadRule {
    QuadRule {
        points: vec![[1.0 / 3.0, 1.0 / 3.0]],
        weights: vec![0.5],
        degree: 1,
    }
}

/// Three interior points (2/3, 1/6, 1/6), degree 2.
pub fn triangle_three_point() -> QuadRule {
    let (a, b) = (2.0 / 3.0, 1.0 / 6.0);
    QuadRule {
        points: vec![[b, b], [a, b], [b, a]],
        weights: vec![1.0 / 6.0; 3],
        degree: 2,
    }
}

/// Edge-midpoint rule, degree 2.
pub fn triangle_edge_midpoints() -> QuadRule {
    QuadRule {
        points: vec![[0.5, 0.0], [0.5, 0.5], [0.0, 0.5]],
        weights: vec![1.0 / 6.0; 3],
        degree: 2,
    }
}

/// Triangle rule exact for the requested degree.
pub fn triangle_rule(degree: usize) -> QuadRule {
    match degree {
        0 | 1 => triangle_centroid(),
        2 => triangle_three_point(),
        d => triangle_collapsed((d + 2).div_ceil(2)),
    }
}

/// Points per axis used for singular rules at a given order.
pub fn points_per_axis(order: usize) -> usize {
    2 * order.div_ceil(2)
}
