//! Solvers for the dense SPD Galerkin system.

use faer::linalg::solvers::Solve;
use faer::{Mat, Side};

use crate::assembly::{EnergyMatrix, FemFunction};
use crate::error::{AfemError, Result};

#[derive(Clone, Copy, Debug)]
pub struct SolverOptions {
    /// Relative residual ‖Au - b‖ / ‖b‖ to reach.
    pub tol: f64,
    /// Largest dimension solved by Cholesky; beyond, preconditioned CG.
    pub direct_limit: usize,
    pub max_iterations: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-10,
            direct_limit: 6000,
            max_iterations: 20000,
        }
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn residual(a: &EnergyMatrix, u: &[f64], b: &[f64]) -> Vec<f64> {
    let au = a.apply(u);
    b.iter().zip(&au).map(|(x, y)| x - y).collect()
}

/// Solves A u = b with relative residual at most `tol`.
pub fn solve_spd(a: &EnergyMatrix, b: &[f64], tol: f64) -> Result<FemFunction> {
    solve_spd_with(
        a,
        b,
        &SolverOptions {
            tol,
            ..SolverOptions::default()
        },
    )
}

pub fn solve_spd_with(a: &EnergyMatrix, b: &[f64], opts: &SolverOptions) -> Result<FemFunction> {
    let n = a.dim();
    if b.len() != n {
        return Err(AfemError::InvalidInput(format!(
            "right-hand side has length {}, expected {n}",
            b.len()
        )));
    }
    let bn = norm(b);
    if bn == 0.0 {
        return Ok(FemFunction {
            mesh_id: a.mesh_id(),
            coeffs: vec![0.0; n],
        });
    }
    let u = if n <= opts.direct_limit {
        cholesky(a, b, opts.tol)?
    } else {
        pcg(a, b, opts)?
    };
    let res = norm(&residual(a, &u, b)) / bn;
    if !(res <= opts.tol) {
        return Err(AfemError::NotConverged {
            residual: res,
            tol: opts.tol,
        });
    }
    Ok(FemFunction {
        mesh_id: a.mesh_id(),
        coeffs: u,
    })
}

fn cholesky(a: &EnergyMatrix, b: &[f64], tol: f64) -> Result<Vec<f64>> {
    let n = a.dim();
    let llt = a
        .matrix()
        .llt(Side::Lower)
        .map_err(|e| AfemError::Factorization(format!("Cholesky failed: {e:?}")))?;
    let rhs = Mat::<f64>::from_fn(n, 1, |i, _| b[i]);
    let x = llt.solve(&rhs);
    let mut u: Vec<f64> = (0..n).map(|i| x[(i, 0)]).collect();
    // iterative refinement
    let bn = norm(b);
    for _ in 0..3 {
        let r = residual(a, &u, b);
        if norm(&r) <= 0.01 * tol * bn {
            break;
        }
        let rm = Mat::<f64>::from_fn(n, 1, |i, _| r[i]);
        let d = llt.solve(&rm);
        for (i, ui) in u.iter_mut().enumerate() {
            *ui += d[(i, 0)];
        }
    }
    Ok(u)
}

fn pcg(a: &EnergyMatrix, b: &[f64], opts: &SolverOptions) -> Result<Vec<f64>> {
    let n = a.dim();
    let diag: Vec<f64> = (0..n).map(|i| a.get(i, i)).collect();
    if diag.iter().any(|&d| !(d > 0.0)) {
        return Err(AfemError::Factorization(
            "non-positive diagonal entry".into(),
        ));
    }
    let bn = norm(b);
    let mut u = vec![0.0; n];
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&diag).map(|(x, d)| x / d).collect();
    let mut p = z.clone();
    let mut rz: f64 = r.iter().zip(&z).map(|(x, y)| x * y).sum();
    for _ in 0..opts.max_iterations {
        if norm(&r) <= 0.5 * opts.tol * bn {
            return Ok(u);
        }
        let ap = a.apply(&p);
        let pap: f64 = p.iter().zip(&ap).map(|(x, y)| x * y).sum();
        if !(pap > 0.0) {
            return Err(AfemError::Factorization(
                "matrix is not positive definite".into(),
            ));
        }
        let alpha = rz / pap;
        for i in 0..n {
            u[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        for i in 0..n {
            z[i] = r[i] / diag[i];
        }
        let rz_new: f64 = r.iter().zip(&z).map(|(x, y)| x * y).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    let res = norm(&residual(a, &u, b)) / bn;
    if res <= opts.tol {
        Ok(u)
    } else {
        Err(AfemError::NotConverged {
            residual: res,
            tol: opts.tol,
        })
    }
}
