//! Two-level error indicators and Dörfler marking.

use std::io::Write;
use std::path::Path;

use crate::assembly::{
    assemble_load, assemble_stiffness_with, AssemblyOptions, EnergyMatrix, FemFunction,
};
use crate::error::{invalid, AfemError, Result};
use crate::mesh::{new_interior_nodes, uniform_refine, Point, Refinement, Triangulation};

/// Load vectors use a degree-4 rule.
pub const LOAD_DEGREE: usize = 4;

#[derive(Clone, Debug)]
pub struct IndicatorSet {
    /// (fine vertex id, τ(φ_z)) for every new interior node of the uniform refinement.
    pub node_tau: Vec<(usize, f64)>,
    /// τ(T)² per coarse element.
    pub element_tau_sq: Vec<f64>,
    /// Σ_T τ(T)².
    pub total_sq: f64,
}

impl IndicatorSet {
    pub fn total(&self) -> f64 {
        self.total_sq.sqrt()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "element_id,tau_sq")?;
        for (t, v) in self.element_tau_sq.iter().enumerate() {
            writeln!(f, "{t},{v}")?;
        }
        Ok(())
    }
}

/// Everything computed on the uniform refinement while estimating.
pub struct TwoLevel {
    pub indicators: IndicatorSet,
    pub refinement: Refinement,
    pub a_fine: EnergyMatrix,
    pub b_fine: Vec<f64>,
    /// b_fine - A_fine P u, per fine dof.
    pub residual: Vec<f64>,
}

/// Two-level indicators of a coarse solution on its uniform refinement.
pub fn two_level_indicators(
    coarse: &Triangulation,
    u: &FemFunction,
    f: &dyn Fn(Point) -> f64,
    s: f64,
    quad_order: usize,
) -> Result<IndicatorSet> {
    Ok(two_level(coarse, u, f, s, &AssemblyOptions::new(quad_order))?.indicators)
}

pub fn two_level(
    coarse: &Triangulation,
    u: &FemFunction,
    f: &dyn Fn(Point) -> f64,
    s: f64,
    opts: &AssemblyOptions,
) -> Result<TwoLevel> {
    if u.mesh_id != coarse.id() || u.coeffs.len() != coarse.n_dofs() {
        return Err(AfemError::MeshMismatch(
            "coarse solution does not live on the coarse mesh".into(),
        ));
    }
    let refinement = uniform_refine(coarse)?;
    let fine = &refinement.mesh;
    let a_fine = assemble_stiffness_with(fine, s, opts)?;
    let b_fine = assemble_load(fine, f, LOAD_DEGREE);
    let pu = u.prolong(&refinement.prolongation)?;
    let apu = a_fine.apply(&pu.coeffs);
    let residual: Vec<f64> = b_fine.iter().zip(&apu).map(|(b, a)| b - a).collect();
    let sets = new_interior_nodes(coarse, fine, &refinement.prolongation)?;
    let mut tau_of_vertex = vec![f64::NAN; fine.n_vertices()];
    let mut node_tau = Vec::new();
    for v in coarse.n_vertices()..fine.n_vertices() {
        if let Some(z) = fine.dof(v) {
            let tau = residual[z].abs() / a_fine.get(z, z).sqrt();
            tau_of_vertex[v] = tau;
            node_tau.push((v, tau));
        }
    }
    let element_tau_sq: Vec<f64> = sets
        .iter()
        .map(|nodes| nodes.iter().map(|&v| tau_of_vertex[v].powi(2)).sum())
        .collect();
    let total_sq = element_tau_sq.iter().sum();
    Ok(TwoLevel {
        indicators: IndicatorSet {
            node_tau,
            element_tau_sq,
            total_sq,
        },
        refinement,
        a_fine,
        b_fine,
        residual,
    })
}

/// τ(U) = (Σ_{T∈U} τ(T)²)^{1/2}.
pub fn subset_total(ind: &IndicatorSet, set: &[usize]) -> Result<f64> {
    let mut sum = 0.0;
    for &t in set {
        match ind.element_tau_sq.get(t) {
            Some(v) => sum += v,
            None => return invalid(format!("unknown element id {t}")),
        }
    }
    Ok(sum.sqrt())
}

#[derive(Clone, Debug, PartialEq)]
pub struct Marking {
    /// Marked element ids in selection order.
    pub elements: Vec<usize>,
    /// All indicators vanish; nothing to refine.
    pub converged: bool,
}

/// Dörfler marking of minimal cardinality on the per-element τ(T)².
pub fn doerfler_mark(ind: &IndicatorSet, theta: f64) -> Result<Marking> {
    doerfler_mark_values(&ind.element_tau_sq, theta)
}

pub fn doerfler_mark_values(tau_sq: &[f64], theta: f64) -> Result<Marking> {
    if !(theta > 0.0 && theta <= 1.0) {
        return invalid(format!("theta must lie in (0,1], got {theta}"));
    }
    if tau_sq.iter().any(|v| !(v >= &0.0) || !v.is_finite()) {
        return invalid("indicators must be finite and nonnegative");
    }
    let mut order: Vec<usize> = (0..tau_sq.len()).collect();
    order.sort_by(|&a, &b| tau_sq[b].total_cmp(&tau_sq[a]).then(a.cmp(&b)));
    let total: f64 = order.iter().map(|&t| tau_sq[t]).sum();
    if total == 0.0 {
        return Ok(Marking {
            elements: Vec::new(),
            converged: true,
        });
    }
    if theta == 1.0 {
        let elements = order.into_iter().filter(|&t| tau_sq[t] > 0.0).collect();
        return Ok(Marking {
            elements,
            converged: false,
        });
    }
    let goal = theta * total;
    let mut sum = 0.0;
    let mut elements = Vec::new();
    for t in order {
        if sum >= goal {
            break;
        }
        sum += tau_sq[t];
        elements.push(t);
    }
    Ok(Marking {
        elements,
        converged: false,
    })
}
