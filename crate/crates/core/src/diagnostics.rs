//! Mesh-size weights, weighted norms, nodal interpolation, Scott-Zhang
//! projection and an empirical check of their equivalence.

use std::io::Write;
use std::path::Path;

use crate::assembly::{assemble_stiffness, FemFunction};
use crate::error::{invalid, AfemError, Result};
use crate::mesh::{signed_area, uniform_refine, Point, Refinement, Triangulation};
use crate::quadrature::weighted_subtriangle_integral;

/// Quadrature order for the fine stiffness matrices of the report.
pub const DIAG_QUAD_ORDER: usize = 7;
/// Seed of the sample generator.
pub const SAMPLE_SEED: u64 = 0x5eed_2024;
const SUBTRIANGLE_POINTS: usize = 10;

/// h̃ˢ: h(T)ˢ for s ≤ 1/2 and h(T)^{1/2} ω(x)^{s-1/2} beyond, with ω the
/// distance to the skeleton of the mesh.
#[derive(Clone, Debug)]
pub struct WeightFunction {
    pub mesh_id: u64,
    pub s: f64,
    h: Vec<f64>,
}

impl WeightFunction {
    pub fn new(mesh: &Triangulation, s: f64) -> Result<Self> {
        if !(s > 0.0 && s < 1.0) {
            return invalid(format!("s must lie in (0,1), got {s}"));
        }
        let h = (0..mesh.n_elements()).map(|t| mesh.mesh_size(t)).collect();
        Ok(WeightFunction {
            mesh_id: mesh.id(),
            s,
            h,
        })
    }

    /// h̃ˢ(x) for x in element t.
    pub fn eval(&self, mesh: &Triangulation, t: usize, x: Point) -> Result<f64> {
        if mesh.id() != self.mesh_id {
            return Err(AfemError::MeshMismatch(
                "weight belongs to another mesh".into(),
            ));
        }
        let w = mesh.skeleton_distance(x, t)?;
        Ok(if self.s <= 0.5 {
            self.h[t].powf(self.s)
        } else {
            self.h[t].sqrt() * w.powf(self.s - 0.5)
        })
    }
}

fn check_refinement(coarse: &Triangulation, r: &Refinement, g: &FemFunction) -> Result<()> {
    if r.prolongation.coarse_id() != coarse.id() {
        return Err(AfemError::MeshMismatch(
            "refinement does not start from this mesh".into(),
        ));
    }
    if g.mesh_id != r.mesh.id() || g.coeffs.len() != r.mesh.n_dofs() {
        return Err(AfemError::MeshMismatch(
            "function does not live on the refined mesh".into(),
        ));
    }
    Ok(())
}

/// ‖h̃^{±s} g‖_{L²(Ω)} for g piecewise linear on a refinement of `coarse`.
pub fn weighted_l2_norm(
    coarse: &Triangulation,
    refinement: &Refinement,
    s: f64,
    g: &FemFunction,
    sign: i32,
) -> Result<f64> {
    if sign != 1 && sign != -1 {
        return invalid(format!("sign must be 1 or -1, got {sign}"));
    }
    if !(s > 0.0 && s < 1.0) {
        return invalid(format!("s must lie in (0,1), got {s}"));
    }
    check_refinement(coarse, refinement, g)?;
    let fine = &refinement.mesh;
    let vals = g.vertex_values(fine)?;
    let sg = sign as f64;
    let mut total = 0.0;
    for (t, e) in fine.elements().iter().enumerate() {
        let gv = [vals[e[0]], vals[e[1]], vals[e[2]]];
        if gv.iter().all(|&v| v == 0.0) {
            continue;
        }
        let par = refinement.parent[t];
        let h = coarse.mesh_size(par);
        if s <= 0.5 {
            let l2 = fine.area(t) / 6.0
                * (gv[0] * gv[0]
                    + gv[1] * gv[1]
                    + gv[2] * gv[2]
                    + gv[0] * gv[1]
                    + gv[1] * gv[2]
                    + gv[2] * gv[0]);
            total += h.powf(2.0 * s * sg) * l2;
        } else {
            let sub = fine.element_points(t);
            let area2 = 2.0 * signed_area(sub[0], sub[1], sub[2]);
            let q = |x: Point| {
                let l1 = signed_area(x, sub[2], sub[0]) * 2.0 / area2;
                let l2 = signed_area(x, sub[0], sub[1]) * 2.0 / area2;
                let v = gv[0] * (1.0 - l1 - l2) + gv[1] * l1 + gv[2] * l2;
                v * v
            };
            let alpha = sg * (2.0 * s - 1.0);
            let int = weighted_subtriangle_integral(
                coarse.element_points(par),
                sub,
                alpha,
                q,
                SUBTRIANGLE_POINTS,
            )?;
            total += h.powf(sg) * int;
        }
    }
    Ok(total.sqrt())
}

/// I_ℓ g: coarse function with g's values at the coarse interior nodes.
pub fn nodal_interpolation(
    coarse: &Triangulation,
    refinement: &Refinement,
    g: &FemFunction,
) -> Result<FemFunction> {
    check_refinement(coarse, refinement, g)?;
    let vals = g.vertex_values(&refinement.mesh)?;
    let coeffs = coarse.interior_nodes().iter().map(|&v| vals[v]).collect();
    FemFunction::new(coarse, coeffs)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum AveragingChoice {
    /// Lowest-id element containing the node.
    #[default]
    LowestId,
}

/// J_ℓ g with biorthogonal duals (3/|T|)(3λ_i - λ_j - λ_k) on the averaging
/// element of each node.
pub fn scott_zhang(
    coarse: &Triangulation,
    refinement: &Refinement,
    g: &FemFunction,
    choice: AveragingChoice,
) -> Result<FemFunction> {
    check_refinement(coarse, refinement, g)?;
    let fine = &refinement.mesh;
    let vals = g.vertex_values(fine)?;
    let mut sons = vec![Vec::new(); coarse.n_elements()];
    for (t, &p) in refinement.parent.iter().enumerate() {
        sons[p].push(t);
    }
    let ve = coarse.vertex_elements();
    let mut coeffs = Vec::with_capacity(coarse.n_dofs());
    for &v in coarse.interior_nodes() {
        let tz = match choice {
            AveragingChoice::LowestId => ve[v][0],
        };
        let e = coarse.elements()[tz];
        let i = e
            .iter()
            .position(|&w| w == v)
            .expect("node belongs to its element");
        let p = coarse.element_points(tz);
        let area = signed_area(p[0], p[1], p[2]);
        let (a, b) = (p[(i + 1) % 3], p[(i + 2) % 3]);
        let dual = |x: Point| 3.0 / area.abs() * (4.0 * signed_area(x, a, b) / area - 1.0);
        let mut c = 0.0;
        for &t in &sons[tz] {
            let fe = fine.elements()[t];
            let fp = fine.element_points(t);
            let mut sum = 0.0;
            for k in 0..3 {
                let (k1, k2) = (k, (k + 1) % 3);
                let m = [0.5 * (fp[k1][0] + fp[k2][0]), 0.5 * (fp[k1][1] + fp[k2][1])];
                sum += dual(m) * 0.5 * (vals[fe[k1]] + vals[fe[k2]]);
            }
            c += fine.area(t) / 3.0 * sum;
        }
        coeffs.push(c);
    }
    FemFunction::new(coarse, coeffs)
}

/// Knuth's MMIX linear congruential generator mapped to [-1, 1).
#[derive(Clone, Debug)]
pub struct Lcg(u64);

impl Lcg {
    pub fn new(seed: u64) -> Self {
        Lcg(seed)
    }

    pub fn next_f64(&mut self) -> f64 {
        self.0 = self
            .0
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        (self.0 >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EquivalenceReport {
    pub level: usize,
    pub r_min: f64,
    pub r_max: f64,
    pub q_min: f64,
    pub q_max: f64,
    pub samples_used: usize,
    pub samples_skipped: usize,
}

/// Ratios r(v) = ‖h̃^{-s}(1-I)v‖/‖h̃^{-s}(1-J)v‖ over pseudo-random fine
/// functions and q(z) = |||φ_z|||/‖h̃^{-s}φ_z‖ over the new fine hats.
pub fn equivalence_report(
    coarse: &Triangulation,
    s: f64,
    sample_count: usize,
) -> Result<EquivalenceReport> {
    if sample_count == 0 {
        return invalid("sample_count must be at least 1");
    }
    let r = uniform_refine(coarse)?;
    let fine = &r.mesh;
    let mut rng = Lcg::new(SAMPLE_SEED);
    let (mut r_min, mut r_max) = (f64::INFINITY, 0.0f64);
    let mut used = 0;
    for _ in 0..sample_count {
        let v = FemFunction::new(fine, (0..fine.n_dofs()).map(|_| rng.next_f64()).collect())?;
        let iv = nodal_interpolation(coarse, &r, &v)?.prolong(&r.prolongation)?;
        let jv =
            scott_zhang(coarse, &r, &v, AveragingChoice::LowestId)?.prolong(&r.prolongation)?;
        let sub = |w: &FemFunction| FemFunction {
            mesh_id: v.mesh_id,
            coeffs: v.coeffs.iter().zip(&w.coeffs).map(|(a, b)| a - b).collect(),
        };
        let num = weighted_l2_norm(coarse, &r, s, &sub(&iv), -1)?;
        let den = weighted_l2_norm(coarse, &r, s, &sub(&jv), -1)?;
        if num < 1e-14 && den < 1e-14 {
            continue;
        }
        if den == 0.0 {
            return Err(AfemError::Numerical(
                "Scott-Zhang remainder vanishes alone".into(),
            ));
        }
        let ratio = num / den;
        r_min = r_min.min(ratio);
        r_max = r_max.max(ratio);
        used += 1;
    }
    if used == 0 {
        return Err(AfemError::Numerical("all samples are degenerate".into()));
    }
    let a = assemble_stiffness(fine, s, DIAG_QUAD_ORDER)?;
    let (mut q_min, mut q_max) = (f64::INFINITY, 0.0f64);
    for vtx in coarse.n_vertices()..fine.n_vertices() {
        if let Some(z) = fine.dof(vtx) {
            let hat = FemFunction::hat(fine, z)?;
            let q = a.get(z, z).sqrt() / weighted_l2_norm(coarse, &r, s, &hat, -1)?;
            q_min = q_min.min(q);
            q_max = q_max.max(q);
        }
    }
    Ok(EquivalenceReport {
        level: coarse.level(),
        r_min,
        r_max,
        q_min,
        q_max,
        samples_used: used,
        samples_skipped: sample_count - used,
    })
}

pub const DIAG_CSV_HEADER: &str = "quantity,min,max,mesh_level";

pub fn reports_to_csv(reports: &[EquivalenceReport]) -> String {
    let mut out = String::from(DIAG_CSV_HEADER);
    out.push('\n');
    for r in reports {
        out.push_str(&format!("r,{},{},{}\n", r.r_min, r.r_max, r.level));
        out.push_str(&format!("q,{},{},{}\n", r.q_min, r.q_max, r.level));
    }
    out
}

pub fn write_diag_csv(reports: &[EquivalenceReport], path: &Path) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(reports_to_csv(reports).as_bytes())?;
    Ok(())
}
