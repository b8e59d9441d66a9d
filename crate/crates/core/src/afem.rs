//! The adaptive loop SOLVE, ESTIMATE, MARK, REFINE and its bookkeeping.

use std::io::Write;
use std::path::{Path, PathBuf};

use statrs::function::gamma::gamma;

use crate::assembly::{
    assemble_load, assemble_stiffness_with, AssemblyOptions, EnergyMatrix, FemFunction,
};
use crate::error::{invalid, AfemError, Result};
use crate::estimator::{doerfler_mark, two_level, IndicatorSet, LOAD_DEGREE};
use crate::mesh::{
    build_initial_mesh, common_elements, refine, DomainKind, DomainSpec, Point, Prolongation,
    Triangulation,
};
use crate::solver::{solve_spd_with, SolverOptions};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Strategy {
    Adaptive,
    Uniform,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Rhs {
    /// f = 2^{2s} Γ(1+s)², the load of u = (1-|x|²)^s on the unit disc.
    DiscExact,
    Constant(f64),
}

impl Rhs {
    pub fn value(&self, s: f64) -> f64 {
        match *self {
            Rhs::DiscExact => 4f64.powf(s) * gamma(1.0 + s).powi(2),
            Rhs::Constant(c) => c,
        }
    }
}

#[derive(Clone, Debug)]
pub struct AfemConfig {
    pub domain: DomainSpec,
    pub s: f64,
    pub theta: f64,
    pub strategy: Strategy,
    pub max_dofs: usize,
    /// Upper bound for max_dofs and for the size of any solved level.
    pub dof_cap: usize,
    pub quad_order: usize,
    pub solver_tol: f64,
    pub rhs: Rhs,
    /// Squared energy of the exact solution, if known by other means.
    pub reference_energy: Option<f64>,
    /// Also solve on every uniform refinement and record the verification
    /// quantities of [`LevelCheck`].
    pub verify: bool,
    pub dump_mesh: Option<PathBuf>,
}

impl AfemConfig {
    pub fn new(domain: DomainSpec, s: f64) -> Self {
        AfemConfig {
            domain,
            s,
            theta: 0.3,
            strategy: Strategy::Adaptive,
            max_dofs: 3000,
            dof_cap: 6000,
            quad_order: 7,
            solver_tol: 1e-10,
            rhs: Rhs::DiscExact,
            reference_energy: None,
            verify: false,
            dump_mesh: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.domain.validate()?;
        if !(self.s > 0.0 && self.s < 1.0) {
            return invalid(format!("s must lie in (0,1), got {}", self.s));
        }
        if !(self.theta > 0.0 && self.theta <= 1.0) {
            return invalid(format!("theta must lie in (0,1], got {}", self.theta));
        }
        if self.max_dofs > self.dof_cap {
            return invalid(format!(
                "max_dofs {} exceeds the cap {}",
                self.max_dofs, self.dof_cap
            ));
        }
        if self.quad_order == 0 {
            return invalid("quad_order must be at least 1");
        }
        if !(self.solver_tol > 0.0 && self.solver_tol < 1.0) {
            return invalid("solver_tol must lie in (0,1)");
        }
        Ok(())
    }

    /// Reference energy: given explicitly, or closed form for the disc problem.
    pub fn reference(&self) -> Option<f64> {
        self.reference_energy
            .or(match (self.domain.kind, self.rhs) {
                (DomainKind::UnitCircle, Rhs::DiscExact) => Some(exact_energy_disc(self.s)),
                _ => None,
            })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LevelRecord {
    pub level: usize,
    pub dofs: usize,
    pub n_elements: usize,
    pub energy_sq: f64,
    pub estimator: Option<f64>,
    pub error: Option<f64>,
    pub n_marked: usize,
}

/// Verification quantities of one level.
#[derive(Clone, Debug, Default)]
pub struct LevelCheck {
    pub level: usize,
    /// max_z |τ(φ_z) - |a(u_fine - u, φ_z)|/|||φ_z|||| / max_z τ(φ_z).
    pub identity_deviation: Option<f64>,
    pub shape_regularity: f64,
    pub conforming: bool,
    /// max |A - Aᵀ| / max |A| over the level matrix and, when verifying,
    /// the fine matrix.
    pub asymmetry: f64,
    /// h(parent)/h(son) over the refinement leaving this level.
    pub son_ratio: Option<(f64, f64)>,
    pub marked_have_four_sons: Option<bool>,
    /// τ_ℓ(M_ℓ) / |||u_{ℓ+1} - u_ℓ|||.
    pub efficiency: Option<f64>,
    /// |||u_{ℓ+1} - u_ℓ||| / τ_ℓ(T_ℓ∖T_{ℓ+1}).
    pub reliability: Option<f64>,
    /// Smallest diameter of elements with a boundary edge over the largest
    /// diameter of elements without boundary vertices.
    pub boundary_concentration: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct StabilityCheck {
    pub coarse_level: usize,
    pub fine_level: usize,
    pub common_elements: usize,
    /// |τ_ℓ(T_m∩T_ℓ) - τ_m(T_m∩T_ℓ)|.
    pub indicator_gap: f64,
    /// |||u_m - u_ℓ|||.
    pub energy_gap: f64,
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub records: Vec<LevelRecord>,
    pub checks: Vec<LevelCheck>,
    pub stability: Vec<StabilityCheck>,
    pub reference_energy: Option<f64>,
    pub initial_shape_regularity: f64,
}

/// |||u|||² = 2^{2s} Γ(1+s)² 2π/(2s+2) for u = (1-|x|²)^s on the unit disc.
pub fn exact_energy_disc(s: f64) -> f64 {
    4f64.powf(s) * gamma(1.0 + s).powi(2) * 2.0 * std::f64::consts::PI / (2.0 * s + 2.0)
}

/// sqrt(reference - energy), clamping radicands in [-1e-10, 0).
pub fn energy_error(energy_sq: f64, reference_energy_sq: f64) -> Result<f64> {
    let r = reference_energy_sq - energy_sq;
    if r < -1e-10 {
        return Err(AfemError::Numerical(format!(
            "discrete energy {energy_sq} exceeds the reference {reference_energy_sq}"
        )));
    }
    Ok(r.max(0.0).sqrt())
}

/// Aitken Δ² limit of the last three energies, with the last increment.
pub fn extrapolate_energy(energies: &[f64]) -> Result<(f64, f64)> {
    if energies.len() < 3 {
        return invalid("extrapolation needs at least three levels");
    }
    let inc: Vec<f64> = energies.windows(2).map(|w| w[1] - w[0]).collect();
    if inc.iter().any(|&d| d < 0.0) && inc.iter().any(|&d| d > 0.0) {
        return Err(AfemError::Numerical(
            "energy sequence is not monotone".into(),
        ));
    }
    let n = energies.len();
    let (e0, e1, e2) = (energies[n - 3], energies[n - 2], energies[n - 1]);
    let (d1, d2) = (e1 - e0, e2 - e1);
    let last = d2.abs();
    if d2 - d1 == 0.0 {
        return Ok((e2, last));
    }
    Ok((e2 - d2 * d2 / (d2 - d1), last))
}

/// Least-squares slope of log(error) against log(dofs) over the last
/// `window` records with positive error.
pub fn fit_rate(records: &[LevelRecord], window: usize) -> Result<f64> {
    let pts: Vec<(f64, f64)> = records
        .iter()
        .filter_map(|r| match r.error {
            Some(e) if e > 0.0 && r.dofs > 0 => Some((r.dofs as f64, e)),
            _ => None,
        })
        .collect();
    let start = pts.len().saturating_sub(window);
    fit_slope(&pts[start..])
}

/// Least-squares slope of log(y) against log(x).
pub fn fit_slope(pts: &[(f64, f64)]) -> Result<f64> {
    if pts.len() < 2 {
        return invalid("rate fit needs at least two points");
    }
    let n = pts.len() as f64;
    let lx: Vec<f64> = pts.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return invalid("rate fit needs distinct dof counts");
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    Ok(sxy / sxx)
}

struct History {
    level: usize,
    mesh: Triangulation,
    u: FemFunction,
    tau: IndicatorSet,
    /// Prolongation to the next level.
    to_next: Option<Prolongation>,
    tau_marked: f64,
    tau_refined: f64,
}

fn energy_gap(a: &EnergyMatrix, u: &FemFunction, pu: &FemFunction) -> f64 {
    let d: Vec<f64> = u
        .coeffs
        .iter()
        .zip(&pu.coeffs)
        .map(|(x, y)| x - y)
        .collect();
    let ad = a.apply(&d);
    ad.iter()
        .zip(&d)
        .map(|(x, y)| x * y)
        .sum::<f64>()
        .max(0.0)
        .sqrt()
}

fn relative_asymmetry(a: &EnergyMatrix) -> f64 {
    let m = a.max_abs();
    if m == 0.0 {
        0.0
    } else {
        a.max_asymmetry() / m
    }
}

fn boundary_concentration(mesh: &Triangulation) -> Option<f64> {
    let mut bmin = f64::INFINITY;
    let mut imax = 0.0f64;
    for (t, e) in mesh.elements().iter().enumerate() {
        let nb = e.iter().filter(|&&v| mesh.is_boundary(v)).count();
        if nb >= 2 {
            bmin = bmin.min(mesh.diameter(t));
        } else if nb == 0 {
            imax = imax.max(mesh.diameter(t));
        }
    }
    (bmin.is_finite() && imax > 0.0).then(|| bmin / imax)
}

/// Runs the adaptive (or uniform) loop until the number of dofs exceeds
/// `max_dofs`.
pub fn run(cfg: &AfemConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let fval = cfg.rhs.value(cfg.s);
    let f = move |_: Point| fval;
    let reference = cfg.reference();
    let opts = AssemblyOptions::new(cfg.quad_order);
    let solver = SolverOptions {
        tol: cfg.solver_tol,
        ..SolverOptions::default()
    };
    let mut mesh = build_initial_mesh(&cfg.domain)?;
    let gamma0 = mesh.shape_regularity();
    if let Some(dir) = &cfg.dump_mesh {
        std::fs::create_dir_all(dir)?;
    }
    let mut out = RunOutput {
        records: Vec::new(),
        checks: Vec::new(),
        stability: Vec::new(),
        reference_energy: reference,
        initial_shape_regularity: gamma0,
    };
    let mut history: Vec<History> = Vec::new();

    for level in 0.. {
        let n = mesh.n_dofs();
        if n > cfg.dof_cap {
            return Err(AfemError::InvalidInput(format!(
                "level {level} has {n} dofs, above the cap {}",
                cfg.dof_cap
            )));
        }
        if let Some(dir) = &cfg.dump_mesh {
            mesh.write_text(&dir.join(format!("mesh_level_{level}.txt")))?;
        }
        let a = assemble_stiffness_with(&mesh, cfg.s, &opts)?;
        let b = assemble_load(&mesh, f, LOAD_DEGREE);
        let u = solve_spd_with(&a, &b, &solver)?;
        let energy: f64 = b.iter().zip(&u.coeffs).map(|(x, y)| x * y).sum();
        let error = reference.map(|r| energy_error(energy, r)).transpose()?;
        let mut check = LevelCheck {
            level,
            shape_regularity: mesh.shape_regularity(),
            conforming: mesh.check_conforming().is_ok(),
            asymmetry: relative_asymmetry(&a),
            boundary_concentration: boundary_concentration(&mesh),
            ..LevelCheck::default()
        };

        // ratios involving earlier levels, measured on this mesh
        let mut chain: Option<Prolongation> = None;
        let mut gaps = Vec::new();
        for (back, h) in history.iter().rev().enumerate() {
            let p = h.to_next.as_ref().expect("earlier levels were refined");
            chain = Some(match chain {
                None => p.clone(),
                Some(c) => p.then(&c)?,
            });
            let pu = h.u.prolong(chain.as_ref().unwrap())?;
            let gap = energy_gap(&a, &u, &pu);
            if back == 0 {
                if let Some(prev) = out.checks.last_mut() {
                    prev.efficiency = Some(h.tau_marked / gap);
                    prev.reliability = Some(gap / h.tau_refined);
                }
            }
            gaps.push(gap);
        }

        let mut record = LevelRecord {
            level,
            dofs: n,
            n_elements: mesh.n_elements(),
            energy_sq: energy,
            estimator: None,
            error,
            n_marked: 0,
        };
        if n > cfg.max_dofs {
            out.records.push(record);
            out.checks.push(check);
            break;
        }

        let est = two_level(&mesh, &u, &f, cfg.s, &opts)?;
        record.estimator = Some(est.indicators.total());
        if cfg.verify {
            // the identity is exact, so the deviation measures the fine residual
            let fine_solver = SolverOptions {
                direct_limit: usize::MAX,
                tol: solver.tol.min(1e-13),
                ..solver
            };
            let uf = solve_spd_with(&est.a_fine, &est.b_fine, &fine_solver)?;
            let pu = u.prolong(&est.refinement.prolongation)?;
            let d: Vec<f64> = uf
                .coeffs
                .iter()
                .zip(&pu.coeffs)
                .map(|(x, y)| x - y)
                .collect();
            let ad = est.a_fine.apply(&d);
            let fine = &est.refinement.mesh;
            // relative to the largest indicator: nodes with τ near zero only
            // carry the cancellation error of b - A P u
            let (mut gap, mut scale) = (0.0f64, 0.0f64);
            for &(v, tau) in &est.indicators.node_tau {
                let z = fine.dof(v).expect("new interior node");
                let proj = ad[z].abs() / est.a_fine.get(z, z).sqrt();
                gap = gap.max((tau - proj).abs());
                scale = scale.max(tau.max(proj));
            }
            let dev = if scale > 0.0 { gap / scale } else { 0.0 };
            check.identity_deviation = Some(dev);
            check.asymmetry = check.asymmetry.max(relative_asymmetry(&est.a_fine));
        }

        // stability against earlier indicator sets
        for (h, &gap) in history.iter().rev().zip(&gaps) {
            let common = common_elements(&h.mesh, &mesh);
            let tl: f64 = common
                .iter()
                .map(|&(t, _)| h.tau.element_tau_sq[t])
                .sum::<f64>()
                .sqrt();
            let tm: f64 = common
                .iter()
                .map(|&(_, t)| est.indicators.element_tau_sq[t])
                .sum::<f64>()
                .sqrt();
            out.stability.push(StabilityCheck {
                coarse_level: h.level,
                fine_level: level,
                common_elements: common.len(),
                indicator_gap: (tl - tm).abs(),
                energy_gap: gap,
            });
        }

        let marked: Vec<usize> = match cfg.strategy {
            Strategy::Uniform => (0..mesh.n_elements()).collect(),
            Strategy::Adaptive => {
                let m = doerfler_mark(&est.indicators, cfg.theta)?;
                if m.converged {
                    out.records.push(record);
                    out.checks.push(check);
                    break;
                }
                m.elements
            }
        };
        record.n_marked = marked.len();
        let next = refine(&mesh, &marked)?;
        let mut rmin = f64::INFINITY;
        let mut rmax = 0.0f64;
        for (son, &par) in next.parent.iter().enumerate() {
            let r = (mesh.area(par) / next.mesh.area(son)).sqrt();
            rmin = rmin.min(r);
            rmax = rmax.max(r);
        }
        check.son_ratio = Some((rmin, rmax));
        check.marked_have_four_sons = Some(marked.iter().all(|&t| next.n_sons[t] == 4));

        let refined: Vec<usize> = (0..mesh.n_elements())
            .filter(|&t| next.n_sons[t] > 1)
            .collect();
        let tau_marked = crate::estimator::subset_total(&est.indicators, &marked)?;
        let tau_refined = crate::estimator::subset_total(&est.indicators, &refined)?;
        out.records.push(record);
        out.checks.push(check);
        history.push(History {
            level,
            mesh: mesh.clone(),
            u,
            tau: est.indicators,
            to_next: Some(next.prolongation),
            tau_marked,
            tau_refined,
        });
        if history.len() > 2 {
            history.remove(0);
        }
        mesh = next.mesh;
    }
    Ok(out)
}

pub const CSV_HEADER: &str = "level,dofs,n_elements,energy_sq,estimator,error,n_marked";

pub fn records_to_csv(records: &[LevelRecord]) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in records {
        s.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.level,
            r.dofs,
            r.n_elements,
            r.energy_sq,
            opt(r.estimator),
            opt(r.error),
            r.n_marked
        ));
    }
    s
}

pub fn write_csv(records: &[LevelRecord], path: &Path) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(records_to_csv(records).as_bytes())?;
    Ok(())
}
