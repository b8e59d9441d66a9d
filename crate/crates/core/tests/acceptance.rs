//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs the full disc experiments (about 10 minutes on one core).
//! Failing criteria are reported but only make the process fail when
//! `ACCEPTANCE_STRICT` is set.

#[allow(dead_code)]
mod common;

use std::process::ExitCode;
use std::time::Instant;

use common::{identical_oracle, p1_tri};
use fracafem::afem::{
    exact_energy_disc, extrapolate_energy, fit_rate, records_to_csv, run, AfemConfig, RunOutput,
    Strategy,
};
use fracafem::assembly::assemble_stiffness;
use fracafem::diagnostics::{equivalence_report, Lcg};
use fracafem::estimator::doerfler_mark_values;
use fracafem::mesh::{
    build_initial_mesh, uniform_refine, DomainSpec, Triangulation, DEFAULT_CIRCLE_SEGMENTS,
};
use fracafem::quadrature::exterior_tail;
use fracafem::quadrature::pairs::identical_integral;
use fracafem::quadrature::TouchingRules;

const MAX_DOFS: usize = 3000;
const ORDER: usize = 7;
const THETA: f64 = 0.3;

struct Report {
    lines: Vec<(usize, bool, String)>,
}

impl Report {
    fn add(&mut self, id: usize, name: &str, ok: bool, detail: String) {
        println!(
            "criterion {id:>2} {}  {name}: {detail}",
            if ok { "PASS" } else { "FAIL" }
        );
        self.lines.push((id, ok, detail));
    }
}

fn disc_config(s: f64, strategy: Strategy) -> AfemConfig {
    let mut c = AfemConfig::new(DomainSpec::unit_circle(DEFAULT_CIRCLE_SEGMENTS), s);
    c.strategy = strategy;
    c.theta = THETA;
    c.max_dofs = MAX_DOFS;
    c.quad_order = ORDER;
    c.verify = true;
    c
}

struct Run {
    s: f64,
    strategy: Strategy,
    out: RunOutput,
}

impl Run {
    fn label(&self) -> String {
        let kind = if self.strategy == Strategy::Uniform {
            "uniform"
        } else {
            "adaptive"
        };
        format!("{kind} s={}", self.s)
    }
}

fn run_disc(s: f64, strategy: Strategy) -> Run {
    let t = Instant::now();
    let out = run(&disc_config(s, strategy)).expect("disc run");
    let n = out.records.last().map_or(0, |r| r.dofs);
    eprintln!(
        "  run {strategy:?} s={s}: {} levels, last N={n}, {:.0?}",
        out.records.len(),
        t.elapsed()
    );
    Run { s, strategy, out }
}

fn rates(report: &mut Report, runs: &[Run]) {
    let mut ok = true;
    let mut parts = Vec::new();
    for r in runs {
        let slope = fit_rate(&r.out.records, 4).expect("rate fit");
        let band = if r.strategy == Strategy::Uniform {
            (-0.32, -0.18)
        } else {
            (-0.58, -0.42)
        };
        let inside = slope >= band.0 && slope <= band.1;
        ok &= inside;
        parts.push(format!(
            "{} slope {slope:.3} in [{}, {}]",
            r.label(),
            band.0,
            band.1
        ));
    }
    report.add(1, "convergence rates", ok, parts.join("; "));
}

fn energies(report: &mut Report, uniform: &[&Run]) {
    let mut ok = true;
    let mut parts = Vec::new();
    for r in uniform {
        let e: Vec<f64> = r.out.records.iter().map(|x| x.energy_sq).collect();
        let (limit, _) = extrapolate_energy(&e).expect("extrapolation");
        let exact = exact_energy_disc(r.s);
        let rel = (limit - exact).abs() / exact;
        ok &= rel <= 0.01;
        parts.push(format!(
            "s={} extrapolated {limit:.5} exact {exact:.5} rel {rel:.2e}",
            r.s
        ));
    }
    report.add(2, "energy reproduction", ok, parts.join("; "));
}

fn identity(report: &mut Report, runs: &[Run]) {
    let mut worst = 0.0f64;
    let mut levels = 0;
    for r in runs {
        for c in &r.out.checks {
            if let Some(d) = c.identity_deviation {
                worst = worst.max(d);
                levels += 1;
            }
        }
    }
    report.add(
        3,
        "estimator identity",
        levels > 0 && worst <= 1e-9,
        format!("max deviation {worst:.2e} over {levels} levels"),
    );
}

fn theorem_constants(report: &mut Report, adaptive: &[&Run]) {
    let mut ok = true;
    let mut parts = Vec::new();
    for r in adaptive {
        let eff: Vec<f64> = r.out.checks.iter().filter_map(|c| c.efficiency).collect();
        let rel: Vec<f64> = r.out.checks.iter().filter_map(|c| c.reliability).collect();
        let max = |v: &[f64]| v.iter().copied().fold(0.0, f64::max);
        let growth = |v: &[f64]| {
            let h = v.len() / 2;
            max(&v[h..]) / max(&v[..h])
        };
        let (me, mr) = (max(&eff), max(&rel));
        let (ge, gr) = (growth(&eff), growth(&rel));
        let stab = r
            .out
            .stability
            .iter()
            .map(|p| p.indicator_gap / p.energy_gap)
            .fold(0.0, f64::max);
        let pairs = r.out.stability.len();
        ok &= eff.len() >= 2
            && me <= 50.0
            && mr <= 50.0
            && ge <= 2.0
            && gr <= 2.0
            && pairs >= 3
            && stab <= 50.0;
        parts.push(format!(
            "{}: efficiency max {me:.2} (half growth {ge:.2}), reliability max {mr:.2} (half growth {gr:.2}), stability max {stab:.2} over {pairs} pairs",
            r.label()
        ));
    }
    report.add(
        4,
        "efficiency, reliability, stability",
        ok,
        parts.join("; "),
    );
}

fn quadrature(report: &mut Report) {
    const REF: [[f64; 2]; 3] = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
    let rules = TouchingRules::new(ORDER);
    let mut worst = 0.0f64;
    for s in [0.25, 0.5, 0.75] {
        let oracle = identical_oracle(&p1_tri(REF), s, 2);
        let m = identical_integral(REF, s, &rules);
        let scale = oracle.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        for (x, y) in m.iter().flatten().zip(&oracle) {
            worst = worst.max((x - y).abs() / scale);
        }
    }
    let tail = exterior_tail([0.0, 0.0], [0.0, 0.0], 1.0, 0.5).expect("tail");
    let terr = (tail - 2.0 * std::f64::consts::PI).abs();
    report.add(
        5,
        "quadrature oracle and tail",
        worst <= 1e-3 && terr <= 1e-8,
        format!("identical pair max rel {worst:.2e}; exterior tail error {terr:.1e}"),
    );
}

fn lshape(level: usize) -> Triangulation {
    let mut m = build_initial_mesh(&DomainSpec::l_shape()).expect("l-shape");
    for _ in 0..level {
        m = uniform_refine(&m).expect("refine").mesh;
    }
    m
}

fn matrices(report: &mut Report, runs: &[Run]) {
    let mut ok = true;
    let mut parts = Vec::new();
    for level in [0, 1] {
        let coarse = lshape(level);
        let r = uniform_refine(&coarse).expect("refine");
        let mut worst = 0.0f64;
        for s in [0.25, 0.5, 0.75] {
            let ac = assemble_stiffness(&coarse, s, ORDER).expect("assembly");
            let af = assemble_stiffness(&r.mesh, s, ORDER).expect("assembly");
            let pap = af.restrict(&r.prolongation).expect("restriction");
            for i in 0..ac.dim() {
                for j in 0..ac.dim() {
                    worst = worst.max((pap[(i, j)] - ac.get(i, j)).abs() / ac.max_abs());
                }
            }
        }
        ok &= worst <= 1e-3;
        parts.push(format!(
            "nesting T{level}->T{} ({} coarse dofs) {worst:.2e}",
            level + 1,
            coarse.n_dofs()
        ));
    }
    let asym = runs
        .iter()
        .flat_map(|r| &r.out.checks)
        .map(|c| c.asymmetry)
        .fold(0.0, f64::max);
    ok &= asym <= 1e-13;
    // every level and fine matrix went through a Cholesky factorization
    parts.push(format!(
        "max relative asymmetry {asym:.1e}; all factorizations succeeded"
    ));
    report.add(6, "nesting, symmetry, definiteness", ok, parts.join("; "));
}

fn nvb(report: &mut Report, runs: &[Run]) {
    let mut conforming = true;
    let mut four = true;
    let (mut rmin, mut rmax) = (f64::INFINITY, 0.0f64);
    let mut gamma_ratio = 0.0f64;
    for r in runs {
        let g0 = r.out.initial_shape_regularity;
        for c in &r.out.checks {
            conforming &= c.conforming;
            four &= c.marked_have_four_sons.unwrap_or(true);
            if let Some((lo, hi)) = c.son_ratio {
                rmin = rmin.min(lo);
                rmax = rmax.max(hi);
            }
            gamma_ratio = gamma_ratio.max(c.shape_regularity / g0);
        }
    }
    let ratio_ok = rmin >= 1.0 - 1e-12 && rmax <= 2.0 + 1e-12;
    report.add(
        7,
        "newest vertex bisection",
        conforming && four && ratio_ok && gamma_ratio <= 2.0,
        format!(
            "conforming {conforming}; son ratio in [{rmin:.3}, {rmax:.3}]; max gamma/gamma0 {gamma_ratio:.3} (bound 2); four sons {four}"
        ),
    );
}

fn doerfler(report: &mut Report) {
    let mut rng = Lcg::new(2024);
    let mut bad = 0;
    let mut cases = 0;
    while cases < 1000 {
        let n = 1 + ((rng.next_f64() + 1.0) * 6.0) as usize % 12;
        let v: Vec<f64> = (0..n)
            .map(|_| ((rng.next_f64() + 1.0) * 50.0).floor())
            .collect();
        if v.iter().all(|&x| x == 0.0) {
            continue;
        }
        cases += 1;
        let total: f64 = v.iter().sum();
        for theta in [0.1, 0.3, 0.5, 0.9] {
            let greedy = doerfler_mark_values(&v, theta)
                .expect("marking")
                .elements
                .len();
            let mut best = n;
            for mask in 0u32..(1 << n) {
                let k = mask.count_ones() as usize;
                if k < best
                    && (0..n)
                        .filter(|i| mask >> i & 1 == 1)
                        .map(|i| v[i])
                        .sum::<f64>()
                        >= theta * total
                {
                    best = k;
                }
            }
            bad += usize::from(greedy != best);
        }
    }
    report.add(
        8,
        "Doerfler minimality",
        bad == 0,
        format!("{cases} vectors x 4 theta, {bad} mismatches"),
    );
}

fn diagnostics(report: &mut Report) {
    let mut ok = true;
    let mut parts = Vec::new();
    for s in [0.25, 0.5, 0.75] {
        let mut prev_spread: Option<f64> = None;
        let mut text = Vec::new();
        for level in 0..=2 {
            let rep = equivalence_report(&lshape(level), s, 20).expect("equivalence report");
            let inside = |a: f64, b: f64| a >= 0.01 && b <= 100.0;
            ok &= inside(rep.r_min, rep.r_max) && inside(rep.q_min, rep.q_max);
            let spread = rep.r_max / rep.r_min;
            if let Some(p) = prev_spread {
                ok &= spread <= 2.0 * p;
            }
            prev_spread = Some(spread);
            text.push(format!(
                "L{level} r [{:.3}, {:.3}] q [{:.3}, {:.3}]",
                rep.r_min, rep.r_max, rep.q_min, rep.q_max
            ));
        }
        parts.push(format!("s={s}: {}", text.join(", ")));
    }
    report.add(9, "interpolation equivalence", ok, parts.join("; "));
}

fn determinism(report: &mut Report, reference: &Run) {
    let again = run(&disc_config(reference.s, reference.strategy)).expect("repeat run");
    let (a, b) = (
        records_to_csv(&reference.out.records),
        records_to_csv(&again.records),
    );
    report.add(
        10,
        "determinism",
        a == b,
        format!(
            "{} repeated, {} CSV bytes identical: {}",
            reference.label(),
            a.len(),
            a == b
        ),
    );
}

fn main() -> ExitCode {
    let start = Instant::now();
    let mut report = Report { lines: Vec::new() };
    eprintln!("acceptance: disc runs to {MAX_DOFS} dofs");
    let runs = vec![
        run_disc(0.25, Strategy::Uniform),
        run_disc(0.75, Strategy::Uniform),
        run_disc(0.25, Strategy::Adaptive),
        run_disc(0.75, Strategy::Adaptive),
    ];
    let half = run_disc(0.5, Strategy::Uniform);

    rates(&mut report, &runs);
    energies(&mut report, &[&runs[0], &half, &runs[1]]);
    identity(&mut report, &runs);
    theorem_constants(&mut report, &[&runs[2], &runs[3]]);
    quadrature(&mut report);
    matrices(&mut report, &runs);
    nvb(&mut report, &runs);
    doerfler(&mut report);
    diagnostics(&mut report);
    determinism(&mut report, &runs[0]);

    let failed: Vec<String> = report
        .lines
        .iter()
        .filter(|l| !l.1)
        .map(|l| l.0.to_string())
        .collect();
    println!(
        "acceptance: {}/{} criteria pass{} ({:.0?})",
        report.lines.len() - failed.len(),
        report.lines.len(),
        if failed.is_empty() {
            String::new()
        } else {
            format!(", failing: {}", failed.join(", "))
        },
        start.elapsed()
    );
    if !failed.is_empty() && std::env::var_os("ACCEPTANCE_STRICT").is_some() {
        return ExitCode::FAILURE;
    }
    ExitCode::SUCCESS
}
