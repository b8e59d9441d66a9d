use std::f64::consts::PI;

use fracafem::afem::{
    energy_error, exact_energy_disc, extrapolate_energy, fit_rate, fit_slope, records_to_csv, run,
    write_csv, AfemConfig, LevelRecord, Rhs, Strategy, CSV_HEADER,
};
use fracafem::mesh::DomainSpec;

#[test]
fn aitken_recovers_a_geometric_limit() {
    let e: Vec<f64> = (0..6).map(|k| 5.0 - 2.0 * 0.5f64.powi(k)).collect();
    let (limit, last) = extrapolate_energy(&e).unwrap();
    assert!((limit - 5.0).abs() < 1e-13);
    assert!((last - (e[5] - e[4])).abs() < 1e-15);
    // constant increments have no Δ² correction
    assert_eq!(extrapolate_energy(&[1.0, 1.0, 1.0]).unwrap().0, 1.0);
    assert!(extrapolate_energy(&[1.0, 2.0]).is_err());
    assert!(extrapolate_energy(&[1.0, 2.0, 1.5]).is_err());
}

#[test]
fn slopes_of_power_laws() {
    let pts: Vec<(f64, f64)> = [10.0, 40.0, 160.0, 640.0]
        .iter()
        .map(|&n| (n, 3.0 * f64::powf(n, -0.25)))
        .collect();
    assert!((fit_slope(&pts).unwrap() + 0.25).abs() < 1e-13);
    assert!(fit_slope(&pts[..1]).is_err());
    assert!(fit_slope(&[(2.0, 1.0), (2.0, 3.0)]).is_err());
    let rec = |dofs: usize, error: Option<f64>| LevelRecord {
        level: 0,
        dofs,
        n_elements: 0,
        energy_sq: 0.0,
        estimator: None,
        error,
        n_marked: 0,
    };
    let records = vec![
        rec(0, Some(1.0)),
        rec(5, None),
        rec(10, Some(10f64.powf(-0.5))),
        rec(100, Some(0.1)),
        rec(1000, Some(1000f64.powf(-0.5))),
    ];
    assert!((fit_rate(&records, 4).unwrap() + 0.5).abs() < 1e-13);
}

#[test]
fn energy_error_clamps_roundoff_only() {
    assert_eq!(energy_error(2.0, 2.0).unwrap(), 0.0);
    assert_eq!(energy_error(2.0 + 1e-12, 2.0).unwrap(), 0.0);
    assert!((energy_error(1.0, 5.0).unwrap() - 2.0).abs() < 1e-15);
    assert!(energy_error(2.1, 2.0).is_err());
}

#[test]
fn disc_energy_closed_form() {
    assert!((exact_energy_disc(0.5) - PI * PI / 3.0).abs() < 1e-13);
    assert!(exact_energy_disc(0.25) < exact_energy_disc(0.75));
}

#[test]
fn invalid_configurations() {
    let base = AfemConfig::new(DomainSpec::unit_circle(8), 0.5);
    assert!(base.validate().is_ok());
    let mut c = base.clone();
    c.s = 1.0;
    assert!(c.validate().is_err());
    let mut c = base.clone();
    c.theta = 0.0;
    assert!(c.validate().is_err());
    let mut c = base.clone();
    c.max_dofs = c.dof_cap + 1;
    assert!(c.validate().is_err());
    let mut c = base.clone();
    c.quad_order = 0;
    assert!(c.validate().is_err());
    let mut c = base.clone();
    c.domain = DomainSpec::unit_circle(4);
    assert!(run(&c).is_err());
}

fn small(strategy: Strategy, s: f64) -> AfemConfig {
    let mut c = AfemConfig::new(DomainSpec::unit_circle(8), s);
    c.strategy = strategy;
    c.max_dofs = 60;
    c
}

#[test]
fn uniform_run_on_the_disc() {
    let out = run(&small(Strategy::Uniform, 0.5)).unwrap();
    let dofs: Vec<usize> = out.records.iter().map(|r| r.dofs).collect();
    assert_eq!(dofs, [1, 9, 49, 225]);
    let exact = exact_energy_disc(0.5);
    assert_eq!(out.reference_energy, Some(exact));
    for w in out.records.windows(2) {
        assert!(w[1].error.unwrap() < w[0].error.unwrap());
        assert!(w[0].estimator.is_some());
    }
    let last = out.records.last().unwrap();
    assert!(last.estimator.is_none() && last.n_marked == 0);
    for r in &out.records {
        let e = r.error.unwrap();
        assert!((e * e + r.energy_sq - exact).abs() < 1e-10 * exact);
    }
    for c in &out.checks {
        assert!(c.conforming && c.asymmetry <= 1e-13);
    }
}

#[test]
fn adaptive_run_is_deterministic_and_verifiable() {
    let mut cfg = small(Strategy::Adaptive, 0.75);
    cfg.max_dofs = 120;
    cfg.verify = true;
    let a = run(&cfg).unwrap();
    let b = run(&cfg).unwrap();
    let (ca, cb) = (records_to_csv(&a.records), records_to_csv(&b.records));
    assert_eq!(ca, cb);
    assert!(ca.starts_with(CSV_HEADER));
    assert_eq!(ca.lines().count(), a.records.len() + 1);
    for w in a.records.windows(2) {
        assert!(w[0].n_marked > 0 && w[1].dofs > w[0].dofs);
    }
    for c in &a.checks {
        if let Some(d) = c.identity_deviation {
            assert!(d <= 1e-9, "level {}: {d}", c.level);
        }
        if let Some(f) = c.marked_have_four_sons {
            assert!(f);
        }
        if let Some((lo, hi)) = c.son_ratio {
            assert!(lo >= 1.0 - 1e-12 && hi <= 2.0 + 1e-12);
        }
    }
    assert!(a.checks.iter().any(|c| c.efficiency.is_some()));
    let dir = std::env::temp_dir().join(format!("afem-loop-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("run.csv");
    write_csv(&a.records, &path).unwrap();
    assert_eq!(std::fs::read_to_string(&path).unwrap(), ca);
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn constant_load_on_the_lshape_has_no_reference() {
    let mut cfg = AfemConfig::new(DomainSpec::l_shape(), 0.5);
    cfg.rhs = Rhs::Constant(1.0);
    cfg.max_dofs = 40;
    let out = run(&cfg).unwrap();
    assert_eq!(out.reference_energy, None);
    assert_eq!(out.records[0].dofs, 0);
    assert!(out.records.iter().all(|r| r.error.is_none()));
    assert!(out
        .records
        .windows(2)
        .all(|w| w[1].energy_sq >= w[0].energy_sq));
}
