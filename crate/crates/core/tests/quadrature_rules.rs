mod common;

use std::f64::consts::PI;

use common::{gamma_lanczos, legendre01};
use fracafem::afem::exact_energy_disc;
use fracafem::assembly::fractional_constant;
use fracafem::quadrature::rules::{triangle_rule, triangle_three_point};
use fracafem::quadrature::{
    exterior_tail, gauss_jacobi, gauss_legendre, triangle_collapsed, FluxTable,
};

#[test]
fn gauss_legendre_matches_independent_nodes() {
    for n in [1, 2, 5, 12, 24] {
        let (x, w) = gauss_legendre(n);
        let (mut ox, ow) = legendre01(n);
        let mut pairs: Vec<(f64, f64)> = x.iter().copied().zip(w.iter().copied()).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut opairs: Vec<(f64, f64)> = ox.drain(..).zip(ow).collect();
        opairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        for (a, b) in pairs.iter().zip(&opairs) {
            assert!(
                (a.0 - b.0).abs() < 1e-13 && (a.1 - b.1).abs() < 1e-13,
                "n={n}: {a:?} vs {b:?}"
            );
        }
    }
}

#[test]
fn gauss_jacobi_integrates_weighted_polynomials() {
    // ∫_0^1 x^a (1-x)^b x^k dx = B(a+k+1, b+1)
    let beta = |p: f64, q: f64| gamma_lanczos(p) * gamma_lanczos(q) / gamma_lanczos(p + q);
    for (a, b) in [(0.5, 0.0), (1.0, 0.5), (-0.5, 1.5), (0.0, -0.5)] {
        let n = 6;
        let (x, w) = gauss_jacobi(n, a, b).unwrap();
        for k in 0..2 * n {
            let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(k as i32)).sum();
            let exact = beta(a + k as f64 + 1.0, b + 1.0);
            assert!(
                (q - exact).abs() < 1e-12 * exact.abs().max(1.0),
                "a={a} b={b} k={k}: {q} vs {exact}"
            );
        }
    }
    assert!(gauss_jacobi(4, -1.0, 0.0).is_err());
}

#[test]
fn triangle_rules_integrate_monomials() {
    // ∫_{ref} x^i y^j = i! j! / (i+j+2)!
    let f = |k: usize| (1..=k).product::<usize>() as f64;
    let check = |points: &[[f64; 2]], weights: &[f64], degree: usize| {
        for i in 0..=degree {
            for j in 0..=degree - i {
                let q: f64 = points
                    .iter()
                    .zip(weights)
                    .map(|(p, w)| w * p[0].powi(i as i32) * p[1].powi(j as i32))
                    .sum();
                let exact = f(i) * f(j) / f(i + j + 2);
                assert!((q - exact).abs() < 1e-14, "i={i} j={j}: {q} vs {exact}");
            }
        }
    };
    for n in 1..=8 {
        let r = triangle_collapsed(n);
        check(&r.points, &r.weights, r.degree);
        assert_eq!(r.degree, 2 * n - 2);
    }
    for d in 1..=10 {
        let r = triangle_rule(d);
        check(&r.points, &r.weights, d);
    }
    let r = triangle_three_point();
    check(&r.points, &r.weights, 2);
}

#[test]
fn exterior_tail_at_the_center() {
    let v = exterior_tail([0.0, 0.0], [0.0, 0.0], 1.0, 0.5).unwrap();
    assert!((v - 2.0 * PI).abs() < 1e-8, "{v}");
    for s in [0.25, 0.75] {
        let v = exterior_tail([0.0, 0.0], [0.0, 0.0], 2.0, s).unwrap();
        let exact = PI / s * 2f64.powf(-2.0 * s);
        assert!((v - exact).abs() < 1e-10 * exact);
    }
}

/// (1/2s) ∫_0^{2π} ρ(θ)^{-2s} dθ with ρ the distance to the boundary of a
/// star-shaped region along direction θ, by composite Gauss panels.
fn polar_oracle(s: f64, rho: impl Fn(f64) -> f64, breaks: &[f64]) -> f64 {
    let (x, w) = legendre01(30);
    let mut sum = 0.0;
    for b in breaks.windows(2) {
        let sub = 64;
        let h = (b[1] - b[0]) / sub as f64;
        for k in 0..sub {
            for (&t, &wt) in x.iter().zip(&w) {
                sum += wt * h * rho(b[0] + h * (k as f64 + t)).powf(-2.0 * s);
            }
        }
    }
    sum / (2.0 * s)
}

#[test]
fn exterior_tail_off_center_matches_polar_oracle() {
    let x = [0.3, -0.45];
    for s in [0.25, 0.5, 0.75] {
        let rho = |th: f64| {
            let dn = x[0] * th.cos() + x[1] * th.sin();
            -dn + (1.0 - (x[0] * x[0] + x[1] * x[1]) + dn * dn).sqrt()
        };
        let oracle = polar_oracle(s, rho, &[0.0, 2.0 * PI]);
        let v = exterior_tail(x, [0.0, 0.0], 1.0, s).unwrap();
        assert!((v - oracle).abs() < 1e-9 * oracle, "s={s}: {v} vs {oracle}");
    }
    assert!(exterior_tail([1.0, 0.0], [0.0, 0.0], 1.0, 0.5).is_err());
    assert!(exterior_tail([0.0, 0.0], [0.0, 0.0], 1.0, 1.0).is_err());
}

#[test]
fn polygon_complement_matches_polar_oracle() {
    // unit square (0,1)^2, counter-clockwise
    let c = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
    let segs: Vec<([f64; 2], [f64; 2])> = (0..4).map(|k| (c[k], c[(k + 1) % 4])).collect();
    for s in [0.25, 0.5, 0.75] {
        let table = FluxTable::new(s);
        for x in [[0.5, 0.5], [0.1, 0.2], [0.97, 0.5], [0.999, 0.001]] {
            // distance along θ to the square boundary
            let rho = |th: f64| {
                let (dx, dy) = (th.cos(), th.sin());
                let tx = if dx > 0.0 {
                    (1.0 - x[0]) / dx
                } else if dx < 0.0 {
                    -x[0] / dx
                } else {
                    f64::INFINITY
                };
                let ty = if dy > 0.0 {
                    (1.0 - x[1]) / dy
                } else if dy < 0.0 {
                    -x[1] / dy
                } else {
                    f64::INFINITY
                };
                tx.min(ty)
            };
            let mut breaks: Vec<f64> = c
                .iter()
                .map(|p| (p[1] - x[1]).atan2(p[0] - x[0]).rem_euclid(2.0 * PI))
                .collect();
            breaks.extend([0.0, 2.0 * PI]);
            breaks.sort_by(f64::total_cmp);
            let oracle = polar_oracle(s, rho, &breaks);
            let v = table.polygon_complement(x, &segs);
            assert!(
                (v - oracle).abs() < 1e-10 * oracle,
                "s={s} x={x:?}: {v} vs {oracle}"
            );
        }
    }
}

#[test]
fn special_values() {
    assert!((exact_energy_disc(0.5) - PI * PI / 3.0).abs() < 1e-13);
    for s in [0.1, 0.25, 0.5, 0.75, 0.9] {
        let e = 4f64.powf(s) * gamma_lanczos(1.0 + s).powi(2) * 2.0 * PI / (2.0 * s + 2.0);
        assert!((exact_energy_disc(s) - e).abs() < 1e-12 * e);
        let c = 4f64.powf(s) * s * gamma_lanczos(1.0 + s) / (PI * gamma_lanczos(1.0 - s));
        assert!((fractional_constant(s).unwrap() - c).abs() < 1e-12 * c);
    }
    // C(2, 1/2) = 1 / (2π)
    assert!((fractional_constant(0.5).unwrap() - 0.5 / PI).abs() < 1e-14);
    assert!(fractional_constant(0.0).is_err() && fractional_constant(1.0).is_err());
}
