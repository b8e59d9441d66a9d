//! Integrals weighted by a power of the distance to an element's boundary.

use crate::error::{invalid, Result};
use crate::mesh::{signed_area, Point};
use crate::quadrature::rules::{gauss_jacobi, gauss_legendre};

fn incenter(p: &[Point; 3]) -> (Point, f64) {
    let l = |a: Point, b: Point| (a[0] - b[0]).hypot(a[1] - b[1]);
    let (a, b, c) = (l(p[1], p[2]), l(p[2], p[0]), l(p[0], p[1]));
    let per = a + b + c;
    let i = [
        (a * p[0][0] + b * p[1][0] + c * p[2][0]) / per,
        (a * p[0][1] + b * p[1][1] + c * p[2][1]) / per,
    ];
    let r = 2.0 * signed_area(p[0], p[1], p[2]).abs() / per;
    (i, r)
}

/// Distance from x to the line through a, b (unsigned).
fn line_dist(x: Point, a: Point, b: Point) -> f64 {
    2.0 * signed_area(a, b, x).abs() / (a[0] - b[0]).hypot(a[1] - b[1])
}

fn incenter_rule(p: &[Point; 3], alpha: f64, g: &impl Fn(Point) -> f64, n: usize) -> Result<f64> {
    let (inc, r) = incenter(p);
    let (tx, tw) = gauss_jacobi(n, alpha, 1.0)?;
    let (sx, sw) = gauss_legendre(n);
    let mut total = 0.0;
    for k in 0..3 {
        let (a, b) = (p[k], p[(k + 1) % 3]);
        let len = (b[0] - a[0]).hypot(b[1] - a[1]);
        let mut sum = 0.0;
        for (&t, &wt) in tx.iter().zip(&tw) {
            for (&sg, &ws) in sx.iter().zip(&sw) {
                let e = [a[0] + sg * (b[0] - a[0]), a[1] + sg * (b[1] - a[1])];
                let x = [(1.0 - t) * e[0] + t * inc[0], (1.0 - t) * e[1] + t * inc[1]];
                sum += wt * ws * g(x);
            }
        }
        total += len * r.powf(1.0 + alpha) * sum;
    }
    Ok(total)
}

/// ∫_T dist(x, ∂T)^α g(x) dx for α > -1 and bounded g.
///
/// The element is split at its incenter so that the distance is affine on
/// each piece; Gauss-Jacobi rules absorb the power. The rule is doubled
/// until successive values agree to 1e-7 relative.
pub fn weighted_element_integral(
    p: [Point; 3],
    alpha: f64,
    g: impl Fn(Point) -> f64,
) -> Result<f64> {
    if !(alpha > -1.0) {
        return invalid(format!("weight exponent must exceed -1, got {alpha}"));
    }
    if signed_area(p[0], p[1], p[2]) == 0.0 {
        return invalid("degenerate element");
    }
    let mut n = 6;
    let mut prev = incenter_rule(&p, alpha, &g, n)?;
    loop {
        n *= 2;
        let cur = incenter_rule(&p, alpha, &g, n)?;
        if (cur - prev).abs() <= 1e-7 * cur.abs().max(1e-300) || n >= 96 {
            return Ok(cur);
        }
        prev = cur;
    }
}

/// Clips a convex polygon to the half-plane left of a→b.
fn clip(poly: &[Point], a: Point, b: Point) -> Vec<Point> {
    let side = |x: Point| (b[0] - a[0]) * (x[1] - a[1]) - (b[1] - a[1]) * (x[0] - a[0]);
    let mut out = Vec::with_capacity(poly.len() + 1);
    for i in 0..poly.len() {
        let (p, q) = (poly[i], poly[(i + 1) % poly.len()]);
        let (sp, sq) = (side(p), side(q));
        if sp >= 0.0 {
            out.push(p);
        }
        if (sp >= 0.0) != (sq >= 0.0) {
            let t = sp / (sp - sq);
            out.push([p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]);
        }
    }
    out
}

/// ∫_τ d^α q over a triangle on which d is affine and nonnegative, with
/// vertex values `d`. Vertices where d vanishes get a Duffy collapse.
fn triangle_power(
    tri: [Point; 3],
    d: [f64; 3],
    alpha: f64,
    q: &impl Fn(Point) -> f64,
    n: usize,
) -> Result<f64> {
    let area = signed_area(tri[0], tri[1], tri[2]).abs();
    if area == 0.0 {
        return Ok(0.0);
    }
    let scale = d.iter().fold(0.0f64, |m, &v| m.max(v));
    let zero: Vec<usize> = (0..3).filter(|&k| d[k] <= 1e-13 * scale).collect();
    // apex of the collapse and the opposite pair
    let apex = match zero.len() {
        1 => zero[0],
        2 => 3 - zero[0] - zero[1],
        _ => 0,
    };
    let (i1, i2) = ((apex + 1) % 3, (apex + 2) % 3);
    let (p0, p1, p2) = (tri[apex], tri[i1], tri[i2]);
    let (d0, d1, d2) = (d[apex], d[i1], d[i2]);
    let (sx, sw) = gauss_legendre(n);
    // x = p0 + ρ (p1 - p0 + σ (p2 - p1)); dx = 2|τ| ρ dρ dσ
    let point = |rho: f64, sg: f64| {
        [
            p0[0] + rho * (p1[0] - p0[0] + sg * (p2[0] - p1[0])),
            p0[1] + rho * (p1[1] - p0[1] + sg * (p2[1] - p1[1])),
        ]
    };
    let mut sum = 0.0;
    match zero.len() {
        2 => {
            // d = d0 (1 - ρ)
            let (rx, rw) = gauss_jacobi(n, 1.0, alpha)?;
            for (&rho, &wr) in rx.iter().zip(&rw) {
                for (&sg, &ws) in sx.iter().zip(&sw) {
                    sum += wr * ws * q(point(rho, sg));
                }
            }
            sum *= d0.powf(alpha);
        }
        1 => {
            // d = ρ δ(σ)
            let (rx, rw) = gauss_jacobi(n, 1.0 + alpha, 0.0)?;
            for (&rho, &wr) in rx.iter().zip(&rw) {
                for (&sg, &ws) in sx.iter().zip(&sw) {
                    let delta = d1 + sg * (d2 - d1);
                    sum += wr * ws * delta.powf(alpha) * q(point(rho, sg));
                }
            }
        }
        _ => {
            for (&rho, &wr) in sx.iter().zip(&sw) {
                for (&sg, &ws) in sx.iter().zip(&sw) {
                    let dv = d0 + rho * (d1 - d0 + sg * (d2 - d1));
                    sum += wr * ws * rho * dv.powf(alpha) * q(point(rho, sg));
                }
            }
        }
    }
    Ok(2.0 * area * sum)
}

/// ∫_{sub} dist(x, ∂T)^α q(x) dx for a triangle `sub` contained in T and q
/// smooth on `sub` (exact up to rounding for polynomial q of low degree).
pub fn weighted_subtriangle_integral(
    t: [Point; 3],
    sub: [Point; 3],
    alpha: f64,
    q: impl Fn(Point) -> f64,
    n: usize,
) -> Result<f64> {
    if !(alpha > -1.0) {
        return invalid(format!("weight exponent must exceed -1, got {alpha}"));
    }
    let ccw = |p: [Point; 3]| {
        if signed_area(p[0], p[1], p[2]) < 0.0 {
            [p[0], p[2], p[1]]
        } else {
            p
        }
    };
    let (t, sub) = (ccw(t), ccw(sub));
    let (inc, _) = incenter(&t);
    let mut total = 0.0;
    for k in 0..3 {
        let (a, b) = (t[k], t[(k + 1) % 3]);
        let mut poly = sub.to_vec();
        for (u, v) in [(a, b), (b, inc), (inc, a)] {
            if poly.len() < 3 {
                break;
            }
            poly = clip(&poly, u, v);
        }
        if poly.len() < 3 {
            continue;
        }
        for i in 1..poly.len() - 1 {
            let tri = [poly[0], poly[i], poly[i + 1]];
            let d = [
                line_dist(tri[0], a, b),
                line_dist(tri[1], a, b),
                line_dist(tri[2], a, b),
            ];
            total += triangle_power(tri, d, alpha, &q, n)?;
        }
    }
    Ok(total)
}
