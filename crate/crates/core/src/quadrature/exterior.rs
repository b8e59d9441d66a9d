//! Integrals of the kernel over the exterior of a ball or polygon.

use std::f64::consts::PI;

use crate::error::{invalid, Result};
use crate::mesh::Point;
use crate::quadrature::rules::{gauss_jacobi, gauss_legendre};

/// ∫_{R²∖B} |x-y|^{-2-2s} dy for x strictly inside the ball B(center, radius).
pub fn exterior_tail(x: Point, center: Point, radius: f64, s: f64) -> Result<f64> {
    if !(s > 0.0 && s < 1.0) {
        return invalid(format!("s must lie in (0,1), got {s}"));
    }
    let d = [x[0] - center[0], x[1] - center[1]];
    let d2 = d[0] * d[0] + d[1] * d[1];
    if !(radius > 0.0) || d2 >= radius * radius {
        return invalid("point must lie strictly inside the ball");
    }
    let (gx, gw) = gauss_legendre(24);
    let panels = 32;
    let h = 2.0 * PI / panels as f64;
    let mut sum = 0.0;
    for p in 0..panels {
        for (&t, &w) in gx.iter().zip(&gw) {
            let th = h * (p as f64 + t);
            let dn = d[0] * th.cos() + d[1] * th.sin();
            let r = -dn + (radius * radius - d2 + dn * dn).sqrt();
            sum += w * h * r.powf(-2.0 * s);
        }
    }
    Ok(sum / (2.0 * s))
}

/// Chebyshev interpolant on [0, b] in the variable x.
#[derive(Clone, Debug)]
struct Cheb {
    coef: Vec<f64>,
    b: f64,
}

impl Cheb {
    fn fit(b: f64, deg: usize, f: impl Fn(f64) -> f64) -> Self {
        let n = deg + 1;
        let vals: Vec<f64> = (0..n)
            .map(|k| {
                let t = (PI * (k as f64 + 0.5) / n as f64).cos();
                f(0.5 * b * (t + 1.0))
            })
            .collect();
        let coef = (0..n)
            .map(|j| {
                let c: f64 = (0..n)
                    .map(|k| vals[k] * (PI * j as f64 * (k as f64 + 0.5) / n as f64).cos())
                    .sum();
                c * 2.0 / n as f64 * if j == 0 { 0.5 } else { 1.0 }
            })
            .collect();
        Cheb { coef, b }
    }

    #[inline]
    fn eval(&self, x: f64) -> f64 {
        let t = 2.0 * x / self.b - 1.0;
        let (mut b1, mut b2) = (0.0, 0.0);
        for &c in self.coef.iter().skip(1).rev() {
            let b0 = 2.0 * t * b1 - b2 + c;
            b2 = b1;
            b1 = b0;
        }
        t * b1 - b2 + self.coef[0]
    }
}

/// Flux integrals of V(z) = z |z|^{-2-2s} through straight segments.
///
/// With G(φ) = ∫_0^φ cos^{2s}, the flux through a segment at signed distance
/// h from x is sign(h) |h|^{-2s} (G(φ₂) - G(φ₁)). G is stored as φ·S(φ²) on
/// [0, π/4] and through Gc(ε) = ∫_0^ε sin^{2s} = ε^{2s+1} R(ε²) beyond.
#[derive(Clone, Debug)]
pub struct FluxTable {
    s: f64,
    g_half: f64,
    small: Cheb,
    comp: Cheb,
}

impl FluxTable {
    pub fn new(s: f64) -> Self {
        let q = PI / 4.0;
        let (gx, gw) = gauss_legendre(40);
        let (jx, jw) = gauss_jacobi(40, 2.0 * s, 0.0).expect("valid Jacobi exponents");
        // S(φ²) = ∫_0^1 cos^{2s}(φu) du
        let small = Cheb::fit(q * q, 22, |p2| {
            let p = p2.sqrt();
            gx.iter()
                .zip(&gw)
                .map(|(&u, &w)| w * (p * u).cos().powf(2.0 * s))
                .sum()
        });
        // R(ε²) = ∫_0^1 u^{2s} (sin(εu)/(εu))^{2s} du
        let comp = Cheb::fit(q * q, 22, |e2| {
            let e = e2.sqrt();
            jx.iter()
                .zip(&jw)
                .map(|(&u, &w)| {
                    let z = e * u;
                    let sinc = if z == 0.0 { 1.0 } else { z.sin() / z };
                    w * sinc.powf(2.0 * s)
                })
                .sum()
        });
        let g_half = PI.sqrt() * statrs::function::gamma::gamma(s + 0.5)
            / (2.0 * statrs::function::gamma::gamma(s + 1.0));
        FluxTable {
            s,
            g_half,
            small,
            comp,
        }
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    #[inline]
    fn g_small(&self, phi: f64) -> f64 {
        phi * self.small.eval(phi * phi)
    }

    #[inline]
    fn gc(&self, eps: f64) -> f64 {
        eps.powf(2.0 * self.s + 1.0) * self.comp.eval(eps * eps)
    }

    /// G(atan(t/a)) for a > 0, split into (half-angle count, remainder):
    /// value = k * G(π/2) + rem with k ∈ {-1, 0, 1}.
    #[inline]
    fn g_atan(&self, t: f64, a: f64) -> (f64, f64) {
        if t.abs() <= a {
            (0.0, self.g_small((t / a).atan()))
        } else {
            let sg = t.signum();
            (sg, -sg * self.gc((a / t.abs()).atan()))
        }
    }

    /// ∫ over the segment p→q of (y-x)·n |y-x|^{-2-2s} dy, with n the unit
    /// normal to the right of p→q.
    pub fn segment_flux(&self, x: Point, p: Point, q: Point) -> f64 {
        let d = [q[0] - p[0], q[1] - p[1]];
        let len = d[0].hypot(d[1]);
        let tau = [d[0] / len, d[1] / len];
        let n = [tau[1], -tau[0]];
        let px = [p[0] - x[0], p[1] - x[1]];
        let h = px[0] * n[0] + px[1] * n[1];
        if h == 0.0 {
            return 0.0;
        }
        let a = h.abs();
        let t1 = px[0] * tau[0] + px[1] * tau[1];
        let t2 = t1 + len;
        let (k1, r1) = self.g_atan(t1, a);
        let (k2, r2) = self.g_atan(t2, a);
        let diff = (k2 - k1) * self.g_half + (r2 - r1);
        h.signum() * a.powf(-2.0 * self.s) * diff
    }

    /// ∫_{R²∖D} |x-y|^{-2-2s} dy for a counter-clockwise polygon D with x
    /// inside D, given as a list of directed boundary segments.
    pub fn polygon_complement(&self, x: Point, segments: &[(Point, Point)]) -> f64 {
        let sum: f64 = segments
            .iter()
            .map(|&(p, q)| self.segment_flux(x, p, q))
            .sum();
        sum / (2.0 * self.s)
    }
}
