//! Interaction integrals of element pairs for the kernel |x-y|^{-2-2s}.
//!
//! For touching pairs the integrand, written in relative coordinates, is
//! homogeneous of degree -2s. The radial variable of the Duffy collapse is
//! integrated in closed form and the remaining angular integrals are smooth.

use crate::error::{invalid, Result};
use crate::mesh::{signed_area, Point};
use crate::quadrature::rules::{gauss_legendre, points_per_axis, triangle_collapsed};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PairConfig {
    Identical,
    /// Local indices in T and T' of the two shared vertices, same order.
    SharedEdge {
        t: [usize; 2],
        tp: [usize; 2],
    },
    /// Local index in T and T' of the shared vertex.
    SharedVertex {
        t: usize,
        tp: usize,
    },
    Disjoint,
}

/// Classifies a pair of elements given as vertex id triples.
pub fn classify_pair(t: [usize; 3], tp: [usize; 3]) -> PairConfig {
    let mut shared: Vec<(usize, usize)> = Vec::with_capacity(3);
    for (i, v) in t.iter().enumerate() {
        if let Some(j) = tp.iter().position(|w| w == v) {
            shared.push((i, j));
        }
    }
    match shared.len() {
        3 => PairConfig::Identical,
        2 => PairConfig::SharedEdge {
            t: [shared[0].0, shared[1].0],
            tp: [shared[0].1, shared[1].1],
        },
        1 => PairConfig::SharedVertex {
            t: shared[0].0,
            tp: shared[0].1,
        },
        _ => PairConfig::Disjoint,
    }
}

/// Local interaction matrix over the basis functions of T ∪ T'.
///
/// Rows 0..3 are the local vertices of T; `tp_index[j]` is the row of the
/// local vertex j of T'.
#[derive(Clone, Debug, PartialEq)]
pub struct PairMatrix {
    pub dim: usize,
    pub tp_index: [usize; 3],
    pub values: [[f64; 6]; 6],
}

impl PairMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i][j]
    }
}

/// Precomputed reference rules for touching pairs at one order.
#[derive(Clone, Debug)]
pub struct TouchingRules {
    pub n: usize,
    identical: Vec<([f64; 2], f64)>,
    edge: Vec<([f64; 3], f64)>,
    vertex: Vec<([f64; 4], f64)>,
    disjoint: Vec<([f64; 2], f64)>,
}

impl TouchingRules {
    pub fn new(order: usize) -> Self {
        let n = points_per_axis(order.max(1));
        let tri = triangle_collapsed(n);

        let hex = [
            [1.0, 0.0],
            [0.0, 1.0],
            [-1.0, 1.0],
            [-1.0, 0.0],
            [0.0, -1.0],
            [1.0, -1.0],
        ];
        // 3n points: the angular integrand is steep on flat elements
        let ni = 3 * n;
        let (x, w) = gauss_legendre(ni);
        let mut identical = Vec::with_capacity(6 * ni);
        for k in 0..6 {
            let (p, q) = (hex[k], hex[(k + 1) % 6]);
            // |det(p, q - p)| = 1 on every edge
            for i in 0..ni {
                let t = x[i];
                identical.push(([p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])], w[i]));
            }
        }

        let (x, w) = gauss_legendre(n);
        // omega = (a1 - b1, a2, b2) on the four faces of {mu = 1}
        let mut edge = Vec::with_capacity(2 * n * n + 2 * tri.len());
        for (pt, &wt) in tri.points.iter().zip(&tri.weights) {
            edge.push(([pt[0], pt[1], 1.0], wt));
            edge.push(([-pt[0], 1.0, pt[1]], wt));
        }
        for i in 0..n {
            for j in 0..n {
                let (u, v, ww) = (x[i], x[j], w[i] * w[j]);
                edge.push(([u, 1.0 - u, v], ww));
                edge.push(([-u, v, 1.0 - u], ww));
            }
        }

        let mut vertex = Vec::with_capacity(2 * n * tri.len());
        for i in 0..n {
            for (pt, &wt) in tri.points.iter().zip(&tri.weights) {
                let (t, ww) = (x[i], w[i] * wt);
                vertex.push(([t, 1.0 - t, pt[0], pt[1]], ww));
                vertex.push(([pt[0], pt[1], t, 1.0 - t], ww));
            }
        }

        let disjoint = tri
            .points
            .iter()
            .copied()
            .zip(tri.weights.iter().copied())
            .collect();
        TouchingRules {
            n,
            identical,
            edge,
            vertex,
            disjoint,
        }
    }
}

#[inline]
fn kernel(r: [f64; 2], s: f64) -> f64 {
    crate::assembly::kernel2(r[0] * r[0] + r[1] * r[1], s)
}

#[inline]
fn accumulate<const M: usize>(acc: &mut [[f64; M]; M], d: &[f64; M], w: f64) {
    for i in 0..M {
        let wi = w * d[i];
        for j in 0..=i {
            acc[i][j] += wi * d[j];
        }
    }
}

fn symmetrize<const M: usize>(acc: &mut [[f64; M]; M]) {
    for i in 0..M {
        for j in 0..i {
            acc[j][i] = acc[i][j];
        }
    }
}

fn sub(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1]]
}

/// ∬_{T×T} (φ_i(x)-φ_i(y))(φ_j(x)-φ_j(y)) k dx dy for the vertices of T.
pub fn identical_integral(p: [Point; 3], s: f64, rules: &TouchingRules) -> [[f64; 3]; 3] {
    let e = sub(p[1], p[0]);
    let f = sub(p[2], p[0]);
    let area = signed_area(p[0], p[1], p[2]).abs();
    let mut acc = [[0.0; 3]; 3];
    for &(om, w) in &rules.identical {
        let r = [om[0] * e[0] + om[1] * f[0], om[0] * e[1] + om[1] * f[1]];
        let d = [-om[0] - om[1], om[0], om[1]];
        accumulate(&mut acc, &d, w * kernel(r, s));
    }
    let scale = 4.0 * area * area / ((2.0 - 2.0 * s) * (3.0 - 2.0 * s) * (4.0 - 2.0 * s));
    for row in acc.iter_mut() {
        for v in row.iter_mut() {
            *v *= scale;
        }
    }
    symmetrize(&mut acc);
    acc
}

/// Shared edge (q0, q1); T = (q0, q1, q2), T' = (q0, q1, q3).
/// Basis order: q0, q1, q2, q3.
pub fn edge_integral(q: [Point; 4], s: f64, rules: &TouchingRules) -> [[f64; 4]; 4] {
    let e = sub(q[1], q[0]);
    let f = sub(q[2], q[0]);
    let g = sub(q[3], q[0]);
    let a1 = signed_area(q[0], q[1], q[2]).abs();
    let a2 = signed_area(q[0], q[1], q[3]).abs();
    let mut acc = [[0.0; 4]; 4];
    for &(om, w) in &rules.edge {
        let [d, a, b] = om;
        let r = [
            d * e[0] + a * f[0] - b * g[0],
            d * e[1] + a * f[1] - b * g[1],
        ];
        let dv = [-d - a + b, d, a, -b];
        accumulate(&mut acc, &dv, w * kernel(r, s));
    }
    let scale = 4.0 * a1 * a2 / ((3.0 - 2.0 * s) * (4.0 - 2.0 * s));
    for row in acc.iter_mut() {
        for v in row.iter_mut() {
            *v *= scale;
        }
    }
    symmetrize(&mut acc);
    acc
}

/// Shared vertex q0; T = (q0, q1, q2), T' = (q0, q3, q4).
/// Basis order: q0, q1, q2, q3, q4.
pub fn vertex_integral(q: [Point; 5], s: f64, rules: &TouchingRules) -> [[f64; 5]; 5] {
    let e1 = sub(q[1], q[0]);
    let e2 = sub(q[2], q[0]);
    let g1 = sub(q[3], q[0]);
    let g2 = sub(q[4], q[0]);
    let a1 = signed_area(q[0], q[1], q[2]).abs();
    let a2 = signed_area(q[0], q[3], q[4]).abs();
    let mut acc = [[0.0; 5]; 5];
    for &(om, w) in &rules.vertex {
        let [x1, x2, y1, y2] = om;
        let r = [
            x1 * e1[0] + x2 * e2[0] - y1 * g1[0] - y2 * g2[0],
            x1 * e1[1] + x2 * e2[1] - y1 * g1[1] - y2 * g2[1],
        ];
        let dv = [-x1 - x2 + y1 + y2, x1, x2, -y1, -y2];
        accumulate(&mut acc, &dv, w * kernel(r, s));
    }
    let scale = 4.0 * a1 * a2 / (4.0 - 2.0 * s);
    for row in acc.iter_mut() {
        for v in row.iter_mut() {
            *v *= scale;
        }
    }
    symmetrize(&mut acc);
    acc
}

/// Tensor Gauss rule for a pair without common points.
/// Basis order: vertices of T, then vertices of T'.
pub fn disjoint_integral(
    p: [Point; 3],
    pp: [Point; 3],
    s: f64,
    rules: &TouchingRules,
) -> [[f64; 6]; 6] {
    let a1 = signed_area(p[0], p[1], p[2]).abs();
    let a2 = signed_area(pp[0], pp[1], pp[2]).abs();
    let map = |t: &[Point; 3], a: [f64; 2]| -> Point {
        [
            t[0][0] + a[0] * (t[1][0] - t[0][0]) + a[1] * (t[2][0] - t[0][0]),
            t[0][1] + a[0] * (t[1][1] - t[0][1]) + a[1] * (t[2][1] - t[0][1]),
        ]
    };
    let mut acc = [[0.0; 6]; 6];
    for &(a, wa) in &rules.disjoint {
        let x = map(&p, a);
        let la = [1.0 - a[0] - a[1], a[0], a[1]];
        for &(b, wb) in &rules.disjoint {
            let y = map(&pp, b);
            let lb = [1.0 - b[0] - b[1], b[0], b[1]];
            let d = [la[0], la[1], la[2], -lb[0], -lb[1], -lb[2]];
            accumulate(&mut acc, &d, wa * wb * kernel(sub(x, y), s));
        }
    }
    let scale = 4.0 * a1 * a2;
    for row in acc.iter_mut() {
        for v in row.iter_mut() {
            *v *= scale;
        }
    }
    symmetrize(&mut acc);
    acc
}

/// C(2,s)/2 times the pair integral, over the basis functions of T ∪ T'.
pub fn local_pair_matrix(
    t: [Point; 3],
    tp: [Point; 3],
    s: f64,
    config: PairConfig,
    order: usize,
) -> Result<PairMatrix> {
    if !(s > 0.0 && s < 1.0) {
        return invalid(format!("s must lie in (0,1), got {s}"));
    }
    if order == 0 {
        return invalid("quadrature order must be at least 1");
    }
    for tri in [&t, &tp] {
        if signed_area(tri[0], tri[1], tri[2]).abs() <= 0.0 {
            return invalid("degenerate element");
        }
    }
    let c = crate::assembly::fractional_constant(s)? / 2.0;
    let rules = TouchingRules::new(order);
    let mut out = PairMatrix {
        dim: 0,
        tp_index: [0; 3],
        values: [[0.0; 6]; 6],
    };
    // basis order used by the kernels, as (row in output) per kernel index
    match config {
        PairConfig::Identical => {
            let m = identical_integral(t, s, &rules);
            out.dim = 3;
            out.tp_index = [0, 1, 2];
            for i in 0..3 {
                for j in 0..3 {
                    out.values[i][j] = c * m[i][j];
                }
            }
        }
        PairConfig::SharedEdge { t: ti, tp: tpi } => {
            let t3 = 3 - ti[0] - ti[1];
            let tp3 = 3 - tpi[0] - tpi[1];
            let m = edge_integral([t[ti[0]], t[ti[1]], t[t3], tp[tp3]], s, &rules);
            let rows = [ti[0], ti[1], t3, 3];
            out.dim = 4;
            out.tp_index[tpi[0]] = ti[0];
            out.tp_index[tpi[1]] = ti[1];
            out.tp_index[tp3] = 3;
            for i in 0..4 {
                for j in 0..4 {
                    out.values[rows[i]][rows[j]] = c * m[i][j];
                }
            }
        }
        PairConfig::SharedVertex { t: ti, tp: tpi } => {
            let (t1, t2) = ((ti + 1) % 3, (ti + 2) % 3);
            let (p1, p2) = ((tpi + 1) % 3, (tpi + 2) % 3);
            let m = vertex_integral([t[ti], t[t1], t[t2], tp[p1], tp[p2]], s, &rules);
            let rows = [ti, t1, t2, 3, 4];
            out.dim = 5;
            out.tp_index[tpi] = ti;
            out.tp_index[p1] = 3;
            out.tp_index[p2] = 4;
            for i in 0..5 {
                for j in 0..5 {
                    out.values[rows[i]][rows[j]] = c * m[i][j];
                }
            }
        }
        PairConfig::Disjoint => {
            let m = disjoint_integral(t, tp, s, &rules);
            out.dim = 6;
            out.tp_index = [3, 4, 5];
            for i in 0..6 {
                for j in 0..6 {
                    out.values[i][j] = c * m[i][j];
                }
            }
        }
    }
    Ok(out)
}
