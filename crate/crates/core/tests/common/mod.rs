#![allow(dead_code)]

//! Independent reference computations used by several test targets.

pub type Pt = [f64; 2];

/// Gauss-Legendre nodes and weights on [0, 1] by Newton iteration on P_n.
pub fn legendre01(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = Vec::with_capacity(n);
    let mut w = Vec::with_capacity(n);
    for i in 0..n {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x.push(0.5 * (1.0 - z));
        w.push(1.0 / ((1.0 - z * z) * dp * dp));
    }
    (x, w)
}

/// Points (barycentric) and weights of a collapsed tensor rule with total
/// weight 1 on a triangle.
pub fn triangle_rule(n: usize) -> Vec<([f64; 3], f64)> {
    let (x, w) = legendre01(n);
    let mut out = Vec::new();
    for i in 0..n {
        for j in 0..n {
            let a = x[i];
            let b = (1.0 - a) * x[j];
            out.push(([1.0 - a - b, a, b], 2.0 * w[i] * w[j] * (1.0 - a)));
        }
    }
    out
}

#[derive(Clone, Debug)]
pub struct Tri {
    pub p: [Pt; 3],
    /// Values of each basis function at the three vertices.
    pub vals: Vec<[f64; 3]>,
}

fn mid(a: Pt, b: Pt) -> Pt {
    [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]
}

impl Tri {
    pub fn area(&self) -> f64 {
        let p = &self.p;
        0.5 * ((p[1][0] - p[0][0]) * (p[2][1] - p[0][1])
            - (p[1][1] - p[0][1]) * (p[2][0] - p[0][0]))
            .abs()
    }

    fn diam(&self) -> f64 {
        let d = |a: Pt, b: Pt| (a[0] - b[0]).hypot(a[1] - b[1]);
        d(self.p[0], self.p[1])
            .max(d(self.p[1], self.p[2]))
            .max(d(self.p[2], self.p[0]))
    }

    fn centroid(&self) -> Pt {
        [
            (self.p[0][0] + self.p[1][0] + self.p[2][0]) / 3.0,
            (self.p[0][1] + self.p[1][1] + self.p[2][1]) / 3.0,
        ]
    }

    /// Red refinement into four similar children.
    pub fn children(&self) -> [Tri; 4] {
        let p = self.p;
        let m = [mid(p[1], p[2]), mid(p[2], p[0]), mid(p[0], p[1])];
        let vm = |v: &[f64; 3]| {
            [
                0.5 * (v[1] + v[2]),
                0.5 * (v[2] + v[0]),
                0.5 * (v[0] + v[1]),
            ]
        };
        let mv: Vec<[f64; 3]> = self.vals.iter().map(vm).collect();
        let make = |q: [Pt; 3], f: &dyn Fn(&[f64; 3], &[f64; 3]) -> [f64; 3]| Tri {
            p: q,
            vals: self.vals.iter().zip(&mv).map(|(v, m)| f(v, m)).collect(),
        };
        [
            make([p[0], m[2], m[1]], &|v, m| [v[0], m[2], m[1]]),
            make([m[2], p[1], m[0]], &|v, m| [m[2], v[1], m[0]]),
            make([m[1], m[0], p[2]], &|v, m| [m[1], m[0], v[2]]),
            make([m[0], m[1], m[2]], &|_, m| [m[0], m[1], m[2]]),
        ]
    }

    fn touches(&self, o: &Tri) -> bool {
        let tol = 1e-14 * self.diam().max(o.diam());
        self.p.iter().any(|a| {
            o.p.iter()
                .any(|b| (a[0] - b[0]).abs() <= tol && (a[1] - b[1]).abs() <= tol)
        })
    }
}

fn gap(a: &Tri, b: &Tri) -> f64 {
    let ca = a.centroid();
    let cb = b.centroid();
    (ca[0] - cb[0]).hypot(ca[1] - cb[1]) - 0.5 * (a.diam() + b.diam())
}

struct Oracle {
    s: f64,
    rule: Vec<([f64; 3], f64)>,
    m: usize,
}

impl Oracle {
    fn gauss(&self, a: &Tri, b: &Tri, out: &mut [f64]) {
        let (aa, ab) = (a.area(), b.area());
        let m = self.m;
        let mut d = vec![0.0; m];
        for (la, wa) in &self.rule {
            let x = [
                la[0] * a.p[0][0] + la[1] * a.p[1][0] + la[2] * a.p[2][0],
                la[0] * a.p[0][1] + la[1] * a.p[1][1] + la[2] * a.p[2][1],
            ];
            for (lb, wb) in &self.rule {
                let y = [
                    lb[0] * b.p[0][0] + lb[1] * b.p[1][0] + lb[2] * b.p[2][0],
                    lb[0] * b.p[0][1] + lb[1] * b.p[1][1] + lb[2] * b.p[2][1],
                ];
                let r2 = (x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2);
                let k = wa * wb * aa * ab * r2.powf(-1.0 - self.s);
                for i in 0..m {
                    let (va, vb) = (&a.vals[i], &b.vals[i]);
                    d[i] = la[0] * va[0] + la[1] * va[1] + la[2] * va[2]
                        - lb[0] * vb[0]
                        - lb[1] * vb[1]
                        - lb[2] * vb[2];
                }
                for i in 0..m {
                    for j in 0..m {
                        out[i * m + j] += k * d[i] * d[j];
                    }
                }
            }
        }
    }

    /// Pair integral with touching sub-pairs below `depth` dropped.
    fn pair(&self, a: &Tri, b: &Tri, depth: usize, out: &mut [f64]) {
        if a.touches(b) {
            if depth == 0 {
                return;
            }
            for ca in a.children().iter() {
                for cb in b.children().iter() {
                    self.pair(ca, cb, depth - 1, out);
                }
            }
        } else if gap(a, b) < 0.5 * a.diam().max(b.diam()) {
            for ca in a.children().iter() {
                for cb in b.children().iter() {
                    self.pair(ca, cb, depth, out);
                }
            }
        } else {
            self.gauss(a, b, out);
        }
    }
}

fn richardson(r: &[Vec<f64>; 3], s: f64) -> Vec<f64> {
    let q1 = 2f64.powf(3.0 - 2.0 * s);
    let q2 = 2f64.powf(4.0 - 2.0 * s);
    let step = |lo: &Vec<f64>, hi: &Vec<f64>, q: f64| -> Vec<f64> {
        lo.iter()
            .zip(hi)
            .map(|(l, h)| (q * h - l) / (q - 1.0))
            .collect()
    };
    let a = step(&r[0], &r[1], q1);
    let b = step(&r[1], &r[2], q1);
    step(&a, &b, q2)
}

/// ∬_{A×B} (φ_i(x)-φ_i(y))(φ_j(x)-φ_j(y)) |x-y|^{-2-2s} for touching or
/// disjoint A ≠ B, by subdivision towards the common points and
/// extrapolation in the subdivision depth.
pub fn pair_oracle(a: &Tri, b: &Tri, s: f64, depth: usize) -> Vec<f64> {
    let m = a.vals.len();
    let o = Oracle {
        s,
        rule: triangle_rule(7),
        m,
    };
    let mut r: [Vec<f64>; 3] = [vec![0.0; m * m], vec![0.0; m * m], vec![0.0; m * m]];
    for (k, out) in r.iter_mut().enumerate() {
        o.pair(a, b, depth + k, out);
    }
    richardson(&r, s)
}

/// ∬_{T×T} for linear basis functions of one triangle, from the
/// self-similarity of the red refinement: the four diagonal child pairs
/// carry the fraction 2^{2s-2} of the total.
pub fn identical_oracle(t: &Tri, s: f64, depth: usize) -> Vec<f64> {
    let m = t.vals.len();
    let ch = t.children();
    let mut total = vec![0.0; m * m];
    for i in 0..4 {
        for j in 0..4 {
            if i != j {
                let v = pair_oracle(&ch[i], &ch[j], s, depth);
                for (t, x) in total.iter_mut().zip(v) {
                    *t += x;
                }
            }
        }
    }
    let f = 1.0 / (1.0 - 2f64.powf(2.0 * s - 2.0));
    total.iter().map(|v| v * f).collect()
}

/// Tri with the three barycentric basis functions.
pub fn p1_tri(p: [Pt; 3]) -> Tri {
    Tri {
        p,
        vals: vec![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
    }
}

/// Γ by the Lanczos approximation (g = 7, n = 9).
pub fn gamma_lanczos(x: f64) -> f64 {
    const G: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        return std::f64::consts::PI / ((std::f64::consts::PI * x).sin() * gamma_lanczos(1.0 - x));
    }
    let x = x - 1.0;
    let mut a = G[0];
    let t = x + 7.5;
    for (i, &g) in G.iter().enumerate().skip(1) {
        a += g / (x + i as f64);
    }
    (2.0 * std::f64::consts::PI).sqrt() * t.powf(x + 0.5) * (-t).exp() * a
}
