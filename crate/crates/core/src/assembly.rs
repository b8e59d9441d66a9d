//! Galerkin matrix and load vector of the fractional Laplacian.

use faer::Mat;

use crate::error::{invalid, AfemError, Result};
use crate::mesh::{Point, Prolongation, Triangulation};
use crate::quadrature::exterior::FluxTable;
use crate::quadrature::pairs::{edge_integral, identical_integral, vertex_integral, TouchingRules};
use crate::quadrature::rules::{
    gauss_jacobi, gauss_legendre, points_per_axis, triangle_collapsed, triangle_rule,
    triangle_three_point, QuadRule,
};

/// C(2,s) = 2^{2s} s Γ(1+s) / (π Γ(1-s)).
pub fn fractional_constant(s: f64) -> Result<f64> {
    if !(s > 0.0 && s < 1.0) {
        return invalid(format!("s must lie in (0,1), got {s}"));
    }
    use statrs::function::gamma::gamma;
    Ok(4f64.powf(s) * s * gamma(1.0 + s) / (std::f64::consts::PI * gamma(1.0 - s)))
}

/// Dense symmetric Galerkin matrix on the interior nodes of a mesh.
#[derive(Clone, Debug)]
pub struct EnergyMatrix {
    mat: Mat<f64>,
    mesh_id: u64,
    s: f64,
}

impl EnergyMatrix {
    pub fn from_dense(mat: Mat<f64>, mesh_id: u64, s: f64) -> Result<Self> {
        if mat.nrows() != mat.ncols() {
            return invalid("energy matrix must be square");
        }
        Ok(EnergyMatrix { mat, mesh_id, s })
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn mesh_id(&self) -> u64 {
        self.mesh_id
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.mat[(i, j)]
    }

    pub fn matrix(&self) -> &Mat<f64> {
        &self.mat
    }

    /// A·v.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let mut out = vec![0.0; n];
        for (j, &vj) in v.iter().enumerate().take(n) {
            if vj == 0.0 {
                continue;
            }
            let col = self.mat.col_as_slice(j);
            for (o, &a) in out.iter_mut().zip(col) {
                *o += a * vj;
            }
        }
        out
    }

    /// (A·v)[z], using symmetry.
    pub fn row_dot(&self, z: usize, v: &[f64]) -> f64 {
        self.mat
            .col_as_slice(z)
            .iter()
            .zip(v)
            .map(|(a, b)| a * b)
            .sum()
    }

    pub fn max_abs(&self) -> f64 {
        let mut m = 0.0f64;
        for j in 0..self.dim() {
            for &a in self.mat.col_as_slice(j) {
                m = m.max(a.abs());
            }
        }
        m
    }

    /// max |A - Aᵀ|.
    pub fn max_asymmetry(&self) -> f64 {
        let mut m = 0.0f64;
        for j in 0..self.dim() {
            for i in 0..j {
                m = m.max((self.mat[(i, j)] - self.mat[(j, i)]).abs());
            }
        }
        m
    }

    /// Pᵀ A P for a prolongation from a coarse mesh onto this matrix's mesh.
    pub fn restrict(&self, p: &Prolongation) -> Result<Mat<f64>> {
        if p.fine_id() != self.mesh_id || p.n_fine_dofs() != self.dim() {
            return Err(AfemError::MeshMismatch(
                "prolongation does not target this matrix".into(),
            ));
        }
        let (nc, nf) = (p.n_coarse_dofs(), self.dim());
        // AP column by column
        let mut ap = Mat::<f64>::zeros(nf, nc);
        for z in 0..nf {
            for (c, w) in p.dof_parents(z) {
                let src = self.mat.col_as_slice(z);
                let dst = ap.col_as_slice_mut(c);
                for (d, &a) in dst.iter_mut().zip(src) {
                    *d += w * a;
                }
            }
        }
        let mut out = Mat::<f64>::zeros(nc, nc);
        for j in 0..nc {
            let col = ap.col_as_slice(j);
            for z in 0..nf {
                let v = col[z];
                if v == 0.0 {
                    continue;
                }
                for (c, w) in p.dof_parents(z) {
                    out[(c, j)] += w * v;
                }
            }
        }
        Ok(out)
    }
}

/// A P1 function given by its values at the interior nodes of a mesh.
#[derive(Clone, Debug, PartialEq)]
pub struct FemFunction {
    pub mesh_id: u64,
    pub coeffs: Vec<f64>,
}

impl FemFunction {
    pub fn new(mesh: &Triangulation, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != mesh.n_dofs() {
            return invalid(format!(
                "expected {} coefficients, got {}",
                mesh.n_dofs(),
                coeffs.len()
            ));
        }
        Ok(FemFunction {
            mesh_id: mesh.id(),
            coeffs,
        })
    }

    pub fn zero(mesh: &Triangulation) -> Self {
        FemFunction {
            mesh_id: mesh.id(),
            coeffs: vec![0.0; mesh.n_dofs()],
        }
    }

    /// Hat function of dof z.
    pub fn hat(mesh: &Triangulation, z: usize) -> Result<Self> {
        if z >= mesh.n_dofs() {
            return invalid(format!("dof {z} out of range"));
        }
        let mut f = Self::zero(mesh);
        f.coeffs[z] = 1.0;
        Ok(f)
    }

    /// Prolongation onto a finer mesh.
    pub fn prolong(&self, p: &Prolongation) -> Result<Self> {
        if p.coarse_id() != self.mesh_id {
            return Err(AfemError::MeshMismatch(
                "function does not live on the prolongation's coarse mesh".into(),
            ));
        }
        Ok(FemFunction {
            mesh_id: p.fine_id(),
            coeffs: p.apply(&self.coeffs)?,
        })
    }

    /// Values at all vertices of `mesh` (zero on the boundary).
    pub fn vertex_values(&self, mesh: &Triangulation) -> Result<Vec<f64>> {
        if mesh.id() != self.mesh_id {
            return Err(AfemError::MeshMismatch(
                "function lives on another mesh".into(),
            ));
        }
        Ok((0..mesh.n_vertices())
            .map(|v| mesh.dof(v).map_or(0.0, |d| self.coeffs[d]))
            .collect())
    }
}

/// Distance thresholds (in units of the larger element diameter, measured
/// between centroids) separating the quadrature tiers for pairs without
/// common vertices.
#[derive(Clone, Copy, Debug)]
pub struct FarField {
    /// Below: full tensor rule with subdivision of the larger element.
    pub near: f64,
    /// Below: 9-point rules.
    pub mid: f64,
    /// Below: 3-point rules; beyond: second-order Taylor expansion of the
    /// kernel about the centroids.
    pub far: f64,
}

impl Default for FarField {
    fn default() -> Self {
        FarField {
            near: 2.0,
            mid: 3.0,
            far: 6.0,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct AssemblyOptions {
    pub quad_order: usize,
    pub far_field: FarField,
}

impl AssemblyOptions {
    pub fn new(quad_order: usize) -> Self {
        AssemblyOptions {
            quad_order,
            far_field: FarField::default(),
        }
    }
}

const NONE: usize = usize::MAX;

struct Geometry {
    pts: Vec<[Point; 3]>,
    area: Vec<f64>,
    diam: Vec<f64>,
    centroid: Vec<Point>,
    dofs: Vec<[usize; 3]>,
}

impl Geometry {
    fn new(mesh: &Triangulation) -> Result<Self> {
        let ne = mesh.n_elements();
        let mut g = Geometry {
            pts: Vec::with_capacity(ne),
            area: Vec::with_capacity(ne),
            diam: Vec::with_capacity(ne),
            centroid: Vec::with_capacity(ne),
            dofs: Vec::with_capacity(ne),
        };
        for t in 0..ne {
            let p = mesh.element_points(t);
            let a = mesh.area(t);
            if !(a > 0.0) {
                return invalid(format!("element {t} is degenerate"));
            }
            g.pts.push(p);
            g.area.push(a);
            g.diam.push(mesh.diameter(t));
            g.centroid.push([
                (p[0][0] + p[1][0] + p[2][0]) / 3.0,
                (p[0][1] + p[1][1] + p[2][1]) / 3.0,
            ]);
            let e = mesh.elements()[t];
            g.dofs
                .push([0, 1, 2].map(|k| mesh.dof(e[k]).unwrap_or(NONE)));
        }
        Ok(g)
    }

    fn has_dofs(&self, t: usize) -> bool {
        self.dofs[t].iter().any(|&d| d != NONE)
    }
}

#[inline]
pub(crate) fn kernel2(r2: f64, s: f64) -> f64 {
    // square roots are much cheaper than ln/exp for quarter exponents
    if s == 0.5 {
        1.0 / (r2 * r2.sqrt())
    } else if s == 0.25 {
        1.0 / (r2 * r2.sqrt().sqrt())
    } else if s == 0.75 {
        let q = r2.sqrt();
        1.0 / (r2 * q * q.sqrt())
    } else {
        (-(1.0 + s) * r2.ln()).exp()
    }
}

#[inline]
fn map_ref(p: &[Point; 3], a: [f64; 2]) -> Point {
    [
        p[0][0] + a[0] * (p[1][0] - p[0][0]) + a[1] * (p[2][0] - p[0][0]),
        p[0][1] + a[0] * (p[1][1] - p[0][1]) + a[1] * (p[2][1] - p[0][1]),
    ]
}

/// Accumulator of a symmetric matrix: each off-diagonal value is added at
/// either (i, j) or (j, i), and `finish` merges the two triangles.
struct Lower {
    mat: Mat<f64>,
}

impl Lower {
    #[inline]
    fn add(&mut self, i: usize, j: usize, v: f64) {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        self.mat[(r, c)] += v;
    }

    fn finish(mut self) -> Mat<f64> {
        let n = self.mat.nrows();
        const B: usize = 64;
        for jb in (0..n).step_by(B) {
            for ib in (jb..n).step_by(B) {
                for j in jb..(jb + B).min(n) {
                    for i in ib.max(j + 1)..(ib + B).min(n) {
                        let v = self.mat[(i, j)] + self.mat[(j, i)];
                        self.mat[(i, j)] = v;
                        self.mat[(j, i)] = v;
                    }
                }
            }
        }
        self.mat
    }
}

/// Points of a rule mapped to one element: positions, weights, barycentrics.
struct ElementRule {
    np: usize,
    x: Vec<Point>,
    w: Vec<f64>,
    lam: Vec<[f64; 3]>,
}

fn element_rule(geo: &Geometry, rule: &QuadRule) -> ElementRule {
    let np = rule.len();
    let ne = geo.pts.len();
    let mut er = ElementRule {
        np,
        x: Vec::with_capacity(ne * np),
        w: Vec::with_capacity(ne * np),
        lam: Vec::new(),
    };
    for t in 0..ne {
        for (a, &w) in rule.points.iter().zip(&rule.weights) {
            er.x.push(map_ref(&geo.pts[t], *a));
            er.w.push(2.0 * geo.area[t] * w);
        }
    }
    er.lam = rule
        .points
        .iter()
        .map(|a| [1.0 - a[0] - a[1], a[0], a[1]])
        .collect();
    er
}

/// Assembles the Galerkin matrix with the default far-field tiers.
pub fn assemble_stiffness(mesh: &Triangulation, s: f64, quad_order: usize) -> Result<EnergyMatrix> {
    assemble_stiffness_with(mesh, s, &AssemblyOptions::new(quad_order))
}

pub fn assemble_stiffness_with(
    mesh: &Triangulation,
    s: f64,
    opts: &AssemblyOptions,
) -> Result<EnergyMatrix> {
    let c = fractional_constant(s)?;
    if opts.quad_order == 0 {
        return invalid("quadrature order must be at least 1");
    }
    mesh.check_conforming()?;
    let geo = Geometry::new(mesh)?;
    let n = mesh.n_dofs();
    let ne = mesh.n_elements();
    let mut acc = Lower {
        mat: Mat::zeros(n, n),
    };

    // touching pairs
    let rules = TouchingRules::new(opts.quad_order);
    let vert_elems = mesh.vertex_elements();
    let elements = mesh.elements();
    let mut touching: Vec<Vec<usize>> = vec![Vec::new(); ne];
    for t in 0..ne {
        let mut list: Vec<usize> = elements[t]
            .iter()
            .flat_map(|&v| vert_elems[v].iter().copied())
            .collect();
        list.sort_unstable();
        list.dedup();
        touching[t] = list;
    }
    for t in 0..ne {
        let e = elements[t];
        if geo.has_dofs(t) {
            let m = identical_integral(geo.pts[t], s, &rules);
            for i in 0..3 {
                for j in 0..=i {
                    let (di, dj) = (geo.dofs[t][i], geo.dofs[t][j]);
                    if di != NONE && dj != NONE {
                        acc.add(di, dj, 0.5 * c * m[i][j]);
                    }
                }
            }
        }
        for &u in touching[t].iter().filter(|&&u| u > t) {
            if !geo.has_dofs(t) && !geo.has_dofs(u) {
                continue;
            }
            let f = elements[u];
            let shared: Vec<usize> = (0..3).filter(|&k| f.contains(&e[k])).collect();
            let pos = |v: usize| f.iter().position(|&w| w == v).unwrap();
            let dof_t = |k: usize| geo.dofs[t][k];
            let dof_u = |k: usize| geo.dofs[u][k];
            match shared.len() {
                2 => {
                    let (k0, k1) = (shared[0], shared[1]);
                    let k2 = 3 - k0 - k1;
                    let (j0, j1) = (pos(e[k0]), pos(e[k1]));
                    let j2 = 3 - j0 - j1;
                    let q = [
                        geo.pts[t][k0],
                        geo.pts[t][k1],
                        geo.pts[t][k2],
                        geo.pts[u][j2],
                    ];
                    let m = edge_integral(q, s, &rules);
                    let d = [dof_t(k0), dof_t(k1), dof_t(k2), dof_u(j2)];
                    add_local(&mut acc, &d, &m, c);
                }
                1 => {
                    let k0 = shared[0];
                    let j0 = pos(e[k0]);
                    let (k1, k2) = ((k0 + 1) % 3, (k0 + 2) % 3);
                    let (j1, j2) = ((j0 + 1) % 3, (j0 + 2) % 3);
                    let q = [
                        geo.pts[t][k0],
                        geo.pts[t][k1],
                        geo.pts[t][k2],
                        geo.pts[u][j1],
                        geo.pts[u][j2],
                    ];
                    let m = vertex_integral(q, s, &rules);
                    let d = [dof_t(k0), dof_t(k1), dof_t(k2), dof_u(j1), dof_u(j2)];
                    add_local(&mut acc, &d, &m, c);
                }
                _ => return Err(AfemError::NonConforming("duplicate element".into())),
            }
        }
    }

    far_field(&geo, &touching, s, c, opts, &mut acc);
    complement(mesh, &geo, s, c, opts.quad_order, &mut acc)?;
    Ok(EnergyMatrix {
        mat: acc.finish(),
        mesh_id: mesh.id(),
        s,
    })
}

fn add_local<const M: usize>(acc: &mut Lower, d: &[usize; M], m: &[[f64; M]; M], c: f64) {
    for i in 0..M {
        if d[i] == NONE {
            continue;
        }
        for j in 0..=i {
            if d[j] != NONE {
                // i == j only happens for the same basis function
                acc.add(d[i], d[j], c * m[i][j]);
            }
        }
    }
}

/// Pairs of elements without common vertices.
fn dot2(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

/// Symmetric 2×2 matrices stored as (xx, xy, yy); the Frobenius product.
fn dot3(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + 2.0 * a[1] * b[1] + a[2] * b[2]
}

fn sym_apply(h: [f64; 3], v: [f64; 2]) -> [f64; 2] {
    [h[0] * v[0] + h[1] * v[1], h[1] * v[0] + h[2] * v[1]]
}

/// Moments of the hat functions of one element about its centroid c,
/// with ξ = x - c: ∫λ_a, ∫λ_a ξ, ∫λ_a ξξᵀ and ∫ξξᵀ.
struct Moments {
    m: f64,
    d: [[f64; 2]; 3],
    sa: [[f64; 3]; 3],
    sig: [f64; 3],
}

/// ∫λ_iλ_j, ∫λ_iλ_j ξ, ∫λ_iλ_j ξξᵀ for the x-block.
struct BlockMoments {
    mm: [[f64; 3]; 3],
    dd: [[[f64; 2]; 3]; 3],
    qq: [[[f64; 3]; 3]; 3],
}

/// ∫_T Π λ_k^{n_k} = 2|T| Π n_k! / (Σ n_k + 2)!
fn bary_monomial(idx: &[usize], area: f64) -> f64 {
    let mut n = [0usize; 3];
    for &i in idx {
        n[i] += 1;
    }
    let f = |k: usize| (1..=k).product::<usize>() as f64;
    2.0 * area * f(n[0]) * f(n[1]) * f(n[2]) / f(idx.len() + 2)
}

impl Moments {
    fn new(p: &[Point; 3], c: Point, area: f64) -> Self {
        let e: [[f64; 2]; 3] = std::array::from_fn(|k| [p[k][0] - c[0], p[k][1] - c[1]]);
        let outer = |k: usize, l: usize| [e[k][0] * e[l][0], e[k][0] * e[l][1], e[k][1] * e[l][1]];
        let mut mo = Moments {
            m: area / 3.0,
            d: [[0.0; 2]; 3],
            sa: [[0.0; 3]; 3],
            sig: [0.0; 3],
        };
        for i in 0..3 {
            for k in 0..3 {
                let w = bary_monomial(&[i, k], area);
                for q in 0..2 {
                    mo.d[i][q] += w * e[k][q];
                }
                for l in 0..3 {
                    let w = bary_monomial(&[i, k, l], area);
                    let o = outer(k, l);
                    for q in 0..3 {
                        mo.sa[i][q] += w * o[q];
                    }
                }
            }
            for q in 0..3 {
                mo.sig[q] += mo.sa[i][q];
            }
        }
        mo
    }
}

impl BlockMoments {
    fn new(p: &[Point; 3], c: Point, area: f64) -> Self {
        let e: [[f64; 2]; 3] = std::array::from_fn(|k| [p[k][0] - c[0], p[k][1] - c[1]]);
        let outer = |k: usize, l: usize| [e[k][0] * e[l][0], e[k][0] * e[l][1], e[k][1] * e[l][1]];
        let mut bm = BlockMoments {
            mm: [[0.0; 3]; 3],
            dd: [[[0.0; 2]; 3]; 3],
            qq: [[[0.0; 3]; 3]; 3],
        };
        for i in 0..3 {
            for j in 0..3 {
                bm.mm[i][j] = bary_monomial(&[i, j], area);
                for k in 0..3 {
                    let w = bary_monomial(&[i, j, k], area);
                    for q in 0..2 {
                        bm.dd[i][j][q] += w * e[k][q];
                    }
                    for l in 0..3 {
                        let w = bary_monomial(&[i, j, k, l], area);
                        let o = outer(k, l);
                        for q in 0..3 {
                            bm.qq[i][j][q] += w * o[q];
                        }
                    }
                }
            }
        }
        bm
    }
}

/// Per element, the partners' kernel Taylor data summed for the x-block.
#[derive(Clone, Copy, Default)]
struct TaylorSums {
    k0: f64,
    g: [f64; 2],
    h: [f64; 3],
}

/// Pair integral with the kernel replaced by its second-order Taylor
/// polynomial in (ξ, η) about the centroid offset d, integrated exactly.
/// The modified kernel is again a function of x - y, so the form keeps
/// constants in its kernel.
#[allow(clippy::too_many_arguments)]
fn taylor_pair(
    geo: &Geometry,
    mom: &[Moments],
    tay: &mut [TaylorSums],
    t: usize,
    u: usize,
    d: [f64; 2],
    r2: f64,
    s: f64,
    c: f64,
    acc: &mut Lower,
) {
    let p = 1.0 + s;
    let k = kernel2(r2, s);
    let f = -2.0 * p * k / r2;
    let g = [f * d[0], f * d[1]];
    let q = 4.0 * p * (p + 1.0) * k / (r2 * r2);
    let h = [q * d[0] * d[0] + f, q * d[0] * d[1], q * d[1] * d[1] + f];
    let (mt, mu) = (&mom[t], &mom[u]);
    let (at, au) = (geo.area[t], geo.area[u]);

    let st = &mut tay[t];
    st.k0 += au * k + 0.5 * dot3(h, mu.sig);
    for q in 0..2 {
        st.g[q] += au * g[q];
    }
    for q in 0..3 {
        st.h[q] += 0.5 * au * h[q];
    }
    let su = &mut tay[u];
    su.k0 += at * k + 0.5 * dot3(h, mt.sig);
    for q in 0..2 {
        su.g[q] -= at * g[q];
    }
    for q in 0..3 {
        su.h[q] += 0.5 * at * h[q];
    }

    let ub: [(f64, [f64; 2]); 3] = std::array::from_fn(|j| {
        let v = mt.m * (0.5 * dot3(h, mu.sa[j]) - dot2(g, mu.d[j]));
        (v, sym_apply(h, mu.d[j]))
    });
    for (i, &a) in geo.dofs[t].iter().enumerate() {
        if a == NONE {
            continue;
        }
        let ti = mu.m * (k * mt.m + dot2(g, mt.d[i]) + 0.5 * dot3(h, mt.sa[i]));
        // columns of t stay in cache while u runs
        let col = acc.mat.col_as_slice_mut(a);
        for (j, &b) in geo.dofs[u].iter().enumerate() {
            if b != NONE {
                col[b] -= c * (ti + ub[j].0 - dot2(mt.d[i], ub[j].1));
            }
        }
    }
}

fn far_field(
    geo: &Geometry,
    touching: &[Vec<usize>],
    s: f64,
    c: f64,
    opts: &AssemblyOptions,
    acc: &mut Lower,
) {
    let ne = geo.pts.len();
    let ff = opts.far_field;
    let n_near = (points_per_axis(opts.quad_order) / 2).max(2);
    let near_rule = triangle_collapsed(n_near);
    let tiers = [triangle_collapsed(3), triangle_three_point()];
    let er: Vec<ElementRule> = tiers.iter().map(|r| element_rule(geo, r)).collect();
    // per element, per tier: Σ over partners of the y-integrated kernel at each point
    let mut sums: Vec<Vec<f64>> = er.iter().map(|r| vec![0.0; ne * r.np]).collect();
    let mom: Vec<Moments> = (0..ne)
        .map(|t| Moments::new(&geo.pts[t], geo.centroid[t], geo.area[t]))
        .collect();
    let mut tay = vec![TaylorSums::default(); ne];
    let mut stamp = vec![NONE; ne];
    let mut kbuf = vec![0.0; 81];

    for t in 0..ne {
        for &u in &touching[t] {
            stamp[u] = t;
        }
        let dt = geo.has_dofs(t);
        for u in t + 1..ne {
            if stamp[u] == t || !(dt || geo.has_dofs(u)) {
                continue;
            }
            let (ct, cu) = (geo.centroid[t], geo.centroid[u]);
            let r2 = (ct[0] - cu[0]).powi(2) + (ct[1] - cu[1]).powi(2);
            let h = geo.diam[t].max(geo.diam[u]);
            let h2 = h * h;
            if r2 >= ff.far * ff.far * h2 {
                taylor_pair(
                    geo,
                    &mom,
                    &mut tay,
                    t,
                    u,
                    [ct[0] - cu[0], ct[1] - cu[1]],
                    r2,
                    s,
                    c,
                    acc,
                );
            } else if r2 >= ff.mid * ff.mid * h2 {
                tier_pair(geo, &er[1], &mut sums[1], t, u, s, c, &mut kbuf, acc);
            } else if r2 >= ff.near * ff.near * h2 {
                tier_pair(geo, &er[0], &mut sums[0], t, u, s, c, &mut kbuf, acc);
            } else {
                near_pair(geo, &near_rule, &tiers[0], ff.near, t, u, s, c, acc);
            }
        }
    }

    // x-blocks from the accumulated sums
    for t in 0..ne {
        if !geo.has_dofs(t) {
            continue;
        }
        let mut x = [[0.0; 3]; 3];
        let (m, ts) = (
            BlockMoments::new(&geo.pts[t], geo.centroid[t], geo.area[t]),
            &tay[t],
        );
        for i in 0..3 {
            for j in 0..=i {
                x[i][j] += ts.k0 * m.mm[i][j] + dot2(ts.g, m.dd[i][j]) + dot3(ts.h, m.qq[i][j]);
            }
        }
        for (r, sm) in er.iter().zip(&sums) {
            for p in 0..r.np {
                let v = r.w[t * r.np + p] * sm[t * r.np + p];
                let l = r.lam[p];
                for i in 0..3 {
                    for j in 0..=i {
                        x[i][j] += v * l[i] * l[j];
                    }
                }
            }
        }
        for i in 0..3 {
            for j in 0..=i {
                let (a, b) = (geo.dofs[t][i], geo.dofs[t][j]);
                if a != NONE && b != NONE {
                    acc.add(a, b, c * x[i][j]);
                }
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn tier_pair(
    geo: &Geometry,
    r: &ElementRule,
    sums: &mut [f64],
    t: usize,
    u: usize,
    s: f64,
    c: f64,
    kbuf: &mut [f64],
    acc: &mut Lower,
) {
    let np = r.np;
    let (ot, ou) = (t * np, u * np);
    for p in 0..np {
        let x = r.x[ot + p];
        let mut row = 0.0;
        for q in 0..np {
            let y = r.x[ou + q];
            let k = kernel2((x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2), s);
            kbuf[p * np + q] = k;
            row += r.w[ou + q] * k;
        }
        sums[ot + p] += row;
    }
    for q in 0..np {
        let mut col = 0.0;
        for p in 0..np {
            col += r.w[ot + p] * kbuf[p * np + q];
        }
        sums[ou + q] += col;
    }
    // cross block Λᵀ K Λ
    let mut m = [[0.0; 3]; 3];
    for p in 0..np {
        let mut kl = [0.0; 3];
        for q in 0..np {
            let kw = kbuf[p * np + q] * r.w[ou + q];
            let lq = r.lam[q];
            kl[0] += kw * lq[0];
            kl[1] += kw * lq[1];
            kl[2] += kw * lq[2];
        }
        let lp = r.lam[p];
        let wp = r.w[ot + p];
        for a in 0..3 {
            for b in 0..3 {
                m[a][b] += wp * lp[a] * kl[b];
            }
        }
    }
    for a in 0..3 {
        let da = geo.dofs[t][a];
        if da == NONE {
            continue;
        }
        for b in 0..3 {
            let db = geo.dofs[u][b];
            if db != NONE {
                acc.add(da, db, -c * m[a][b]);
            }
        }
    }
}

type Pts = Vec<(Point, f64, [f64; 3])>;

fn rule_on(
    p: &[Point; 3],
    area: f64,
    sub: &[[f64; 2]; 3],
    frac: f64,
    rule: &QuadRule,
    out: &mut Pts,
) {
    for (a, &w) in rule.points.iter().zip(&rule.weights) {
        let r = [
            sub[0][0] + a[0] * (sub[1][0] - sub[0][0]) + a[1] * (sub[2][0] - sub[0][0]),
            sub[0][1] + a[0] * (sub[1][1] - sub[0][1]) + a[1] * (sub[2][1] - sub[0][1]),
        ];
        out.push((
            map_ref(p, r),
            2.0 * area * frac * w,
            [1.0 - r[0] - r[1], r[0], r[1]],
        ));
    }
}

/// Accumulates the full form (φ(x)-φ(y))² over a product of point sets.
fn accumulate_pair(xs: &Pts, ys: &Pts, s: f64, m: &mut [[f64; 6]; 6]) {
    for &(x, wx, lx) in xs {
        let mut row = [[0.0; 3]; 3];
        let mut ksum = 0.0;
        let mut yl = [0.0; 3];
        for &(y, wy, ly) in ys {
            let k = wy * kernel2((x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2), s);
            ksum += k;
            yl[0] += k * ly[0];
            yl[1] += k * ly[1];
            yl[2] += k * ly[2];
            for i in 0..3 {
                for j in 0..=i {
                    row[i][j] += k * ly[i] * ly[j];
                }
            }
        }
        for i in 0..3 {
            for j in 0..=i {
                m[i][j] += wx * ksum * lx[i] * lx[j];
                m[3 + i][3 + j] += wx * row[i][j];
            }
            for j in 0..3 {
                m[3 + j][i] -= wx * lx[i] * yl[j];
            }
        }
    }
}

/// Full local matrix for close pairs. The larger element is subdivided
/// where it is close to the smaller one, down to the smaller one's size.
#[allow(clippy::too_many_arguments)]
fn near_pair(
    geo: &Geometry,
    near_rule: &QuadRule,
    mid_rule: &QuadRule,
    near: f64,
    t: usize,
    u: usize,
    s: f64,
    c: f64,
    acc: &mut Lower,
) {
    let (big, small) = if geo.diam[t] >= geo.diam[u] {
        (t, u)
    } else {
        (u, t)
    };
    let hs = geo.diam[small];
    let cs = geo.centroid[small];
    let mut x_near = Pts::new();
    let mut x_mid = Pts::new();
    let mut stack: Vec<([[f64; 2]; 3], u32)> = vec![([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], 0)];
    while let Some((sub, level)) = stack.pop() {
        let frac = 0.25f64.powi(level as i32);
        let hb = geo.diam[big] * 0.5f64.powi(level as i32);
        let cr = [
            (sub[0][0] + sub[1][0] + sub[2][0]) / 3.0,
            (sub[0][1] + sub[1][1] + sub[2][1]) / 3.0,
        ];
        let cb = map_ref(&geo.pts[big], cr);
        let h = hb.max(hs);
        let r2 = (cb[0] - cs[0]).powi(2) + (cb[1] - cs[1]).powi(2);
        if level > 0 && r2 >= near * near * h * h {
            rule_on(
                &geo.pts[big],
                geo.area[big],
                &sub,
                frac,
                mid_rule,
                &mut x_mid,
            );
        } else if hb > hs && level < 12 {
            let m = |a: [f64; 2], b: [f64; 2]| [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])];
            let (m01, m12, m20) = (m(sub[0], sub[1]), m(sub[1], sub[2]), m(sub[2], sub[0]));
            for child in [
                [sub[0], m01, m20],
                [m01, sub[1], m12],
                [m20, m12, sub[2]],
                [m12, m20, m01],
            ] {
                stack.push((child, level + 1));
            }
        } else {
            rule_on(
                &geo.pts[big],
                geo.area[big],
                &sub,
                frac,
                near_rule,
                &mut x_near,
            );
        }
    }
    let unit = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
    let mut m = [[0.0; 6]; 6];
    if !x_near.is_empty() {
        let mut ys = Pts::new();
        rule_on(
            &geo.pts[small],
            geo.area[small],
            &unit,
            1.0,
            near_rule,
            &mut ys,
        );
        accumulate_pair(&x_near, &ys, s, &mut m);
    }
    if !x_mid.is_empty() {
        let mut ys = Pts::new();
        rule_on(
            &geo.pts[small],
            geo.area[small],
            &unit,
            1.0,
            mid_rule,
            &mut ys,
        );
        accumulate_pair(&x_mid, &ys, s, &mut m);
    }
    let d = [
        geo.dofs[big][0],
        geo.dofs[big][1],
        geo.dofs[big][2],
        geo.dofs[small][0],
        geo.dofs[small][1],
        geo.dofs[small][2],
    ];
    for i in 0..6 {
        if d[i] == NONE {
            continue;
        }
        for j in 0..=i {
            if d[j] != NONE {
                acc.add(d[i], d[j], c * m[i][j]);
            }
        }
    }
}

/// Directed boundary segments of the mesh (counter-clockwise).
pub fn boundary_segments(mesh: &Triangulation) -> Vec<(Point, Point)> {
    let mut count = std::collections::HashMap::new();
    for e in mesh.elements() {
        for k in 0..3 {
            let (a, b) = (e[k], e[(k + 1) % 3]);
            *count.entry((a.min(b), a.max(b))).or_insert(0u32) += 1;
        }
    }
    let mut segs = Vec::new();
    for e in mesh.elements() {
        for k in 0..3 {
            let (a, b) = (e[k], e[(k + 1) % 3]);
            if count[&(a.min(b), a.max(b))] == 1 {
                segs.push((mesh.vertices()[a], mesh.vertices()[b]));
            }
        }
    }
    segs
}

/// Evaluates ψ_Ω(x) = ∫_{R²∖Ω} k(x-y) dy for points inside the mesh domain.
pub struct ComplementKernel {
    table: FluxTable,
    segments: Vec<(Point, Point)>,
    lengths: Vec<f64>,
    mids: Vec<Point>,
    normals: Vec<Point>,
}

impl ComplementKernel {
    pub fn new(mesh: &Triangulation, s: f64) -> Self {
        let segments = boundary_segments(mesh);
        let mut lengths = Vec::with_capacity(segments.len());
        let mut mids = Vec::with_capacity(segments.len());
        let mut normals = Vec::with_capacity(segments.len());
        for &(p, q) in &segments {
            let d = [q[0] - p[0], q[1] - p[1]];
            let l = d[0].hypot(d[1]);
            lengths.push(l);
            mids.push([0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])]);
            normals.push([d[1] / l, -d[0] / l]);
        }
        ComplementKernel {
            table: FluxTable::new(s),
            segments,
            lengths,
            mids,
            normals,
        }
    }

    /// ψ_Ω(x). Segments far from x use a three-point Gauss rule.
    pub fn eval(&self, x: Point) -> f64 {
        let s = self.table.s();
        let (g1, g2) = (0.5 - 0.5 * (0.6f64).sqrt(), 0.5 + 0.5 * (0.6f64).sqrt());
        let mut sum = 0.0;
        for k in 0..self.segments.len() {
            let m = self.mids[k];
            let l = self.lengths[k];
            let r2 = (m[0] - x[0]).powi(2) + (m[1] - x[1]).powi(2);
            if r2 > 36.0 * l * l {
                let (p, q) = self.segments[k];
                let nrm = self.normals[k];
                let h = (p[0] - x[0]) * nrm[0] + (p[1] - x[1]) * nrm[1];
                let mut f = 0.0;
                for (t, w) in [(g1, 5.0 / 18.0), (0.5, 8.0 / 18.0), (g2, 5.0 / 18.0)] {
                    let y = [
                        p[0] + t * (q[0] - p[0]) - x[0],
                        p[1] + t * (q[1] - p[1]) - x[1],
                    ];
                    f += w * kernel2(y[0] * y[0] + y[1] * y[1], s);
                }
                sum += h * l * f;
            } else {
                let (p, q) = self.segments[k];
                sum += self.table.segment_flux(x, p, q);
            }
        }
        sum / (2.0 * s)
    }

    /// Distance from x to the boundary.
    pub fn boundary_distance(&self, x: Point) -> f64 {
        self.segments
            .iter()
            .map(|&(p, q)| {
                let d = [q[0] - p[0], q[1] - p[1]];
                let t = (((x[0] - p[0]) * d[0] + (x[1] - p[1]) * d[1])
                    / (d[0] * d[0] + d[1] * d[1]))
                    .clamp(0.0, 1.0);
                (p[0] + t * d[0] - x[0]).hypot(p[1] + t * d[1] - x[1])
            })
            .fold(f64::INFINITY, f64::min)
    }
}

/// C ∫_T φ_a φ_b ψ_Ω for all elements.
fn complement(
    mesh: &Triangulation,
    geo: &Geometry,
    s: f64,
    c: f64,
    order: usize,
    acc: &mut Lower,
) -> Result<()> {
    let psi = ComplementKernel::new(mesh, s);
    // ψ is smooth at the scale of the element away from the collapse points
    let n = (points_per_axis(order) * 2 / 3).max(3);
    let (gx, gw) = gauss_legendre(n);
    let fine = triangle_collapsed(n);
    let medium = triangle_collapsed(5);
    let coarse = triangle_collapsed(3);
    // 1 - ρ power for boundary-edge collapse: weight ρ (1-ρ)^{2-2s}
    let (ex, ew) = gauss_jacobi(n, 1.0, 2.0 - 2.0 * s)?;
    // vertex collapse: weight ρ^{1-2s} · ρ
    let (vx, vw) = gauss_jacobi(n, 2.0 - 2.0 * s, 0.0)?;
    let elements = mesh.elements();
    let boundary_edges: std::collections::HashSet<(usize, usize)> = {
        let mut count = std::collections::HashMap::new();
        for e in elements {
            for k in 0..3 {
                let (a, b) = (e[k], e[(k + 1) % 3]);
                *count.entry((a.min(b), a.max(b))).or_insert(0u32) += 1;
            }
        }
        count
            .into_iter()
            .filter(|&(_, c)| c == 1)
            .map(|(k, _)| k)
            .collect()
    };
    for t in 0..elements.len() {
        if !geo.has_dofs(t) {
            continue;
        }
        let e = elements[t];
        let p = geo.pts[t];
        let bnd: Vec<usize> = (0..3).filter(|&k| mesh.is_boundary(e[k])).collect();
        let mut m = [[0.0; 3]; 3];
        let add = |x: Point, w: f64, l: [f64; 3], m: &mut [[f64; 3]; 3]| {
            let v = w * psi.eval(x);
            for i in 0..3 {
                for j in 0..=i {
                    m[i][j] += v * l[i] * l[j];
                }
            }
        };
        let has_boundary_edge = bnd.len() == 2 && {
            let (a, b) = (e[bnd[0]], e[bnd[1]]);
            boundary_edges.contains(&(a.min(b), a.max(b)))
        };
        if has_boundary_edge {
            let k0 = 3 - bnd[0] - bnd[1];
            let (k1, k2) = ((k0 + 1) % 3, (k0 + 2) % 3);
            // x = p0 + ρ (p1 - p0 + σ (p2 - p1)), λ_{k0} = 1 - ρ
            // integrand carries (1-ρ)^2; the rule absorbs (1-ρ)^{2-2s}
            for (&rho, &wr) in ex.iter().zip(&ew) {
                for (&sg, &ws) in gx.iter().zip(&gw) {
                    let x = [
                        p[k0][0] + rho * (p[k1][0] - p[k0][0] + sg * (p[k2][0] - p[k1][0])),
                        p[k0][1] + rho * (p[k1][1] - p[k0][1] + sg * (p[k2][1] - p[k1][1])),
                    ];
                    let mut l = [0.0; 3];
                    l[k0] = (1.0 - rho).powf(s);
                    add(x, 2.0 * geo.area[t] * wr * ws, l, &mut m);
                }
            }
        } else if !bnd.is_empty() {
            // split into four children; children at a boundary vertex get a
            // Duffy collapse there
            let mid = |a: Point, b: Point| [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])];
            let bary_mid = |i: usize, j: usize| {
                let mut l = [0.0; 3];
                l[i] += 0.5;
                l[j] += 0.5;
                l
            };
            let mut unit = [[0.0; 3]; 3];
            for k in 0..3 {
                unit[k][k] = 1.0;
            }
            for k in 0..3 {
                let (k1, k2) = ((k + 1) % 3, (k + 2) % 3);
                let child = [p[k], mid(p[k], p[k1]), mid(p[k], p[k2])];
                let lam = [unit[k], bary_mid(k, k1), bary_mid(k, k2)];
                let area = geo.area[t] / 4.0;
                if bnd.contains(&k) {
                    for (&rho, &wr) in vx.iter().zip(&vw) {
                        for (&sg, &ws) in gx.iter().zip(&gw) {
                            let w = [1.0 - rho, rho * (1.0 - sg), rho * sg];
                            let x = combine(&child, w);
                            let l = combine3(&lam, w);
                            // the rule carries ρ^{2-2s}; the Jacobian is ρ
                            add(x, 2.0 * area * wr * ws * rho.powf(2.0 * s - 1.0), l, &mut m);
                        }
                    }
                } else {
                    for (a, &w) in fine.points.iter().zip(&fine.weights) {
                        let wv = [1.0 - a[0] - a[1], a[0], a[1]];
                        add(
                            combine(&child, wv),
                            2.0 * area * w,
                            combine3(&lam, wv),
                            &mut m,
                        );
                    }
                }
            }
            let child = [mid(p[0], p[1]), mid(p[1], p[2]), mid(p[2], p[0])];
            let lam = [bary_mid(0, 1), bary_mid(1, 2), bary_mid(2, 0)];
            for (a, &w) in fine.points.iter().zip(&fine.weights) {
                let wv = [1.0 - a[0] - a[1], a[0], a[1]];
                add(
                    combine(&child, wv),
                    2.0 * geo.area[t] / 4.0 * w,
                    combine3(&lam, wv),
                    &mut m,
                );
            }
        } else {
            let dist = psi.boundary_distance(geo.centroid[t]) - geo.diam[t];
            let ratio = dist / geo.diam[t];
            let rule = if ratio < 1.0 {
                &fine
            } else if ratio < 3.0 {
                &medium
            } else {
                &coarse
            };
            for (a, &w) in rule.points.iter().zip(&rule.weights) {
                add(
                    map_ref(&p, *a),
                    2.0 * geo.area[t] * w,
                    [1.0 - a[0] - a[1], a[0], a[1]],
                    &mut m,
                );
            }
        }
        for i in 0..3 {
            for j in 0..=i {
                let (a, b) = (geo.dofs[t][i], geo.dofs[t][j]);
                if a != NONE && b != NONE {
                    acc.add(a, b, c * m[i][j]);
                }
            }
        }
    }
    Ok(())
}

fn combine(p: &[Point; 3], w: [f64; 3]) -> Point {
    [
        w[0] * p[0][0] + w[1] * p[1][0] + w[2] * p[2][0],
        w[0] * p[0][1] + w[1] * p[1][1] + w[2] * p[2][1],
    ]
}

fn combine3(l: &[[f64; 3]; 3], w: [f64; 3]) -> [f64; 3] {
    [0, 1, 2].map(|i| w[0] * l[0][i] + w[1] * l[1][i] + w[2] * l[2][i])
}

/// b[z] = ∫ f φ_z with a triangle rule of the given degree.
pub fn assemble_load(mesh: &Triangulation, f: impl Fn(Point) -> f64, degree: usize) -> Vec<f64> {
    let rule = triangle_rule(degree);
    let mut b = vec![0.0; mesh.n_dofs()];
    for t in 0..mesh.n_elements() {
        let p = mesh.element_points(t);
        let e = mesh.elements()[t];
        let dofs = e.map(|v| mesh.dof(v));
        if dofs.iter().all(|d| d.is_none()) {
            continue;
        }
        let area = mesh.area(t);
        for (a, &w) in rule.points.iter().zip(&rule.weights) {
            let fx = f(map_ref(&p, *a)) * 2.0 * area * w;
            let l = [1.0 - a[0] - a[1], a[0], a[1]];
            for k in 0..3 {
                if let Some(d) = dofs[k] {
                    b[d] += fx * l[k];
                }
            }
        }
    }
    b
}

/// vᵀ A v.
pub fn energy_norm_sq(a: &EnergyMatrix, v: &FemFunction) -> Result<f64> {
    if v.mesh_id != a.mesh_id || v.coeffs.len() != a.dim() {
        return Err(AfemError::MeshMismatch(
            "function and matrix live on different meshes".into(),
        ));
    }
    let av = a.apply(&v.coeffs);
    Ok(av
        .iter()
        .zip(&v.coeffs)
        .map(|(x, y)| x * y)
        .sum::<f64>()
        .max(0.0))
}

/// a(v_coarse, φ_z) on the fine mesh: row z of A_fine applied to P v.
pub fn cross_pairing(
    a_fine: &EnergyMatrix,
    p: &Prolongation,
    v: &FemFunction,
    z: usize,
) -> Result<f64> {
    if p.fine_id() != a_fine.mesh_id || p.n_fine_dofs() != a_fine.dim() {
        return Err(AfemError::MeshMismatch(
            "prolongation does not target the fine matrix".into(),
        ));
    }
    if z >= a_fine.dim() {
        return invalid(format!("fine dof {z} out of range"));
    }
    let pv = v.prolong(p)?;
    Ok(a_fine.row_dot(z, &pv.coeffs))
}
