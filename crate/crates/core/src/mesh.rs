//! Conforming triangulations with newest-vertex bisection.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{invalid, AfemError, Result};

pub type Point = [f64; 2];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DomainKind {
    UnitCircle,
    LShape,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DomainSpec {
    pub kind: DomainKind,
    /// Boundary vertices of the initial polygon (circle only).
    pub circle_segments: usize,
}

/// Boundary polygon resolution used when none is given.
pub const DEFAULT_CIRCLE_SEGMENTS: usize = 8;

impl DomainSpec {
    pub fn unit_circle(segments: usize) -> Self {
        DomainSpec {
            kind: DomainKind::UnitCircle,
            circle_segments: segments,
        }
    }

    pub fn l_shape() -> Self {
        DomainSpec {
            kind: DomainKind::LShape,
            circle_segments: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind == DomainKind::UnitCircle && self.circle_segments < 8 {
            return invalid(format!(
                "circle_segments must be >= 8, got {}",
                self.circle_segments
            ));
        }
        Ok(())
    }
}

/// A conforming triangulation.
///
/// Elements are stored counter-clockwise with the refinement edge between
/// local vertices 0 and 1.
#[derive(Clone, Debug)]
pub struct Triangulation {
    vertices: Vec<Point>,
    elements: Vec<[usize; 3]>,
    boundary: Vec<bool>,
    level: usize,
    curved: bool,
    dof: Vec<Option<usize>>,
    interior: Vec<usize>,
    id: u64,
}

pub(crate) fn signed_area(a: Point, b: Point, c: Point) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))
}

fn dist(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

fn edge_key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

impl Triangulation {
    /// Builds a mesh from elements already in refinement-edge order.
    pub fn new(
        vertices: Vec<Point>,
        elements: Vec<[usize; 3]>,
        boundary: Vec<bool>,
        level: usize,
    ) -> Result<Self> {
        Self::assemble(vertices, elements, boundary, level, false)
    }

    /// Builds a mesh from arbitrary triangles, assigning the longest edge of
    /// each element as its refinement edge (ties: smallest opposite vertex id).
    /// Boundary flags are derived from edges used by a single element.
    pub fn from_triangles(vertices: Vec<Point>, triangles: &[[usize; 3]]) -> Result<Self> {
        let elements = label_longest_edge(&vertices, triangles)?;
        let boundary = boundary_from_edges(vertices.len(), &elements);
        Self::assemble(vertices, elements, boundary, 0, false)
    }

    fn assemble(
        vertices: Vec<Point>,
        elements: Vec<[usize; 3]>,
        boundary: Vec<bool>,
        level: usize,
        curved: bool,
    ) -> Result<Self> {
        if boundary.len() != vertices.len() {
            return invalid("boundary flag count differs from vertex count");
        }
        let mut dof = vec![None; vertices.len()];
        let mut interior = Vec::new();
        for (v, &b) in boundary.iter().enumerate() {
            if !b {
                dof[v] = Some(interior.len());
                interior.push(v);
            }
        }
        let mut mesh = Triangulation {
            vertices,
            elements,
            boundary,
            level,
            curved,
            dof,
            interior,
            id: 0,
        };
        mesh.check_conforming()?;
        mesh.id = mesh.fingerprint();
        Ok(mesh)
    }

    fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        let mut eat = |x: u64| {
            for k in 0..8 {
                h ^= (x >> (8 * k)) & 0xff;
                h = h.wrapping_mul(0x100000001b3);
            }
        };
        eat(self.vertices.len() as u64);
        eat(self.level as u64);
        for p in &self.vertices {
            eat(p[0].to_bits());
            eat(p[1].to_bits());
        }
        for e in &self.elements {
            for &v in e {
                eat(v as u64);
            }
        }
        h
    }

    /// Validates orientation, edge sharing, boundary flags and topology.
    pub fn check_conforming(&self) -> Result<()> {
        let nv = self.vertices.len();
        let mut edges: HashMap<(usize, usize), (u32, usize, usize)> = HashMap::new();
        for (t, e) in self.elements.iter().enumerate() {
            if e.iter().any(|&v| v >= nv) || e[0] == e[1] || e[1] == e[2] || e[0] == e[2] {
                return invalid(format!("element {t} has invalid vertex ids"));
            }
            let a = signed_area(
                self.vertices[e[0]],
                self.vertices[e[1]],
                self.vertices[e[2]],
            );
            if !(a > 0.0) {
                return Err(AfemError::NonConforming(format!(
                    "element {t} has non-positive oriented area {a:e}"
                )));
            }
            for k in 0..3 {
                let (a, b) = (e[k], e[(k + 1) % 3]);
                let ent = edges.entry(edge_key(a, b)).or_insert((0, a, b));
                ent.0 += 1;
                if ent.0 == 2 && !(ent.1 == b && ent.2 == a) {
                    return Err(AfemError::NonConforming(format!(
                        "edge ({a},{b}) shared with inconsistent orientation"
                    )));
                }
                if ent.0 > 2 {
                    return Err(AfemError::NonConforming(format!(
                        "edge ({a},{b}) used more than twice"
                    )));
                }
            }
        }
        let mut on_boundary = vec![false; nv];
        let mut n_boundary_edges = 0usize;
        for (&(a, b), &(c, _, _)) in &edges {
            if c == 1 {
                n_boundary_edges += 1;
                on_boundary[a] = true;
                on_boundary[b] = true;
            }
        }
        if on_boundary != self.boundary {
            return Err(AfemError::NonConforming(
                "boundary flags disagree with boundary edges (hanging node?)".into(),
            ));
        }
        let n_boundary_vertices = on_boundary.iter().filter(|&&b| b).count();
        let euler = nv as i64 - edges.len() as i64 + self.elements.len() as i64;
        if euler != 1 || n_boundary_edges != n_boundary_vertices {
            return Err(AfemError::NonConforming(format!(
                "not a conforming simply connected triangulation (Euler characteristic {euler})"
            )));
        }
        Ok(())
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn elements(&self) -> &[[usize; 3]] {
        &self.elements
    }

    pub fn boundary_flags(&self) -> &[bool] {
        &self.boundary
    }

    pub fn is_boundary(&self, v: usize) -> bool {
        self.boundary[v]
    }

    pub fn level(&self) -> usize {
        self.level
    }

    /// Identifier derived from the mesh contents.
    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_elements(&self) -> usize {
        self.elements.len()
    }

    /// Number of interior nodes (degrees of freedom).
    pub fn n_dofs(&self) -> usize {
        self.interior.len()
    }

    /// Degree of freedom of vertex `v`, if interior.
    pub fn dof(&self, v: usize) -> Option<usize> {
        self.dof[v]
    }

    /// Vertex ids of the interior nodes, indexed by dof.
    pub fn interior_nodes(&self) -> &[usize] {
        &self.interior
    }

    pub fn element_points(&self, t: usize) -> [Point; 3] {
        let e = self.elements[t];
        [
            self.vertices[e[0]],
            self.vertices[e[1]],
            self.vertices[e[2]],
        ]
    }

    pub fn area(&self, t: usize) -> f64 {
        let p = self.element_points(t);
        signed_area(p[0], p[1], p[2])
    }

    pub fn diameter(&self, t: usize) -> f64 {
        let p = self.element_points(t);
        dist(p[0], p[1]).max(dist(p[1], p[2])).max(dist(p[2], p[0]))
    }

    /// h_T = |T|^{1/2}.
    pub fn mesh_size(&self, t: usize) -> f64 {
        self.area(t).sqrt()
    }

    /// max_T diam(T)^2 / |T|.
    pub fn shape_regularity(&self) -> f64 {
        (0..self.n_elements())
            .map(|t| self.diameter(t).powi(2) / self.area(t))
            .fold(0.0, f64::max)
    }

    /// Elements incident to each vertex, in increasing element order.
    pub fn vertex_elements(&self) -> Vec<Vec<usize>> {
        let mut ve = vec![Vec::new(); self.vertices.len()];
        for (t, e) in self.elements.iter().enumerate() {
            for &v in e {
                ve[v].push(t);
            }
        }
        ve
    }

    /// Elements sharing at least one vertex with `t` (including `t`), sorted.
    pub fn element_patch(&self, t: usize) -> Result<Vec<usize>> {
        if t >= self.n_elements() {
            return invalid(format!("unknown element id {t}"));
        }
        let e = self.elements[t];
        let mut out: Vec<usize> = (0..self.n_elements())
            .filter(|&u| self.elements[u].iter().any(|v| e.contains(v)))
            .collect();
        out.dedup();
        Ok(out)
    }

    /// Distance from `x` to the boundary of element `t`; `x` must lie in `t`.
    pub fn skeleton_distance(&self, x: Point, t: usize) -> Result<f64> {
        if t >= self.n_elements() {
            return invalid(format!("unknown element id {t}"));
        }
        let p = self.element_points(t);
        let area2 = 2.0 * signed_area(p[0], p[1], p[2]);
        let mut best = f64::INFINITY;
        for k in 0..3 {
            let (a, b) = (p[(k + 1) % 3], p[(k + 2) % 3]);
            let h = 2.0 * signed_area(a, b, x) / dist(a, b);
            let bary = 2.0 * signed_area(a, b, x) / area2;
            if bary < -1e-12 {
                return invalid(format!(
                    "point ({}, {}) lies outside element {t}",
                    x[0], x[1]
                ));
            }
            best = best.min(h.max(0.0));
        }
        Ok(best)
    }

    /// Writes the text dump: "nv ne", then "x y b" rows, then "v0 v1 v2" rows.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{} {}", self.n_vertices(), self.n_elements());
        for (p, &b) in self.vertices.iter().zip(&self.boundary) {
            let _ = writeln!(s, "{} {} {}", p[0], p[1], b as u8);
        }
        for e in &self.elements {
            let _ = writeln!(s, "{} {} {}", e[0], e[1], e[2]);
        }
        s
    }

    pub fn write_text(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    /// Parses the text dump written by [`Triangulation::to_text`].
    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let bad = || AfemError::InvalidInput("malformed mesh dump".into());
        let head: Vec<usize> = lines
            .next()
            .ok_or_else(bad)?
            .split_whitespace()
            .map(|x| x.parse().map_err(|_| bad()))
            .collect::<Result<_>>()?;
        if head.len() != 2 {
            return Err(bad());
        }
        let mut vertices = Vec::with_capacity(head[0]);
        let mut boundary = Vec::with_capacity(head[0]);
        for _ in 0..head[0] {
            let f: Vec<&str> = lines.next().ok_or_else(bad)?.split_whitespace().collect();
            if f.len() != 3 {
                return Err(bad());
            }
            let x: f64 = f[0].parse().map_err(|_| bad())?;
            let y: f64 = f[1].parse().map_err(|_| bad())?;
            vertices.push([x, y]);
            boundary.push(f[2] == "1");
        }
        let mut elements = Vec::with_capacity(head[1]);
        for _ in 0..head[1] {
            let f: Vec<usize> = lines
                .next()
                .ok_or_else(bad)?
                .split_whitespace()
                .map(|x| x.parse().map_err(|_| bad()))
                .collect::<Result<_>>()?;
            if f.len() != 3 {
                return Err(bad());
            }
            elements.push([f[0], f[1], f[2]]);
        }
        Self::new(vertices, elements, boundary, 0)
    }
}

fn boundary_from_edges(nv: usize, elements: &[[usize; 3]]) -> Vec<bool> {
    let mut count: HashMap<(usize, usize), u32> = HashMap::new();
    for e in elements {
        for k in 0..3 {
            *count.entry(edge_key(e[k], e[(k + 1) % 3])).or_insert(0) += 1;
        }
    }
    let mut b = vec![false; nv];
    for (&(x, y), &c) in &count {
        if c == 1 {
            b[x] = true;
            b[y] = true;
        }
    }
    b
}

fn label_longest_edge(vertices: &[Point], triangles: &[[usize; 3]]) -> Result<Vec<[usize; 3]>> {
    let mut out = Vec::with_capacity(triangles.len());
    for (t, tri) in triangles.iter().enumerate() {
        if tri.iter().any(|&v| v >= vertices.len()) {
            return invalid(format!("triangle {t} references an unknown vertex"));
        }
        // opposite vertex k, edge length
        let mut best: Option<(f64, usize)> = None;
        for k in 0..3 {
            let (a, b) = (tri[(k + 1) % 3], tri[(k + 2) % 3]);
            let len = dist(vertices[a], vertices[b]);
            let better = match best {
                None => true,
                Some((l, opp)) => {
                    len > l * (1.0 + 1e-12) || (len >= l * (1.0 - 1e-12) && tri[k] < tri[opp])
                }
            };
            if better {
                best = Some((len, k));
            }
        }
        let k = best.map(|b| b.1).unwrap_or(0);
        let (mut a, mut b, c) = (tri[(k + 1) % 3], tri[(k + 2) % 3], tri[k]);
        let area = signed_area(vertices[a], vertices[b], vertices[c]);
        if area == 0.0 {
            return invalid(format!("triangle {t} is degenerate"));
        }
        if area < 0.0 {
            std::mem::swap(&mut a, &mut b);
        }
        out.push([a, b, c]);
    }
    Ok(out)
}

/// Builds the initial triangulation of a domain.
pub fn build_initial_mesh(spec: &DomainSpec) -> Result<Triangulation> {
    spec.validate()?;
    match spec.kind {
        DomainKind::LShape => {
            let vertices = vec![
                [0.0, 0.0],
                [-1.0, 0.0],
                [-1.0, -1.0],
                [0.0, -1.0],
                [1.0, -1.0],
                [1.0, 0.0],
                [-1.0, 1.0],
                [0.0, 1.0],
            ];
            // diagonals of the three unit squares all pass through the origin
            let tris = [
                [0, 1, 2],
                [0, 2, 3],
                [0, 3, 4],
                [0, 4, 5],
                [0, 7, 6],
                [0, 6, 1],
            ];
            Triangulation::from_triangles(vertices, &tris)
        }
        DomainKind::UnitCircle => {
            let n = spec.circle_segments;
            let mut vertices = vec![[0.0, 0.0]];
            for k in 0..n {
                let a = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
                vertices.push([a.cos(), a.sin()]);
            }
            let tris: Vec<[usize; 3]> = (0..n).map(|k| [0, 1 + k, 1 + (k + 1) % n]).collect();
            let mut mesh = Triangulation::from_triangles(vertices, &tris)?;
            mesh.curved = true;
            Ok(mesh)
        }
    }
}

/// Transfer of P1 functions from a coarse to a fine mesh.
///
/// Every fine vertex stores its coarse parent vertices with weights.
#[derive(Clone, Debug)]
pub struct Prolongation {
    coarse_id: u64,
    fine_id: u64,
    n_coarse_vertices: usize,
    parents: Vec<Vec<(usize, f64)>>,
    coarse_dof: Vec<Option<usize>>,
    fine_interior: Vec<usize>,
}

impl Prolongation {
    fn build(
        coarse: &Triangulation,
        fine: &Triangulation,
        parents: Vec<Vec<(usize, f64)>>,
    ) -> Self {
        Prolongation {
            coarse_id: coarse.id,
            fine_id: fine.id,
            n_coarse_vertices: coarse.n_vertices(),
            parents,
            coarse_dof: coarse.dof.clone(),
            fine_interior: fine.interior.clone(),
        }
    }

    pub fn coarse_id(&self) -> u64 {
        self.coarse_id
    }

    pub fn fine_id(&self) -> u64 {
        self.fine_id
    }

    pub fn n_coarse_dofs(&self) -> usize {
        self.coarse_dof.iter().filter(|d| d.is_some()).count()
    }

    pub fn n_fine_dofs(&self) -> usize {
        self.fine_interior.len()
    }

    /// Coarse parents of fine vertex `v` with weights.
    pub fn parents(&self, v: usize) -> &[(usize, f64)] {
        &self.parents[v]
    }

    pub fn n_fine_vertices(&self) -> usize {
        self.parents.len()
    }

    /// Coarse parent dofs of the fine dof `z`, with weights.
    pub fn dof_parents(&self, z: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.parents[self.fine_interior[z]]
            .iter()
            .filter_map(|&(c, w)| self.coarse_dof[c].map(|d| (d, w)))
    }

    /// Maps coarse dof values to fine dof values.
    pub fn apply(&self, coarse: &[f64]) -> Result<Vec<f64>> {
        if coarse.len() != self.n_coarse_dofs() {
            return Err(AfemError::MeshMismatch(format!(
                "prolongation expects {} coarse dofs, got {}",
                self.n_coarse_dofs(),
                coarse.len()
            )));
        }
        Ok((0..self.fine_interior.len())
            .map(|z| self.dof_parents(z).map(|(d, w)| w * coarse[d]).sum())
            .collect())
    }

    /// Applies the transpose: fine dof vector to coarse dof vector.
    pub fn apply_transpose(&self, fine: &[f64]) -> Result<Vec<f64>> {
        if fine.len() != self.n_fine_dofs() {
            return Err(AfemError::MeshMismatch(
                "fine vector length mismatch".into(),
            ));
        }
        let mut out = vec![0.0; self.n_coarse_dofs()];
        for (z, &y) in fine.iter().enumerate() {
            for (d, w) in self.dof_parents(z) {
                out[d] += w * y;
            }
        }
        Ok(out)
    }

    /// Maps values at all coarse vertices to values at all fine vertices.
    pub fn apply_vertices(&self, coarse: &[f64]) -> Result<Vec<f64>> {
        if coarse.len() != self.n_coarse_vertices {
            return Err(AfemError::MeshMismatch(
                "coarse vertex vector length mismatch".into(),
            ));
        }
        Ok(self
            .parents
            .iter()
            .map(|p| p.iter().map(|&(c, w)| w * coarse[c]).sum())
            .collect())
    }

    /// Composition: `self` maps A to B, `next` maps B to C; result maps A to C.
    pub fn then(&self, next: &Prolongation) -> Result<Prolongation> {
        if next.coarse_id != self.fine_id {
            return Err(AfemError::MeshMismatch("prolongations do not chain".into()));
        }
        let parents = next
            .parents
            .iter()
            .map(|p| {
                let mut acc: Vec<(usize, f64)> = Vec::new();
                for &(mid, w) in p {
                    for &(c, w2) in &self.parents[mid] {
                        match acc.iter_mut().find(|e| e.0 == c) {
                            Some(e) => e.1 += w * w2,
                            None => acc.push((c, w * w2)),
                        }
                    }
                }
                acc
            })
            .collect();
        Ok(Prolongation {
            coarse_id: self.coarse_id,
            fine_id: next.fine_id,
            n_coarse_vertices: self.n_coarse_vertices,
            parents,
            coarse_dof: self.coarse_dof.clone(),
            fine_interior: next.fine_interior.clone(),
        })
    }
}

/// Result of a refinement step.
#[derive(Clone, Debug)]
pub struct Refinement {
    pub mesh: Triangulation,
    pub prolongation: Prolongation,
    /// Coarse parent element of each fine element.
    pub parent: Vec<usize>,
    /// Number of sons of each coarse element (1 if untouched).
    pub n_sons: Vec<usize>,
}

struct EdgeTable {
    /// per element: ids of edges (v0,v1), (v1,v2), (v2,v0)
    of_element: Vec<[usize; 3]>,
    verts: Vec<(usize, usize)>,
    elems: Vec<[usize; 2]>,
    count: Vec<u8>,
}

fn edge_table(mesh: &Triangulation) -> EdgeTable {
    let mut index: HashMap<(usize, usize), usize> = HashMap::with_capacity(2 * mesh.n_elements());
    let mut t = EdgeTable {
        of_element: Vec::new(),
        verts: Vec::new(),
        elems: Vec::new(),
        count: Vec::new(),
    };
    for (el, e) in mesh.elements.iter().enumerate() {
        let mut ids = [0; 3];
        for k in 0..3 {
            let key = edge_key(e[k], e[(k + 1) % 3]);
            let id = *index.entry(key).or_insert_with(|| {
                t.verts.push(key);
                t.elems.push([usize::MAX; 2]);
                t.count.push(0);
                t.verts.len() - 1
            });
            t.elems[id][t.count[id] as usize] = el;
            t.count[id] += 1;
            ids[k] = id;
        }
        t.of_element.push(ids);
    }
    t
}

/// Newest-vertex bisection: bisects all edges of marked elements plus closure.
pub fn refine(mesh: &Triangulation, marked: &[usize]) -> Result<Refinement> {
    let ne = mesh.n_elements();
    if let Some(&bad) = marked.iter().find(|&&t| t >= ne) {
        return invalid(format!("unknown element id {bad}"));
    }
    let edges = edge_table(mesh);
    let mut marked_edge = vec![false; edges.verts.len()];
    let mut work: Vec<usize> = Vec::new();
    let mark = |id: usize, marked_edge: &mut Vec<bool>, work: &mut Vec<usize>| {
        if !marked_edge[id] {
            marked_edge[id] = true;
            for k in 0..edges.count[id] as usize {
                work.push(edges.elems[id][k]);
            }
        }
    };
    for &t in marked {
        for k in 0..3 {
            mark(edges.of_element[t][k], &mut marked_edge, &mut work);
        }
    }
    let fuel_max = 10 * ne.max(1);
    let mut fuel = fuel_max;
    while let Some(t) = work.pop() {
        if fuel == 0 {
            return Err(AfemError::ClosureFuel(fuel_max));
        }
        fuel -= 1;
        let ids = edges.of_element[t];
        if !marked_edge[ids[0]] && (marked_edge[ids[1]] || marked_edge[ids[2]]) {
            mark(ids[0], &mut marked_edge, &mut work);
        }
    }

    let mut vertices = mesh.vertices.clone();
    let mut boundary = mesh.boundary.clone();
    let mut parents: Vec<Vec<(usize, f64)>> =
        (0..mesh.n_vertices()).map(|v| vec![(v, 1.0)]).collect();
    let mut midpoint = vec![usize::MAX; edges.verts.len()];
    for ids in &edges.of_element {
        for &id in &[ids[0], ids[2], ids[1]] {
            if marked_edge[id] && midpoint[id] == usize::MAX {
                let (a, b) = edges.verts[id];
                let (pa, pb) = (mesh.vertices[a], mesh.vertices[b]);
                let mut m = [0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])];
                let on_boundary = edges.count[id] == 1;
                if on_boundary && mesh.curved {
                    let r = m[0].hypot(m[1]);
                    m = [m[0] / r, m[1] / r];
                }
                midpoint[id] = vertices.len();
                vertices.push(m);
                boundary.push(on_boundary);
                parents.push(vec![(a, 0.5), (b, 0.5)]);
            }
        }
    }

    let mut elements = Vec::with_capacity(ne * 2);
    let mut parent = Vec::with_capacity(ne * 2);
    let mut n_sons = vec![1usize; ne];
    for (t, e) in mesh.elements.iter().enumerate() {
        let ids = edges.of_element[t];
        if !marked_edge[ids[0]] {
            elements.push(*e);
            parent.push(t);
            continue;
        }
        let [v0, v1, v2] = *e;
        let m = midpoint[ids[0]];
        let before = elements.len();
        if marked_edge[ids[2]] {
            let ma = midpoint[ids[2]];
            elements.push([m, v2, ma]);
            elements.push([v0, m, ma]);
        } else {
            elements.push([v2, v0, m]);
        }
        if marked_edge[ids[1]] {
            let mb = midpoint[ids[1]];
            elements.push([m, v1, mb]);
            elements.push([v2, m, mb]);
        } else {
            elements.push([v1, v2, m]);
        }
        n_sons[t] = elements.len() - before;
        parent.resize(elements.len(), t);
    }
    let fine = Triangulation::assemble(vertices, elements, boundary, mesh.level + 1, mesh.curved)?;
    let prolongation = Prolongation::build(mesh, &fine, parents);
    Ok(Refinement {
        mesh: fine,
        prolongation,
        parent,
        n_sons,
    })
}

/// Refinement with all elements marked.
pub fn uniform_refine(mesh: &Triangulation) -> Result<Refinement> {
    let all: Vec<usize> = (0..mesh.n_elements()).collect();
    refine(mesh, &all)
}

/// For each coarse element, the fine interior vertices on its edges that are
/// not coarse vertices.
pub fn new_interior_nodes(
    coarse: &Triangulation,
    fine: &Triangulation,
    p: &Prolongation,
) -> Result<Vec<Vec<usize>>> {
    if p.coarse_id != coarse.id || p.fine_id != fine.id {
        return Err(AfemError::MeshMismatch(
            "prolongation does not connect these meshes".into(),
        ));
    }
    let mut by_edge: HashMap<(usize, usize), usize> = HashMap::new();
    for v in coarse.n_vertices()..fine.n_vertices() {
        let par = &p.parents[v];
        if par.len() == 2 && !fine.boundary[v] {
            by_edge.insert(edge_key(par[0].0, par[1].0), v);
        }
    }
    Ok(coarse
        .elements
        .iter()
        .map(|e| {
            let mut nodes: Vec<usize> = (0..3)
                .filter_map(|k| by_edge.get(&edge_key(e[k], e[(k + 1) % 3])).copied())
                .collect();
            nodes.sort_unstable();
            nodes
        })
        .collect())
}

/// Fine element ids whose vertex set equals that of an element of `other`.
///
/// Vertex ids persist across refinements, so an element is identified by its
/// sorted vertex triple.
pub fn common_elements(a: &Triangulation, b: &Triangulation) -> Vec<(usize, usize)> {
    let key = |e: &[usize; 3]| {
        let mut k = *e;
        k.sort_unstable();
        k
    };
    let index: HashMap<[usize; 3], usize> = b
        .elements
        .iter()
        .enumerate()
        .map(|(t, e)| (key(e), t))
        .collect();
    a.elements
        .iter()
        .enumerate()
        .filter_map(|(t, e)| index.get(&key(e)).map(|&u| (t, u)))
        .collect()
}
