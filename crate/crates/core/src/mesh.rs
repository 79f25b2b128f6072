//! Conforming triangulations with newest-vertex bisection.
//!
//! Every element is stored as `[newest, a, b]` in counter-clockwise order; its
//! refinement edge is `(a, b)`, the edge opposite the newest vertex. Bisecting
//! at the midpoint `p` of `(a, b)` yields the children `[p, newest, a]` and
//! `[p, b, newest]`, which keeps the orientation and hands each child one of the
//! parent's remaining edges as its refinement edge.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{BufRead, Write};
use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};

pub type Point = [f64; 2];

/// Sorted vertex pair identifying an undirected edge.
pub type Edge = (usize, usize);

static NEXT_MESH_ID: AtomicU64 = AtomicU64::new(1);

fn fresh_id() -> u64 {
    NEXT_MESH_ID.fetch_add(1, Ordering::Relaxed)
}

#[inline]
pub fn edge_key(a: usize, b: usize) -> Edge {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Geometry behind a boundary tag, used when snapping new boundary vertices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Curve {
    Straight,
    Circle { center: Point, radius: f64 },
}

impl Curve {
    pub fn project(&self, p: Point) -> Point {
        match *self {
            Curve::Straight => p,
            Curve::Circle { center, radius } => {
                let dx = p[0] - center[0];
                let dy = p[1] - center[1];
                let r = dx.hypot(dy);
                if r == 0.0 {
                    return p;
                }
                [center[0] + radius * dx / r, center[1] + radius * dy / r]
            }
        }
    }
}

/// Links a refined mesh to the mesh it was produced from.
#[derive(Debug, Clone)]
pub struct RefinementRecord {
    pub coarse_id: u64,
    pub coarse_vertices: usize,
    pub coarse_elements: usize,
    /// Endpoints of the coarse edge bisected by each new vertex, in vertex order.
    pub midpoint_parents: Vec<Edge>,
    /// Coarse element containing each fine element.
    pub element_parent: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct Mesh {
    id: u64,
    vertices: Vec<Point>,
    elements: Vec<[usize; 3]>,
    generation: Vec<u32>,
    boundary: BTreeMap<Edge, u32>,
    curves: Vec<Curve>,
    snap_boundary: bool,
    refinement: Option<RefinementRecord>,
}

#[inline]
fn signed_area(p: &Point, q: &Point, r: &Point) -> f64 {
    0.5 * ((q[0] - p[0]) * (r[1] - p[1]) - (r[0] - p[0]) * (q[1] - p[1]))
}

#[inline]
fn dist2(p: &Point, q: &Point) -> f64 {
    (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)
}

/// Rotates a counter-clockwise triple so that its longest edge is opposite slot 0.
fn longest_edge_first(vertices: &[Point], t: [usize; 3]) -> [usize; 3] {
    let mut best = 0;
    let mut best_len = -1.0;
    for i in 0..3 {
        let l = dist2(&vertices[t[(i + 1) % 3]], &vertices[t[(i + 2) % 3]]);
        if l > best_len * (1.0 + 1e-12) {
            best = i;
            best_len = l;
        }
    }
    [t[best], t[(best + 1) % 3], t[(best + 2) % 3]]
}

impl Mesh {
    /// Builds a mesh from raw vertices and triangles. Triangles are reoriented
    /// counter-clockwise, the longest edge becomes the refinement edge, and every
    /// edge owned by a single triangle is tagged as boundary `1`.
    pub fn new(vertices: Vec<Point>, elements: Vec<[usize; 3]>) -> Result<Self> {
        let mut mesh = Self::assemble(vertices, elements, BTreeMap::new(), Vec::new())?;
        mesh.boundary = mesh.free_edges().into_iter().map(|e| (e, 1)).collect();
        mesh.validate()?;
        Ok(mesh)
    }

    /// Like [`Mesh::new`] but with explicit boundary tags (tag `t` maps to
    /// `curves[t - 1]`; missing curves are straight).
    pub fn with_boundary(
        vertices: Vec<Point>,
        elements: Vec<[usize; 3]>,
        boundary: BTreeMap<Edge, u32>,
        curves: Vec<Curve>,
    ) -> Result<Self> {
        let mesh = Self::assemble(vertices, elements, boundary, curves)?;
        mesh.validate()?;
        Ok(mesh)
    }

    fn assemble(
        vertices: Vec<Point>,
        elements: Vec<[usize; 3]>,
        boundary: BTreeMap<Edge, u32>,
        curves: Vec<Curve>,
    ) -> Result<Self> {
        let nv = vertices.len();
        let mut oriented = Vec::with_capacity(elements.len());
        for (t, e) in elements.into_iter().enumerate() {
            if e.iter().any(|&v| v >= nv) {
                return Err(Error::InvalidMesh(format!("element {t} references a missing vertex")));
            }
            let a = signed_area(&vertices[e[0]], &vertices[e[1]], &vertices[e[2]]);
            let e = if a < 0.0 { [e[0], e[2], e[1]] } else { e };
            oriented.push(longest_edge_first(&vertices, e));
        }
        let generation = vec![0; oriented.len()];
        Ok(Mesh {
            id: fresh_id(),
            vertices,
            elements: oriented,
            generation,
            boundary,
            curves,
            snap_boundary: false,
            refinement: None,
        })
    }

    /// Builds a mesh whose element triples already carry their refinement edge in
    /// slot 0 (as read back from a file), only fixing orientation.
    fn from_labelled(vertices: Vec<Point>, elements: Vec<[usize; 3]>, boundary: BTreeMap<Edge, u32>) -> Result<Self> {
        let nv = vertices.len();
        for (t, e) in elements.iter().enumerate() {
            if e.iter().any(|&v| v >= nv) {
                return Err(Error::InvalidMesh(format!("element {t} references a missing vertex")));
            }
        }
        let elements: Vec<[usize; 3]> = elements
            .into_iter()
            .map(|e| {
                if signed_area(&vertices[e[0]], &vertices[e[1]], &vertices[e[2]]) < 0.0 {
                    [e[0], e[2], e[1]]
                } else {
                    e
                }
            })
            .collect();
        let mesh = Mesh {
            id: fresh_id(),
            generation: vec![0; elements.len()],
            vertices,
            elements,
            boundary,
            curves: Vec::new(),
            snap_boundary: false,
            refinement: None,
        };
        mesh.validate()?;
        Ok(mesh)
    }

    /// Enables projection of new boundary midpoints onto curved boundaries.
    /// Snapping breaks exact nesting of the finite element spaces.
    pub fn set_snap_boundary(&mut self, snap: bool) {
        self.snap_boundary = snap;
    }

    pub fn snap_boundary(&self) -> bool {
        self.snap_boundary
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn elements(&self) -> &[[usize; 3]] {
        &self.elements
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn generation(&self) -> &[u32] {
        &self.generation
    }

    pub fn boundary_edges(&self) -> &BTreeMap<Edge, u32> {
        &self.boundary
    }

    pub fn curves(&self) -> &[Curve] {
        &self.curves
    }

    pub fn refinement(&self) -> Option<&RefinementRecord> {
        self.refinement.as_ref()
    }

    /// Refinement edge of element `t` as a sorted vertex pair.
    pub fn refinement_edge(&self, t: usize) -> Edge {
        let e = self.elements[t];
        edge_key(e[1], e[2])
    }

    pub fn element_points(&self, t: usize) -> [Point; 3] {
        let e = self.elements[t];
        [self.vertices[e[0]], self.vertices[e[1]], self.vertices[e[2]]]
    }

    pub fn area(&self, t: usize) -> f64 {
        let [p, q, r] = self.element_points(t);
        signed_area(&p, &q, &r)
    }

    pub fn areas(&self) -> Vec<f64> {
        (0..self.num_elements()).map(|t| self.area(t)).collect()
    }

    pub fn total_area(&self) -> f64 {
        self.areas().iter().sum()
    }

    /// Piecewise constant mesh size `h_T = |T|^{1/2}`.
    pub fn mesh_size(&self) -> Vec<f64> {
        (0..self.num_elements()).map(|t| self.area(t).sqrt()).collect()
    }

    pub fn max_mesh_size(&self) -> f64 {
        self.mesh_size().into_iter().fold(0.0, f64::max)
    }

    /// Vertices lying on a boundary edge.
    pub fn boundary_vertex_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.num_vertices()];
        for &(a, b) in self.boundary.keys() {
            mask[a] = true;
            mask[b] = true;
        }
        mask
    }

    /// Curve associated with a boundary tag.
    pub fn curve(&self, tag: u32) -> Curve {
        if tag == 0 {
            return Curve::Straight;
        }
        self.curves.get(tag as usize - 1).copied().unwrap_or(Curve::Straight)
    }

    fn edge_elements(&self) -> HashMap<Edge, Vec<usize>> {
        let mut map: HashMap<Edge, Vec<usize>> = HashMap::with_capacity(self.num_elements() * 2);
        for (t, e) in self.elements.iter().enumerate() {
            for i in 0..3 {
                map.entry(edge_key(e[(i + 1) % 3], e[(i + 2) % 3])).or_default().push(t);
            }
        }
        map
    }

    /// Edges owned by exactly one element, sorted.
    fn free_edges(&self) -> Vec<Edge> {
        let mut free: Vec<Edge> = self
            .edge_elements()
            .into_iter()
            .filter_map(|(e, ts)| (ts.len() == 1).then_some(e))
            .collect();
        free.sort_unstable();
        free
    }

    /// All edges, sorted.
    pub fn edges(&self) -> Vec<Edge> {
        let mut edges: Vec<Edge> = self.edge_elements().into_keys().collect();
        edges.sort_unstable();
        edges
    }

    pub fn num_edges(&self) -> usize {
        self.edge_elements().len()
    }

    pub fn topology(&self) -> Topology {
        Topology::new(self)
    }

    /// Smallest interior angle over all elements, in radians.
    pub fn min_angle(&self) -> f64 {
        let mut min = std::f64::consts::PI;
        for t in 0..self.num_elements() {
            let p = self.element_points(t);
            for i in 0..3 {
                let a = p[i];
                let b = p[(i + 1) % 3];
                let c = p[(i + 2) % 3];
                let u = [b[0] - a[0], b[1] - a[1]];
                let v = [c[0] - a[0], c[1] - a[1]];
                let cos = (u[0] * v[0] + u[1] * v[1]) / (dist2(&a, &b).sqrt() * dist2(&a, &c).sqrt());
                min = min.min(cos.clamp(-1.0, 1.0).acos());
            }
        }
        min
    }

    /// Checks orientation, conformity and boundary bookkeeping.
    pub fn validate(&self) -> Result<()> {
        let nv = self.num_vertices();
        for (t, e) in self.elements.iter().enumerate() {
            if e.iter().any(|&v| v >= nv) || e[0] == e[1] || e[1] == e[2] || e[0] == e[2] {
                return Err(Error::InvalidMesh(format!("element {t} has invalid vertices {e:?}")));
            }
            let a = self.area(t);
            if !(a > 0.0) {
                return Err(Error::InvalidMesh(format!("element {t} has non-positive area {a}")));
            }
        }
        for (edge, ts) in self.edge_elements() {
            match ts.len() {
                1 => {
                    if !self.boundary.contains_key(&edge) {
                        return Err(Error::InvalidMesh(format!(
                            "edge {edge:?} has one element but is not a boundary edge (hanging node?)"
                        )));
                    }
                }
                2 => {
                    if self.boundary.contains_key(&edge) {
                        return Err(Error::InvalidMesh(format!("interior edge {edge:?} is tagged as boundary")));
                    }
                }
                n => return Err(Error::InvalidMesh(format!("edge {edge:?} is shared by {n} elements"))),
            }
        }
        let edges = self.edge_elements();
        for edge in self.boundary.keys() {
            if !edges.contains_key(edge) {
                return Err(Error::InvalidMesh(format!("boundary edge {edge:?} is not an element edge")));
            }
        }
        Ok(())
    }

    /// Bisects every marked element at least once and closes the result
    /// conformingly. Children are appended after the untouched elements.
    pub fn bisect(&self, marked: &[usize]) -> Result<Mesh> {
        let mut seeds = Vec::with_capacity(marked.len());
        for &t in marked {
            if t >= self.num_elements() {
                return Err(Error::InvalidArgument(format!("marked element {t} out of range")));
            }
            seeds.push(self.refinement_edge(t));
        }
        Ok(self.refine_edges(seeds))
    }

    /// Bisects all three edges of every marked element, so each marked
    /// element ends up with at least four children.
    pub fn bisect_all_edges(&self, marked: &[usize]) -> Result<Mesh> {
        let mut seeds = Vec::with_capacity(3 * marked.len());
        for &t in marked {
            if t >= self.num_elements() {
                return Err(Error::InvalidArgument(format!("marked element {t} out of range")));
            }
            let e = self.elements[t];
            seeds.extend([edge_key(e[0], e[1]), edge_key(e[1], e[2]), edge_key(e[2], e[0])]);
        }
        Ok(self.refine_edges(seeds))
    }

    /// Splits every element into four children (all edges bisected).
    pub fn uniform_refine(&self) -> Mesh {
        self.refine_edges(self.edges())
    }

    /// Vertex count after one [`Mesh::uniform_refine`].
    pub fn uniform_refine_vertex_count(&self) -> usize {
        self.num_vertices() + self.num_edges()
    }

    fn refine_edges(&self, seeds: Vec<Edge>) -> Mesh {
        let edge_elems = self.edge_elements();

        // closure: an element with any marked edge must have its refinement edge marked
        let mut marked: HashSet<Edge> = HashSet::with_capacity(seeds.len() * 2);
        let mut work = Vec::new();
        for e in seeds {
            if marked.insert(e) {
                work.push(e);
            }
        }
        while let Some(e) = work.pop() {
            for &t in &edge_elems[&e] {
                let r = self.refinement_edge(t);
                if marked.insert(r) {
                    work.push(r);
                }
            }
        }

        let mut vertices = self.vertices.clone();
        let mut midpoints: HashMap<Edge, usize> = HashMap::with_capacity(marked.len());
        let mut midpoint_parents = Vec::with_capacity(marked.len());
        let mut kept = Vec::with_capacity(self.num_elements());
        let mut kept_gen = Vec::with_capacity(self.num_elements());
        let mut kept_parent = Vec::with_capacity(self.num_elements());
        let mut children = Vec::new();
        let mut children_gen = Vec::new();
        let mut children_parent = Vec::new();

        let mut stack = Vec::new();
        for (t, &elem) in self.elements.iter().enumerate() {
            if !marked.contains(&self.refinement_edge(t)) {
                kept.push(elem);
                kept_gen.push(self.generation[t]);
                kept_parent.push(t);
                continue;
            }
            stack.push((elem, self.generation[t]));
            while let Some((e, g)) = stack.pop() {
                let key = edge_key(e[1], e[2]);
                if !marked.contains(&key) {
                    children.push(e);
                    children_gen.push(g);
                    children_parent.push(t);
                    continue;
                }
                let p = *midpoints.entry(key).or_insert_with(|| {
                    let (a, b) = key;
                    let (pa, pb) = (vertices[a], vertices[b]);
                    vertices.push([0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])]);
                    midpoint_parents.push(key);
                    vertices.len() - 1
                });
                // second child pushed first so the first child is finished first
                stack.push(([p, e[2], e[0]], g + 1));
                stack.push(([p, e[0], e[1]], g + 1));
            }
        }

        let mut boundary = BTreeMap::new();
        for (&(a, b), &tag) in &self.boundary {
            match midpoints.get(&(a, b)) {
                Some(&p) => {
                    boundary.insert(edge_key(a, p), tag);
                    boundary.insert(edge_key(p, b), tag);
                    if self.snap_boundary {
                        vertices[p] = self.curve(tag).project(vertices[p]);
                    }
                }
                None => {
                    boundary.insert((a, b), tag);
                }
            }
        }

        let coarse_vertices = self.num_vertices();
        kept.extend(children);
        kept_gen.extend(children_gen);
        kept_parent.extend(children_parent);
        Mesh {
            id: fresh_id(),
            vertices,
            elements: kept,
            generation: kept_gen,
            boundary,
            curves: self.curves.clone(),
            snap_boundary: self.snap_boundary,
            refinement: Some(RefinementRecord {
                coarse_id: self.id,
                coarse_vertices,
                coarse_elements: self.num_elements(),
                midpoint_parents,
                element_parent: kept_parent,
            }),
        }
    }

    /// Writes the plain-text mesh format: a `vertices N elements M` header,
    /// `x y boundary_tag` per vertex and `v0 v1 v2 refedge` per element, where
    /// `refedge` is the local index of the vertex opposite the refinement edge.
    pub fn write_ascii<W: Write>(&self, mut w: W) -> Result<()> {
        let mut vtag = vec![0u32; self.num_vertices()];
        for (&(a, b), &tag) in &self.boundary {
            for v in [a, b] {
                if vtag[v] == 0 || tag < vtag[v] {
                    vtag[v] = tag;
                }
            }
        }
        writeln!(w, "vertices {} elements {}", self.num_vertices(), self.num_elements())?;
        for (p, tag) in self.vertices.iter().zip(&vtag) {
            writeln!(w, "{:e} {:e} {}", p[0], p[1], tag)?;
        }
        for e in &self.elements {
            writeln!(w, "{} {} {} 0", e[0], e[1], e[2])?;
        }
        Ok(())
    }

    pub fn read_ascii<R: BufRead>(r: R) -> Result<Mesh> {
        let mut lines = r.lines();
        let mut next = || -> Result<String> {
            loop {
                match lines.next() {
                    Some(line) => {
                        let line = line?;
                        if !line.trim().is_empty() {
                            return Ok(line);
                        }
                    }
                    None => return Err(Error::Parse("unexpected end of mesh file".into())),
                }
            }
        };
        let header = next()?;
        let parts: Vec<&str> = header.split_whitespace().collect();
        if parts.len() != 4 || parts[0] != "vertices" || parts[2] != "elements" {
            return Err(Error::Parse(format!("bad mesh header `{header}`")));
        }
        let parse_usize = |s: &str| s.parse::<usize>().map_err(|e| Error::Parse(format!("`{s}`: {e}")));
        let parse_f64 = |s: &str| s.parse::<f64>().map_err(|e| Error::Parse(format!("`{s}`: {e}")));
        let nv = parse_usize(parts[1])?;
        let ne = parse_usize(parts[3])?;
        let mut vertices = Vec::with_capacity(nv);
        let mut vtag = Vec::with_capacity(nv);
        for _ in 0..nv {
            let line = next()?;
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 3 {
                return Err(Error::Parse(format!("bad vertex line `{line}`")));
            }
            vertices.push([parse_f64(f[0])?, parse_f64(f[1])?]);
            vtag.push(f[2].parse::<u32>().map_err(|e| Error::Parse(e.to_string()))?);
        }
        let mut elements = Vec::with_capacity(ne);
        for _ in 0..ne {
            let line = next()?;
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 4 {
                return Err(Error::Parse(format!("bad element line `{line}`")));
            }
            let v = [parse_usize(f[0])?, parse_usize(f[1])?, parse_usize(f[2])?];
            let r = parse_usize(f[3])?;
            if r > 2 {
                return Err(Error::Parse(format!("refedge {r} out of range")));
            }
            elements.push([v[r], v[(r + 1) % 3], v[(r + 2) % 3]]);
        }
        let mut counts: HashMap<Edge, usize> = HashMap::new();
        for e in &elements {
            for i in 0..3 {
                *counts.entry(edge_key(e[(i + 1) % 3], e[(i + 2) % 3])).or_default() += 1;
            }
        }
        let mut boundary = BTreeMap::new();
        for (edge, c) in counts {
            if c == 1 {
                let (ta, tb) = (vtag.get(edge.0).copied().unwrap_or(0), vtag.get(edge.1).copied().unwrap_or(0));
                let tag = match (ta, tb) {
                    (0, 0) => 1,
                    (0, t) | (t, 0) => t,
                    (a, b) if a == b => a,
                    (a, b) => a.min(b),
                };
                boundary.insert(edge, tag);
            }
        }
        Self::from_labelled(vertices, elements, boundary)
    }
}

/// Element-to-element adjacency across edges.
#[derive(Debug, Clone)]
pub struct Topology {
    /// `neighbors[t][i]` is the element across the edge opposite local vertex `i`.
    pub neighbors: Vec<[Option<usize>; 3]>,
}

impl Topology {
    fn new(mesh: &Mesh) -> Self {
        let mut first: HashMap<Edge, (usize, usize)> = HashMap::with_capacity(mesh.num_elements() * 2);
        let mut neighbors = vec![[None; 3]; mesh.num_elements()];
        for (t, e) in mesh.elements().iter().enumerate() {
            for i in 0..3 {
                let key = edge_key(e[(i + 1) % 3], e[(i + 2) % 3]);
                if let Some((s, j)) = first.remove(&key) {
                    neighbors[t][i] = Some(s);
                    neighbors[s][j] = Some(t);
                } else {
                    first.insert(key, (t, i));
                }
            }
        }
        Topology { neighbors }
    }
}
