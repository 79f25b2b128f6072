//! P1 finite elements: assembly, norms, quasi-interpolation and prolongation.

use crate::error::{Error, Result};
use crate::mesh::{Mesh, Point};
use crate::quadrature::{degree2, degree4, to_physical};
use crate::sparse::SymmetricSparseMatrix;

/// One value per mesh vertex, tied to the mesh it was built on.
#[derive(Debug, Clone, PartialEq)]
pub struct NodalField {
    mesh_id: u64,
    values: Vec<f64>,
}

impl NodalField {
    pub fn new(mesh: &Mesh, values: Vec<f64>) -> Result<Self> {
        if values.len() != mesh.num_vertices() {
            return Err(Error::MeshMismatch(format!(
                "field has {} values but the mesh has {} vertices",
                values.len(),
                mesh.num_vertices()
            )));
        }
        Ok(NodalField { mesh_id: mesh.id(), values })
    }

    pub fn constant(mesh: &Mesh, c: f64) -> Self {
        NodalField { mesh_id: mesh.id(), values: vec![c; mesh.num_vertices()] }
    }

    pub fn from_fn(mesh: &Mesh, f: impl Fn(Point) -> f64) -> Self {
        NodalField { mesh_id: mesh.id(), values: mesh.vertices().iter().map(|&p| f(p)).collect() }
    }

    pub fn mesh_id(&self) -> u64 {
        self.mesh_id
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn check_on(&self, mesh: &Mesh) -> Result<()> {
        if self.mesh_id != mesh.id() || self.values.len() != mesh.num_vertices() {
            return Err(Error::MeshMismatch(format!(
                "field belongs to mesh {} but mesh {} was given",
                self.mesh_id,
                mesh.id()
            )));
        }
        Ok(())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        NodalField { mesh_id: self.mesh_id, values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn local(&self, elem: &[usize; 3]) -> [f64; 3] {
        [self.values[elem[0]], self.values[elem[1]], self.values[elem[2]]]
    }
}

/// Split of the vertices into free (interior) and Dirichlet (boundary) ones.
#[derive(Debug, Clone, PartialEq)]
pub struct DirichletMap {
    free: Vec<usize>,
    boundary: Vec<usize>,
    local: Vec<Option<usize>>,
}

impl DirichletMap {
    pub fn new(mesh: &Mesh) -> Self {
        let mask = mesh.boundary_vertex_mask();
        let mut free = Vec::new();
        let mut boundary = Vec::new();
        let mut local = vec![None; mask.len()];
        for (v, &b) in mask.iter().enumerate() {
            if b {
                boundary.push(v);
            } else {
                local[v] = Some(free.len());
                free.push(v);
            }
        }
        DirichletMap { free, boundary, local }
    }

    pub fn free(&self) -> &[usize] {
        &self.free
    }

    pub fn boundary(&self) -> &[usize] {
        &self.boundary
    }

    pub fn num_free(&self) -> usize {
        self.free.len()
    }

    pub fn num_vertices(&self) -> usize {
        self.local.len()
    }

    /// Free-dof index of a vertex.
    pub fn local(&self, v: usize) -> Option<usize> {
        self.local[v]
    }

    pub fn restrict_vec(&self, full: &[f64]) -> Vec<f64> {
        self.free.iter().map(|&v| full[v]).collect()
    }

    /// Extends free-dof values by zero on the boundary.
    pub fn extend(&self, reduced: &[f64]) -> Vec<f64> {
        let mut full = vec![0.0; self.local.len()];
        for (&v, &x) in self.free.iter().zip(reduced) {
            full[v] = x;
        }
        full
    }

    pub fn restrict_matrix(&self, a: &SymmetricSparseMatrix) -> SymmetricSparseMatrix {
        a.restrict(&self.free)
    }
}

/// Matrices of one mesh that do not depend on the design field.
#[derive(Debug, Clone)]
pub struct FemOperators {
    pub mesh_id: u64,
    pub dirichlet: DirichletMap,
    pub stiffness: SymmetricSparseMatrix,
    pub mass: SymmetricSparseMatrix,
    pub stiffness_free: SymmetricSparseMatrix,
    pub mass_free: SymmetricSparseMatrix,
    pub lumped_mass: Vec<f64>,
}

impl FemOperators {
    pub fn new(mesh: &Mesh) -> Self {
        let dirichlet = DirichletMap::new(mesh);
        let stiffness = assemble_stiffness(mesh);
        let mass = assemble_mass(mesh);
        let stiffness_free = dirichlet.restrict_matrix(&stiffness);
        let mass_free = dirichlet.restrict_matrix(&mass);
        FemOperators {
            mesh_id: mesh.id(),
            dirichlet,
            stiffness,
            mass,
            stiffness_free,
            mass_free,
            lumped_mass: lumped_mass(mesh),
        }
    }

    pub fn check_on(&self, mesh: &Mesh) -> Result<()> {
        if self.mesh_id != mesh.id() {
            return Err(Error::MeshMismatch(format!(
                "operators were built on mesh {} but mesh {} was given",
                self.mesh_id,
                mesh.id()
            )));
        }
        Ok(())
    }
}

/// Gradients of the three barycentric coordinates and the element area.
pub fn barycentric_gradients(p: &[Point; 3]) -> ([[f64; 2]; 3], f64) {
    let two_a = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
    let mut g = [[0.0; 2]; 3];
    for i in 0..3 {
        let (j, k) = ((i + 1) % 3, (i + 2) % 3);
        g[i] = [(p[j][1] - p[k][1]) / two_a, (p[k][0] - p[j][0]) / two_a];
    }
    (g, 0.5 * two_a)
}

pub fn local_stiffness(p: &[Point; 3]) -> [[f64; 3]; 3] {
    let (g, area) = barycentric_gradients(p);
    let mut k = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            k[i][j] = area * (g[i][0] * g[j][0] + g[i][1] * g[j][1]);
        }
    }
    k
}

pub fn local_mass(area: f64) -> [[f64; 3]; 3] {
    let d = area / 6.0;
    let o = area / 12.0;
    [[d, o, o], [o, d, o], [o, o, d]]
}

/// `∫_T φ ψ_i ψ_j` for P1 `φ` with nodal values `phi`.
pub fn local_weighted_mass(area: f64, phi: [f64; 3]) -> [[f64; 3]; 3] {
    let mut w = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            w[i][j] = (0..3)
                .map(|c| {
                    let m = if i == j && j == c {
                        area / 10.0
                    } else if i == j || j == c || i == c {
                        area / 30.0
                    } else {
                        area / 60.0
                    };
                    m * phi[c]
                })
                .sum();
        }
    }
    w
}

fn assemble(mesh: &Mesh, local: impl Fn(usize) -> [[f64; 3]; 3]) -> SymmetricSparseMatrix {
    let mut triplets = Vec::with_capacity(9 * mesh.num_elements());
    for (t, e) in mesh.elements().iter().enumerate() {
        let a = local(t);
        for i in 0..3 {
            for j in 0..3 {
                triplets.push((e[i], e[j], a[i][j]));
            }
        }
    }
    SymmetricSparseMatrix::from_triplets(mesh.num_vertices(), triplets)
}

pub fn assemble_stiffness(mesh: &Mesh) -> SymmetricSparseMatrix {
    assemble(mesh, |t| local_stiffness(&mesh.element_points(t)))
}

pub fn assemble_mass(mesh: &Mesh) -> SymmetricSparseMatrix {
    assemble(mesh, |t| local_mass(mesh.area(t)))
}

pub fn assemble_weighted_mass(mesh: &Mesh, phi: &NodalField) -> Result<SymmetricSparseMatrix> {
    phi.check_on(mesh)?;
    Ok(assemble(mesh, |t| local_weighted_mass(mesh.area(t), phi.local(&mesh.elements()[t]))))
}

/// Row sums of the mass matrix.
pub fn lumped_mass(mesh: &Mesh) -> Vec<f64> {
    let mut m = vec![0.0; mesh.num_vertices()];
    for (t, e) in mesh.elements().iter().enumerate() {
        let a = mesh.area(t) / 3.0;
        for &v in e {
            m[v] += a;
        }
    }
    m
}

/// `b_i = ∫_D g ψ_i` by the degree-4 rule, where `g(t, bary)` is evaluated on
/// element `t` at barycentric coordinates `bary`.
pub fn load_vector(mesh: &Mesh, g: impl Fn(usize, [f64; 3]) -> f64) -> Vec<f64> {
    let rule = degree4();
    let mut b = vec![0.0; mesh.num_vertices()];
    for (t, e) in mesh.elements().iter().enumerate() {
        let area = mesh.area(t);
        for q in rule {
            let val = q.weight * area * g(t, q.bary);
            for i in 0..3 {
                b[e[i]] += val * q.bary[i];
            }
        }
    }
    b
}

/// P1 field evaluated at barycentric coordinates of element `t`.
#[inline]
pub fn eval_local(values: &[f64], elem: &[usize; 3], bary: [f64; 3]) -> f64 {
    values[elem[0]] * bary[0] + values[elem[1]] * bary[1] + values[elem[2]] * bary[2]
}

/// Constant gradient of a P1 field on element `t`.
pub fn element_gradient(mesh: &Mesh, t: usize, values: &[f64]) -> [f64; 2] {
    let (g, _) = barycentric_gradients(&mesh.element_points(t));
    let e = mesh.elements()[t];
    let mut out = [0.0; 2];
    for i in 0..3 {
        out[0] += values[e[i]] * g[i][0];
        out[1] += values[e[i]] * g[i][1];
    }
    out
}

pub fn integral(mesh: &Mesh, field: &NodalField) -> f64 {
    let v = field.values();
    mesh.elements()
        .iter()
        .enumerate()
        .map(|(t, e)| mesh.area(t) * (v[e[0]] + v[e[1]] + v[e[2]]) / 3.0)
        .sum()
}

/// Patch-average quasi-interpolant: the value at vertex `x` is
/// `∫_{ω_x} v / |ω_x|` over the elements sharing `x`.
pub fn quasi_interpolate(mesh: &Mesh, v: impl Fn(Point) -> f64) -> NodalField {
    let rule = degree4();
    let mut num = vec![0.0; mesh.num_vertices()];
    let mut den = vec![0.0; mesh.num_vertices()];
    for (t, e) in mesh.elements().iter().enumerate() {
        let p = mesh.element_points(t);
        let area = mesh.area(t);
        let int: f64 = rule.iter().map(|q| q.weight * v(to_physical(&p, &q.bary))).sum::<f64>() * area;
        for &x in e {
            num[x] += int;
            den[x] += area;
        }
    }
    let values = num.iter().zip(&den).map(|(n, d)| n / d).collect();
    NodalField { mesh_id: mesh.id(), values }
}

/// Exact P1 interpolation of `field` onto the once-refined mesh `fine`.
pub fn prolongate(field: &NodalField, fine: &Mesh) -> Result<NodalField> {
    let rec = fine
        .refinement()
        .ok_or_else(|| Error::MeshMismatch("target mesh carries no refinement record".into()))?;
    if rec.coarse_id != field.mesh_id || rec.coarse_vertices != field.values.len() {
        return Err(Error::MeshMismatch(format!(
            "target mesh refines mesh {}, but the field lives on mesh {}",
            rec.coarse_id, field.mesh_id
        )));
    }
    let mut values = field.values.clone();
    values.reserve(rec.midpoint_parents.len());
    for &(a, b) in &rec.midpoint_parents {
        let m = 0.5 * (values[a] + values[b]);
        values.push(m);
    }
    Ok(NodalField { mesh_id: fine.id(), values })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormKind {
    L1,
    L2,
    H1Semi,
    H1,
    LinfNodal,
}

pub fn norm(mesh: &Mesh, field: &NodalField, kind: NormKind) -> f64 {
    let v = field.values();
    let l2sq = || {
        mesh.elements()
            .iter()
            .enumerate()
            .map(|(t, e)| {
                let m = local_mass(mesh.area(t));
                let x = field.local(e);
                (0..3).map(|i| (0..3).map(|j| x[i] * m[i][j] * x[j]).sum::<f64>()).sum::<f64>()
            })
            .sum::<f64>()
    };
    let h1sq = || {
        (0..mesh.num_elements())
            .map(|t| {
                let g = element_gradient(mesh, t, v);
                mesh.area(t) * (g[0] * g[0] + g[1] * g[1])
            })
            .sum::<f64>()
    };
    match kind {
        NormKind::L1 => {
            let rule = degree2();
            mesh.elements()
                .iter()
                .enumerate()
                .map(|(t, e)| {
                    mesh.area(t) * rule.iter().map(|q| q.weight * eval_local(v, e, q.bary).abs()).sum::<f64>()
                })
                .sum()
        }
        NormKind::L2 => l2sq().max(0.0).sqrt(),
        NormKind::H1Semi => h1sq().sqrt(),
        NormKind::H1 => (l2sq().max(0.0) + h1sq()).sqrt(),
        NormKind::LinfNodal => v.iter().fold(0.0, |m, x| m.max(x.abs())),
    }
}
