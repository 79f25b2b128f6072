//! Residual-type error indicators.
//!
//! For P1 fields the elementwise Laplacians vanish, so each indicator is a
//! scaled element residual plus scaled normal-flux jumps:
//!
//! * `η_0(T)² = h_T² ‖αΣc_j w_j² + (γ/ε)f′(φ)‖²_T + h_T Σ_{F⊂∂T} ‖J_0‖²_F`, with
//!   `J_0 = γε[∇φ·n]` on interior faces and `γε∇φ·n` on boundary faces;
//! * `η_j(T)² = h_T² ‖(αφ − λ_j)w_j‖²_T + h_T Σ_{F⊂∂T interior} ‖[∇w_j·n]‖²_F`.

use crate::eigen::EigenSet;
use crate::error::{Error, Result};
use crate::fem::{element_gradient, eval_local, NodalField};
use crate::mesh::Mesh;
use crate::optimizer::ObjectiveSpec;
use crate::quadrature::degree4;

#[derive(Debug, Clone, PartialEq)]
pub struct IndicatorField {
    pub mesh_id: u64,
    /// 0 for the phase-field residual, `j ≥ 1` for the `j`-th selected eigenpair.
    pub which: usize,
    /// Non-negative `η(T)` per element.
    pub per_element: Vec<f64>,
    /// `sqrt(Σ_T η(T)²)`.
    pub global: f64,
}

impl IndicatorField {
    pub fn from_squares(mesh: &Mesh, which: usize, squares: Vec<f64>) -> Self {
        let global = squares.iter().sum::<f64>().sqrt();
        IndicatorField {
            mesh_id: mesh.id(),
            which,
            per_element: squares.into_iter().map(|s| s.max(0.0).sqrt()).collect(),
            global,
        }
    }

    /// `Σ_{T ∈ set} η(T)²`.
    pub fn sum_sq(&self, set: &[usize]) -> f64 {
        set.iter().map(|&t| self.per_element[t].powi(2)).sum()
    }
}

/// Jump contributions `h_T Σ_F |[∇u·n]|²|F|` per element, scaled by `scale²`.
/// Boundary faces use the one-sided flux when `with_boundary` is set.
fn jump_terms(mesh: &Mesh, values: &[f64], scale: f64, with_boundary: bool) -> Vec<f64> {
    let topo = mesh.topology();
    let grads: Vec<[f64; 2]> = (0..mesh.num_elements()).map(|t| element_gradient(mesh, t, values)).collect();
    let verts = mesh.vertices();
    mesh.elements()
        .iter()
        .enumerate()
        .map(|(t, e)| {
            let h = mesh.area(t).sqrt();
            let mut sum = 0.0;
            for i in 0..3 {
                let (a, b) = (verts[e[(i + 1) % 3]], verts[e[(i + 2) % 3]]);
                let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
                let len = dx.hypot(dy);
                let n = [dy / len, -dx / len];
                let jump = match topo.neighbors[t][i] {
                    Some(s) => [grads[t][0] - grads[s][0], grads[t][1] - grads[s][1]],
                    None if with_boundary => grads[t],
                    None => continue,
                };
                let j = scale * (jump[0] * n[0] + jump[1] * n[1]);
                sum += j * j * len;
            }
            h * sum
        })
        .collect()
}

pub fn indicators_eta0(mesh: &Mesh, phi: &NodalField, eigen: &EigenSet, spec: &ObjectiveSpec) -> Result<IndicatorField> {
    phi.check_on(mesh)?;
    let v = phi.values();
    let weighted: Vec<(f64, &[f64])> = spec
        .indices
        .iter()
        .zip(&spec.weights)
        .map(|(&i, &c)| {
            eigen
                .vectors
                .get(i - 1)
                .map(|w| (c, w.as_slice()))
                .ok_or_else(|| Error::InvalidArgument(format!("eigenpair {i} missing")))
        })
        .collect::<Result<_>>()?;
    if weighted.iter().any(|(_, w)| w.len() != v.len()) {
        return Err(Error::MeshMismatch("eigenvectors do not match the mesh".into()));
    }
    let rule = degree4();
    let mut squares = jump_terms(mesh, v, spec.gamma * spec.epsilon, true);
    for (t, e) in mesh.elements().iter().enumerate() {
        let area = mesh.area(t);
        let res: f64 = rule
            .iter()
            .map(|q| {
                let w: f64 = weighted.iter().map(|(c, w)| c * eval_local(w, e, q.bary).powi(2)).sum();
                let r = spec.alpha * w + spec.gamma / spec.epsilon * spec.potential.derivative(eval_local(v, e, q.bary));
                q.weight * r * r
            })
            .sum::<f64>()
            * area;
        squares[t] += area * res;
    }
    Ok(IndicatorField::from_squares(mesh, 0, squares))
}

pub fn indicators_etaj(
    mesh: &Mesh,
    phi: &NodalField,
    lambda: f64,
    w: &[f64],
    alpha: f64,
    which: usize,
) -> Result<IndicatorField> {
    phi.check_on(mesh)?;
    if w.len() != mesh.num_vertices() {
        return Err(Error::MeshMismatch("eigenvector does not match the mesh".into()));
    }
    let v = phi.values();
    let rule = degree4();
    let mut squares = jump_terms(mesh, w, 1.0, false);
    for (t, e) in mesh.elements().iter().enumerate() {
        let area = mesh.area(t);
        let res: f64 = rule
            .iter()
            .map(|q| {
                let r = (alpha * eval_local(v, e, q.bary) - lambda) * eval_local(w, e, q.bary);
                q.weight * r * r
            })
            .sum::<f64>()
            * area;
        squares[t] += area * res;
    }
    Ok(IndicatorField::from_squares(mesh, which, squares))
}

/// `η_0` followed by `η_1..η_l` for the selected eigenpairs.
pub fn all_indicators(mesh: &Mesh, phi: &NodalField, eigen: &EigenSet, spec: &ObjectiveSpec) -> Result<Vec<IndicatorField>> {
    let mut out = vec![indicators_eta0(mesh, phi, eigen, spec)?];
    for (j, &i) in spec.indices.iter().enumerate() {
        out.push(indicators_etaj(mesh, phi, eigen.lambdas[i - 1], &eigen.vectors[i - 1], spec.alpha, j + 1)?);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecayReport {
    pub sequence: Vec<f64>,
    /// Final over initial value.
    pub ratio: f64,
}

pub fn estimator_trace(globals: &[f64]) -> Result<DecayReport> {
    if globals.len() < 2 {
        return Err(Error::InvalidArgument("decay needs at least two estimator values".into()));
    }
    let first = globals[0];
    let last = *globals.last().unwrap();
    let ratio = if first == 0.0 { if last == 0.0 { 1.0 } else { f64::INFINITY } } else { last / first };
    Ok(DecayReport { sequence: globals.to_vec(), ratio })
}
