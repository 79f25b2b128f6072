//! Smoothed-annulus reference design on the unit disk and error tables
//! against it.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use crate::eigen::{solve_on_mesh, EigenOptions};
use crate::fem::{eval_local, FemOperators, NodalField};
use crate::mesh::{Mesh, Point};
use crate::quadrature::{degree4, to_physical};
use crate::{Error, Result};

/// Regularized Heaviside step of half-width `tau1`.
pub fn smoothed_heaviside(psi: f64, tau1: f64) -> f64 {
    if psi > tau1 {
        1.0
    } else if psi < -tau1 {
        0.0
    } else {
        0.5 * (1.0 + psi / tau1 + (PI * psi / tau1).sin() / PI)
    }
}

fn smoothed_heaviside_derivative(psi: f64, tau1: f64) -> f64 {
    if psi.abs() > tau1 {
        0.0
    } else {
        0.5 / tau1 * (1.0 + (PI * psi / tau1).cos())
    }
}

/// Reference phase `H(|x| - r0)` with its eigenvalue on a fine mesh.
#[derive(Debug, Clone)]
pub struct ReferenceSolution {
    pub radius: f64,
    pub tau1: f64,
    pub lambda_ref: Option<f64>,
}

impl Default for ReferenceSolution {
    fn default() -> Self {
        Self { radius: FRAC_1_SQRT_2, tau1: 0.02, lambda_ref: None }
    }
}

impl ReferenceSolution {
    pub fn new(radius: f64, tau1: f64) -> Result<Self> {
        if !(tau1 > 0.0) || !(radius > 0.0) {
            return Err(Error::InvalidArgument(format!("reference needs radius > 0 and tau1 > 0, got {radius}, {tau1}")));
        }
        Ok(Self { radius, tau1, lambda_ref: None })
    }

    pub fn level_set(&self, x: Point) -> f64 {
        x[0].hypot(x[1]) - self.radius
    }

    pub fn phase(&self, x: Point) -> f64 {
        smoothed_heaviside(self.level_set(x), self.tau1)
    }

    pub fn phase_gradient(&self, x: Point) -> [f64; 2] {
        let r = x[0].hypot(x[1]);
        if r == 0.0 {
            return [0.0, 0.0];
        }
        let d = smoothed_heaviside_derivative(r - self.radius, self.tau1);
        [d * x[0] / r, d * x[1] / r]
    }

    /// First weighted eigenvalue of the interpolated reference phase on `fine`.
    pub fn compute_lambda(&mut self, fine: &Mesh, alpha: f64, opts: &EigenOptions) -> Result<f64> {
        let ops = FemOperators::new(fine);
        let phi = NodalField::from_fn(fine, |x| self.phase(x));
        let set = solve_on_mesh(fine, &ops, &phi, alpha, 1, opts, None)?;
        self.lambda_ref = Some(set.lambdas[0]);
        Ok(set.lambdas[0])
    }
}

/// Uniform refinement of `coarse` until it has at least `min_vertices` vertices.
pub fn fine_mesh(coarse: &Mesh, min_vertices: usize) -> Mesh {
    let mut mesh = coarse.clone();
    while mesh.num_vertices() < min_vertices {
        mesh = mesh.uniform_refine();
    }
    mesh
}

/// Errors of one discrete design against the reference.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorRow {
    pub level: usize,
    pub dofs: usize,
    pub lambda_error: f64,
    pub l1: f64,
    pub l2: f64,
    pub h1: f64,
}

const SUBDIVISIONS: usize = 4;

/// Barycentric sub-triangles of a uniform `n x n` split of the reference triangle.
fn sub_triangles(n: usize) -> Vec<[[f64; 3]; 3]> {
    let nf = n as f64;
    let b = |i: usize, j: usize| [1.0 - (i + j) as f64 / nf, i as f64 / nf, j as f64 / nf];
    let mut out = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n - i {
            out.push([b(i, j), b(i + 1, j), b(i, j + 1)]);
            if i + j + 1 < n {
                out.push([b(i + 1, j), b(i + 1, j + 1), b(i, j + 1)]);
            }
        }
    }
    out
}

/// `L1`, `L2` and full `H1` errors of `phi` against the reference phase.
pub fn phase_errors(mesh: &Mesh, phi: &NodalField, reference: &ReferenceSolution) -> Result<(f64, f64, f64)> {
    phi.check_on(mesh)?;
    let subs = sub_triangles(SUBDIVISIONS);
    let rule = degree4();
    let sub_area = 1.0 / subs.len() as f64;
    let v = phi.values();
    let (mut l1, mut l2, mut semi) = (0.0, 0.0, 0.0);
    for (t, e) in mesh.elements().iter().enumerate() {
        let p = mesh.element_points(t);
        let area = mesh.area(t);
        let grad = crate::fem::element_gradient(mesh, t, v);
        for s in &subs {
            for q in rule {
                let mut bary = [0.0; 3];
                for (k, corner) in s.iter().enumerate() {
                    for c in 0..3 {
                        bary[c] += q.bary[k] * corner[c];
                    }
                }
                let x = to_physical(&p, &bary);
                let w = q.weight * sub_area * area;
                let d = eval_local(v, e, bary) - reference.phase(x);
                let g = reference.phase_gradient(x);
                l1 += w * d.abs();
                l2 += w * d * d;
                semi += w * ((grad[0] - g[0]).powi(2) + (grad[1] - g[1]).powi(2));
            }
        }
    }
    Ok((l1, l2.sqrt(), (l2 + semi).sqrt()))
}

/// One error row per mesh from the final design and first eigenvalue on each.
pub fn example2_errors(
    meshes: &[Mesh],
    phis: &[NodalField],
    lambdas: &[f64],
    reference: &ReferenceSolution,
) -> Result<Vec<ErrorRow>> {
    let lambda_ref = reference
        .lambda_ref
        .ok_or_else(|| Error::InvalidArgument("reference eigenvalue has not been computed".into()))?;
    if meshes.len() != phis.len() || meshes.len() != lambdas.len() {
        return Err(Error::InvalidArgument(format!(
            "{} meshes, {} designs and {} eigenvalues",
            meshes.len(),
            phis.len(),
            lambdas.len()
        )));
    }
    for mesh in meshes {
        let r = mesh.vertices().iter().fold(0.0_f64, |m, p| m.max(p[0].hypot(p[1])));
        if (r - 1.0).abs() > 1e-8 {
            return Err(Error::InvalidArgument(format!("error table needs the unit disk, mesh reaches radius {r}")));
        }
    }
    meshes
        .iter()
        .zip(phis)
        .zip(lambdas)
        .enumerate()
        .map(|(level, ((mesh, phi), &lambda))| {
            let (l1, l2, h1) = phase_errors(mesh, phi, reference)?;
            Ok(ErrorRow { level, dofs: mesh.num_vertices(), lambda_error: (lambda - lambda_ref).abs(), l1, l2, h1 })
        })
        .collect()
}

/// Length-weighted mean radius of the `phi = level` contour inside `r < r_max`.
pub fn contour_mean_radius(mesh: &Mesh, phi: &NodalField, level: f64, r_max: f64) -> Result<Option<f64>> {
    phi.check_on(mesh)?;
    let v = phi.values();
    let pts = mesh.vertices();
    let (mut len, mut acc) = (0.0, 0.0);
    for e in mesh.elements() {
        let mut cross = Vec::with_capacity(2);
        for k in 0..3 {
            let (a, b) = (e[k], e[(k + 1) % 3]);
            let (fa, fb) = (v[a] - level, v[b] - level);
            if (fa < 0.0) != (fb < 0.0) {
                let s = fa / (fa - fb);
                cross.push([pts[a][0] + s * (pts[b][0] - pts[a][0]), pts[a][1] + s * (pts[b][1] - pts[a][1])]);
            }
        }
        if let [p, q] = cross[..] {
            let mid = [0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])];
            let r = mid[0].hypot(mid[1]);
            if r < r_max {
                let l = (p[0] - q[0]).hypot(p[1] - q[1]);
                len += l;
                acc += l * r;
            }
        }
    }
    Ok((len > 0.0).then(|| acc / len))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{generate_domain, DomainKind, DomainSpec};

    #[test]
    fn heaviside_values() {
        assert_eq!(smoothed_heaviside(0.0, 0.02), 0.5);
        assert!((smoothed_heaviside(0.02, 0.02) - 1.0).abs() < 1e-15);
        assert_eq!(smoothed_heaviside(-0.04, 0.02), 0.0);
        assert_eq!(smoothed_heaviside(0.5, 0.02), 1.0);
    }

    #[test]
    fn reference_phase_values() {
        let r = ReferenceSolution::default();
        assert_eq!(r.phase([0.3, 0.0]), 0.0);
        assert_eq!(r.phase([0.0, 0.9]), 1.0);
        assert!(ReferenceSolution::new(0.7, 0.0).is_err());
    }

    #[test]
    fn sub_triangles_tile() {
        let s = sub_triangles(4);
        assert_eq!(s.len(), 16);
        for tri in &s {
            for b in tri {
                assert!((b.iter().sum::<f64>() - 1.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn interpolant_error_decreases() {
        let spec = DomainSpec::new(DomainKind::Circle { radius: 1.0, segments: 64 }, 0);
        let coarse = generate_domain(&spec).unwrap();
        let fine = coarse.uniform_refine();
        let r = ReferenceSolution::default();
        let errs: Vec<_> = [&coarse, &fine]
            .iter()
            .map(|m| phase_errors(m, &NodalField::from_fn(m, |x| r.phase(x)), &r).unwrap())
            .collect();
        assert!(errs[1].0 < errs[0].0 && errs[1].1 < errs[0].1, "{errs:?}");
        let phi = NodalField::from_fn(&fine, |x| r.phase(x));
        let rad = contour_mean_radius(&fine, &phi, 0.5, 0.95).unwrap().unwrap();
        assert!((rad - FRAC_1_SQRT_2).abs() < 1e-2, "{rad}");
    }
}
