//! Phase-field optimization on a fixed mesh.
//!
//! The volume constraint is relaxed with an augmented Lagrangian
//! `ℒ = J + μG + G²/(2β)`, `G(φ) = ∫φ − V`. Each outer iteration freezes the
//! L² gradient of `ℒ`, takes a few semi-implicit Allen–Cahn steps with a box
//! projection after each, then updates `β ← ξβ` and `μ ← μ + G/β`.

use log::{debug, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::eigen::{multiplicity_gap_report, solve_on_mesh, solve_unweighted, EigenOptions, EigenSet};
use crate::error::{Error, Result};
use crate::fem::{eval_local, integral, load_vector, FemOperators, NodalField};
use crate::mesh::Mesh;
use crate::quadrature::degree4;
use crate::sparse::{Cholesky, SymmetricSparseMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Potential {
    /// `¼φ²(1−φ)²`
    #[default]
    DoubleWell,
    /// `½φ(1−φ)`
    DoubleObstacle,
}

impl Potential {
    pub fn value(self, phi: f64) -> f64 {
        match self {
            Potential::DoubleWell => 0.25 * phi * phi * (1.0 - phi) * (1.0 - phi),
            Potential::DoubleObstacle => 0.5 * phi * (1.0 - phi),
        }
    }

    pub fn derivative(self, phi: f64) -> f64 {
        match self {
            Potential::DoubleWell => 0.5 * phi * (1.0 - phi) * (1.0 - 2.0 * phi),
            Potential::DoubleObstacle => 0.5 - phi,
        }
    }
}

/// `Ψ(λ) = Σ c_j λ_{i_j}` plus the phase-field and constraint parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveSpec {
    /// One-based, strictly increasing eigenvalue indices.
    pub indices: Vec<usize>,
    pub weights: Vec<f64>,
    pub gamma: f64,
    pub epsilon: f64,
    pub alpha: f64,
    pub volume_fraction: f64,
    pub potential: Potential,
}

impl ObjectiveSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        let l = self.indices.len();
        if !(1..=3).contains(&l) || self.weights.len() != l {
            return bad(format!("need 1 to 3 indices with matching weights, got {l} and {}", self.weights.len()));
        }
        if self.indices[0] == 0 || self.indices.windows(2).any(|w| w[0] >= w[1]) {
            return bad(format!("indices must be positive and strictly increasing: {:?}", self.indices));
        }
        for (name, v) in [("gamma", self.gamma), ("epsilon", self.epsilon), ("alpha", self.alpha)] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.volume_fraction > 0.0 && self.volume_fraction < 1.0) {
            return bad(format!("volume fraction must lie in (0,1), got {}", self.volume_fraction));
        }
        Ok(())
    }

    /// Number of eigenpairs computed: one beyond the largest index so the gap
    /// above it can be monitored.
    pub fn eigen_count(&self) -> usize {
        self.indices.last().copied().unwrap_or(1) + 1
    }

    pub fn psi(&self, lambdas: &[f64]) -> f64 {
        self.indices.iter().zip(&self.weights).map(|(&i, c)| c * lambdas[i - 1]).sum()
    }

    pub fn selected(&self, lambdas: &[f64]) -> Vec<f64> {
        self.indices.iter().map(|&i| lambdas[i - 1]).collect()
    }
}

/// Mass matrix used to turn the load `b` into the nodal gradient `g`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RieszMap {
    /// `g = M⁻¹b`.
    #[default]
    Consistent,
    /// `g_i = b_i / m_i` with the lumped mass.
    Lumped,
}

/// Parameters of the fixed-mesh iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct InnerParams {
    pub outer_iterations: usize,
    pub flow_steps: usize,
    pub mu0: f64,
    pub beta0: f64,
    pub gamma_tilde: f64,
    pub xi: f64,
    pub zeta: f64,
    pub riesz: RieszMap,
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitPhi {
    Constant(f64),
    Random { seed: u64 },
    /// `½cos(1 − cos(2πx)cos(2πy))`, clamped to `[0,1]`.
    Cosine,
}

pub fn init_phi(mesh: &Mesh, init: &InitPhi) -> NodalField {
    match *init {
        InitPhi::Constant(c) => NodalField::constant(mesh, c),
        InitPhi::Random { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let values = (0..mesh.num_vertices()).map(|_| rng.random::<f64>()).collect();
            NodalField::new(mesh, values).expect("length matches")
        }
        InitPhi::Cosine => NodalField::from_fn(mesh, |p| {
            let tau = 2.0 * std::f64::consts::PI;
            (0.5 * (1.0 - (tau * p[0]).cos() * (tau * p[1]).cos()).cos()).clamp(0.0, 1.0)
        }),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HistoryRecord {
    pub level: usize,
    pub vertices: usize,
    /// One-based outer iteration on this mesh.
    pub iteration: usize,
    pub objective: f64,
    pub psi: f64,
    pub gl: f64,
    /// Signed `G(φ) = ∫φ − V`.
    pub volume_error: f64,
    pub lambdas: Vec<f64>,
    pub mu: f64,
    pub beta: f64,
    pub tau: f64,
    pub lagrangian: f64,
}

#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub phi: NodalField,
    pub mu: f64,
    pub beta: f64,
    pub n: usize,
    pub history: Vec<HistoryRecord>,
}

impl OptimizerState {
    pub fn new(phi: NodalField, params: &InnerParams) -> Self {
        OptimizerState { phi, mu: params.mu0, beta: params.beta0, n: 0, history: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientField {
    pub values: NodalField,
    pub l2_norm: f64,
    pub linf: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveValue {
    pub psi: f64,
    pub gl: f64,
    /// `Ψ + γF_ε`
    pub objective: f64,
    pub volume_error: f64,
    pub lagrangian: f64,
}

/// Checks of `λ̃_j ≤ λ_j ≤ λ̃_j + α` tallied over every eigensolve.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SandwichLog {
    pub checks: usize,
    pub violations: usize,
    /// Largest relative excursion outside the bounds (zero if none).
    pub worst: f64,
}

impl SandwichLog {
    pub fn merge(&mut self, other: &SandwichLog) {
        self.checks += other.checks;
        self.violations += other.violations;
        self.worst = self.worst.max(other.worst);
    }
}

/// Per-mesh matrices, factorizations and diagnostics.
pub struct Workspace<'a> {
    pub mesh: &'a Mesh,
    pub ops: FemOperators,
    pub eigen_opts: EigenOptions,
    mass_chol: Cholesky,
    flow_chol: Option<Cholesky>,
    unweighted: Option<Vec<f64>>,
    pub sandwich: SandwichLog,
    pub eigen_solves: usize,
    pub check_sandwich: bool,
    pub riesz: RieszMap,
}

impl<'a> Workspace<'a> {
    pub fn new(mesh: &'a Mesh, eigen_opts: EigenOptions) -> Result<Self> {
        let ops = FemOperators::new(mesh);
        let mass_chol = Cholesky::factor(&ops.mass)?;
        Ok(Workspace {
            mesh,
            ops,
            eigen_opts,
            mass_chol,
            flow_chol: None,
            unweighted: None,
            sandwich: SandwichLog::default(),
            eigen_solves: 0,
            check_sandwich: true,
            riesz: RieszMap::Consistent,
        })
    }

    pub fn domain_area(&self) -> f64 {
        self.mesh.total_area()
    }

    /// Eigenpairs of the weighted problem for `phi`; also checks the
    /// unweighted bounds.
    pub fn solve_eigen(&mut self, phi: &NodalField, spec: &ObjectiveSpec, warm: Option<&EigenSet>) -> Result<EigenSet> {
        let count = spec.eigen_count().min(self.ops.dirichlet.num_free());
        if count < *spec.indices.last().unwrap() {
            return Err(Error::InvalidArgument(format!(
                "mesh has only {} free dofs, fewer than eigenvalue index {}",
                self.ops.dirichlet.num_free(),
                spec.indices.last().unwrap()
            )));
        }
        let set = solve_on_mesh(
            self.mesh,
            &self.ops,
            phi,
            spec.alpha,
            count,
            &self.eigen_opts,
            warm.map(|w| w.vectors.as_slice()),
        )?;
        self.eigen_solves += 1;
        if self.check_sandwich {
            self.record_sandwich(&set, spec.alpha)?;
        }
        for gap in multiplicity_gap_report(&set.lambdas, &spec.indices, 1e-6) {
            if gap.degenerate {
                warn!("eigenvalue {} is nearly degenerate (relative gap {:.2e})", gap.index, gap.relative_gap);
            }
        }
        Ok(set)
    }

    fn record_sandwich(&mut self, set: &EigenSet, alpha: f64) -> Result<()> {
        if self.unweighted.as_ref().is_none_or(|u| u.len() < set.len()) {
            self.unweighted = Some(solve_unweighted(&self.ops, set.len(), &self.eigen_opts)?.lambdas);
        }
        let base = self.unweighted.as_ref().unwrap();
        for (j, (&l, &lt)) in set.lambdas.iter().zip(base).enumerate() {
            let slack = 1e-9 * lt.abs().max(1.0);
            let excess = (lt - l).max(l - (lt + alpha)).max(0.0);
            self.sandwich.checks += 1;
            if excess > slack {
                self.sandwich.violations += 1;
                self.sandwich.worst = self.sandwich.worst.max(excess / lt.abs().max(1.0));
                warn!("eigenvalue {} = {l} outside [{lt}, {}]", j + 1, lt + alpha);
            }
        }
        Ok(())
    }
}

/// `γF_ε(φ) = γ(ε/2 ‖∇φ‖² + (1/ε)∫f(φ))`.
pub fn ginzburg_landau(ws: &Workspace, phi: &NodalField, spec: &ObjectiveSpec) -> f64 {
    let grad = ws.ops.stiffness.quad_form(phi.values());
    let rule = degree4();
    let v = phi.values();
    let pot: f64 = ws
        .mesh
        .elements()
        .iter()
        .enumerate()
        .map(|(t, e)| {
            ws.mesh.area(t) * rule.iter().map(|q| q.weight * spec.potential.value(eval_local(v, e, q.bary))).sum::<f64>()
        })
        .sum();
    spec.gamma * (0.5 * spec.epsilon * grad + pot / spec.epsilon)
}

pub fn volume_error(ws: &Workspace, phi: &NodalField, spec: &ObjectiveSpec) -> f64 {
    integral(ws.mesh, phi) - spec.volume_fraction * ws.domain_area()
}

#[inline]
fn inv(beta: f64) -> f64 {
    if beta.is_infinite() {
        0.0
    } else {
        1.0 / beta
    }
}

pub fn evaluate_objective(
    ws: &Workspace,
    phi: &NodalField,
    eigen: &EigenSet,
    spec: &ObjectiveSpec,
    mu: f64,
    beta: f64,
) -> ObjectiveValue {
    let psi = spec.psi(&eigen.lambdas);
    let gl = ginzburg_landau(ws, phi, spec);
    let g = volume_error(ws, phi, spec);
    let objective = psi + gl;
    ObjectiveValue { psi, gl, objective, volume_error: g, lagrangian: objective + mu * g + 0.5 * g * g * inv(beta) }
}

/// Right-hand side `b_i = ⟨ℒ′(φ), ψ_i⟩`.
pub fn lagrangian_load(
    ws: &Workspace,
    phi: &NodalField,
    eigen: &EigenSet,
    spec: &ObjectiveSpec,
    mu: f64,
    beta: f64,
) -> Vec<f64> {
    let v = phi.values();
    let elems = ws.mesh.elements();
    let kphi = ws.ops.stiffness.mul_vec(v);
    let g = volume_error(ws, phi, spec);
    let shift = mu + g * inv(beta);
    let weighted: Vec<(f64, &[f64])> =
        spec.indices.iter().zip(&spec.weights).map(|(&i, &c)| (c, eigen.vectors[i - 1].as_slice())).collect();
    let b = load_vector(ws.mesh, |t, bary| {
        let e = &elems[t];
        let f = spec.gamma / spec.epsilon * spec.potential.derivative(eval_local(v, e, bary));
        let w: f64 = weighted.iter().map(|(c, w)| c * eval_local(w, e, bary).powi(2)).sum();
        f + spec.alpha * w + shift
    });
    b.iter().zip(&kphi).map(|(bi, ki)| bi + spec.gamma * spec.epsilon * ki).collect()
}

/// L² Riesz representative of `ℒ′(φ)`: `g = M⁻¹b`, or `b` divided by the
/// lumped mass when `ws.riesz` asks for it.
pub fn lagrangian_gradient(
    ws: &Workspace,
    phi: &NodalField,
    eigen: &EigenSet,
    spec: &ObjectiveSpec,
    mu: f64,
    beta: f64,
) -> Result<GradientField> {
    phi.check_on(ws.mesh)?;
    let b = lagrangian_load(ws, phi, eigen, spec, mu, beta);
    let g = match ws.riesz {
        RieszMap::Consistent => ws.mass_chol.solve(&b),
        RieszMap::Lumped => b.iter().zip(&ws.ops.lumped_mass).map(|(x, m)| x / m).collect(),
    };
    let l2_norm = b.iter().zip(&g).map(|(x, y)| x * y).sum::<f64>().max(0.0).sqrt();
    let linf = g.iter().fold(0.0, |m: f64, x| m.max(x.abs()));
    Ok(GradientField { values: NodalField::new(ws.mesh, g)?, l2_norm, linf })
}

/// Nodal reaction coefficient `r = φ − ½ − 30γ̃ (g/‖g‖) φ(1−φ)`.
pub fn reaction(phi: &[f64], g0: &GradientField, gamma_tilde: f64) -> Vec<f64> {
    let scale = if g0.l2_norm > 0.0 { 30.0 * gamma_tilde / g0.l2_norm } else { 0.0 };
    phi.iter()
        .zip(g0.values.values())
        .map(|(&p, &g)| p - 0.5 - scale * g * p * (1.0 - p))
        .collect()
}

/// System matrix and right-hand side of one semi-implicit step. The reaction
/// is lumped: `r ≤ 0` puts `−m_i(1−φ_i)r_i` on the diagonal, `r > 0` puts
/// `m_iφ_i r_i` on the diagonal and on the right-hand side.
pub fn flow_system(
    ws: &Workspace,
    phi_m: &NodalField,
    g0: &GradientField,
    gamma_tilde: f64,
    tau: f64,
    kappa: f64,
) -> (SymmetricSparseMatrix, Vec<f64>) {
    let phi = phi_m.values();
    let r = reaction(phi, g0, gamma_tilde);
    let mut a = SymmetricSparseMatrix::linear_combination(&[(1.0 / tau, &ws.ops.mass), (kappa, &ws.ops.stiffness)]);
    let mut rhs = ws.ops.mass.mul_vec(phi);
    rhs.iter_mut().for_each(|x| *x /= tau);
    let mut diag = vec![0.0; phi.len()];
    for i in 0..phi.len() {
        let m = ws.ops.lumped_mass[i];
        if r[i] <= 0.0 {
            diag[i] = -m * (1.0 - phi[i]) * r[i];
        } else {
            diag[i] = m * phi[i] * r[i];
            rhs[i] += m * phi[i] * r[i];
        }
    }
    a.add_diagonal(&diag);
    (a, rhs)
}

/// One semi-implicit Allen–Cahn step (without the box projection).
pub fn gradient_flow_step(
    ws: &mut Workspace,
    phi_m: &NodalField,
    g0: &GradientField,
    gamma_tilde: f64,
    tau: f64,
    kappa: f64,
) -> Result<NodalField> {
    phi_m.check_on(ws.mesh)?;
    if !(tau > 0.0) {
        return Err(Error::InvalidArgument(format!("time step must be positive, got {tau}")));
    }
    let (a, rhs) = flow_system(ws, phi_m, g0, gamma_tilde, tau, kappa);
    let chol = match &ws.flow_chol {
        Some(c) => c.refactor(&a)?,
        None => Cholesky::factor(&a)?,
    };
    let next = chol.solve(&rhs);
    ws.flow_chol = Some(chol);
    NodalField::new(ws.mesh, next)
}

pub fn project_box(phi: &NodalField) -> NodalField {
    phi.map(|v| v.clamp(0.0, 1.0))
}

pub fn update_multiplier(mu: f64, beta_next: f64, g: f64) -> f64 {
    mu + g * inv(beta_next)
}

pub fn update_penalty(beta: f64, xi: f64) -> Result<f64> {
    if !(xi > 0.0 && xi < 1.0) {
        return Err(Error::InvalidArgument(format!("penalty factor must lie in (0,1), got {xi}")));
    }
    Ok(xi * beta)
}

/// `τ = ζ max h_T / max|g|`, or `ζ max h_T` for a vanishing gradient.
pub fn compute_timestep(mesh: &Mesh, g0: &GradientField, zeta: f64) -> f64 {
    let h = mesh.max_mesh_size();
    if g0.linf > 0.0 {
        zeta * h / g0.linf
    } else {
        zeta * h
    }
}

/// Runs `params.outer_iterations` outer iterations. `eigen` holds the
/// eigenpairs of `state.phi`; the returned eigenpairs belong to the final
/// field. One history record is appended per outer iteration, describing the
/// state after that iteration's updates.
pub fn run_fixed_mesh(
    ws: &mut Workspace,
    mut state: OptimizerState,
    eigen: EigenSet,
    spec: &ObjectiveSpec,
    params: &InnerParams,
    level: usize,
) -> Result<(OptimizerState, EigenSet)> {
    state.phi.check_on(ws.mesh)?;
    ws.riesz = params.riesz;
    let kappa = spec.gamma * spec.epsilon;
    let mut eigen = eigen;
    for n in 0..params.outer_iterations {
        let wrap = |e: Error| Error::Iteration { iteration: n + 1, source: Box::new(e) };
        let g0 = lagrangian_gradient(ws, &state.phi, &eigen, spec, state.mu, state.beta).map_err(wrap)?;
        let tau = compute_timestep(ws.mesh, &g0, params.zeta);
        let mut phi = state.phi.clone();
        for _ in 0..params.flow_steps {
            phi = project_box(&gradient_flow_step(ws, &phi, &g0, params.gamma_tilde, tau, kappa).map_err(wrap)?);
        }
        state.phi = phi;
        state.beta = update_penalty(state.beta, params.xi)?;
        let g = volume_error(ws, &state.phi, spec);
        state.mu = update_multiplier(state.mu, state.beta, g);
        state.n += 1;
        eigen = ws.solve_eigen(&state.phi, spec, Some(&eigen)).map_err(wrap)?;
        let val = evaluate_objective(ws, &state.phi, &eigen, spec, state.mu, state.beta);
        debug!(
            "level {level} iter {}: J = {:.6}, Ψ = {:.6}, G = {:.3e}, μ = {:.4}, β = {:.4}, τ = {:.3e}",
            n + 1,
            val.objective,
            val.psi,
            val.volume_error,
            state.mu,
            state.beta,
            tau
        );
        state.history.push(HistoryRecord {
            level,
            vertices: ws.mesh.num_vertices(),
            iteration: n + 1,
            objective: val.objective,
            psi: val.psi,
            gl: val.gl,
            volume_error: val.volume_error,
            lambdas: spec.selected(&eigen.lambdas),
            mu: state.mu,
            beta: state.beta,
            tau,
            lagrangian: val.lagrangian,
        });
    }
    Ok((state, eigen))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{generate_domain, DomainKind, DomainSpec};

    fn spec() -> ObjectiveSpec {
        ObjectiveSpec {
            indices: vec![1],
            weights: vec![1.0],
            gamma: 5e-3,
            epsilon: 5e-2,
            alpha: 10.21,
            volume_fraction: 0.5,
            potential: Potential::DoubleWell,
        }
    }

    #[test]
    fn potentials() {
        assert_eq!(Potential::DoubleWell.value(0.5), 1.0 / 64.0);
        assert_eq!(Potential::DoubleObstacle.derivative(0.25), 0.25);
        let h = 1e-6;
        for p in [0.1, 0.4, 0.8] {
            for f in [Potential::DoubleWell, Potential::DoubleObstacle] {
                let fd = (f.value(p + h) - f.value(p - h)) / (2.0 * h);
                assert!((fd - f.derivative(p)).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn spec_validation() {
        assert!(spec().validate().is_ok());
        let mut s = spec();
        s.indices = vec![2, 1];
        s.weights = vec![1.0, 1.0];
        assert!(s.validate().is_err());
        let mut s = spec();
        s.volume_fraction = 1.0;
        assert!(s.validate().is_err());
    }

    #[test]
    fn scalar_updates() {
        assert!((update_multiplier(0.0, 90.0, 0.09) - 0.001).abs() < 1e-15);
        assert_eq!(update_multiplier(0.7, 90.0, 0.0), 0.7);
        assert!((update_multiplier(-5.0, 100.0, -1.0) + 5.01).abs() < 1e-15);
        assert_eq!(update_multiplier(1.0, f64::INFINITY, 3.0), 1.0);
        assert!((update_penalty(100.0, 0.9).unwrap() - 90.0).abs() < 1e-12);
        assert!(update_penalty(100.0, 1.0).is_err());
    }

    #[test]
    fn timestep_formula() {
        let m = generate_domain(&DomainSpec::new(DomainKind::UnitSquare, 4)).unwrap();
        let h = m.max_mesh_size();
        let g = GradientField { values: NodalField::constant(&m, 4.0), l2_norm: 4.0, linf: 4.0 };
        assert!((compute_timestep(&m, &g, 2.0) - 2.0 * h / 4.0).abs() < 1e-15);
        let z = GradientField { values: NodalField::constant(&m, 0.0), l2_norm: 0.0, linf: 0.0 };
        assert_eq!(compute_timestep(&m, &z, 2.0), 2.0 * h);
    }

    #[test]
    fn cosine_initializer_is_clamped() {
        let m = generate_domain(&DomainSpec::new(DomainKind::UnitSquare, 8)).unwrap();
        let phi = init_phi(&m, &InitPhi::Cosine);
        assert!(phi.values().iter().all(|v| (0.0..=1.0).contains(v)));
        let r1 = init_phi(&m, &InitPhi::Random { seed: 3 });
        let r2 = init_phi(&m, &InitPhi::Random { seed: 3 });
        assert_eq!(r1, r2);
    }

    #[test]
    fn zero_iterations_leave_state_alone() {
        let m = generate_domain(&DomainSpec::new(DomainKind::UnitSquare, 6)).unwrap();
        let mut ws = Workspace::new(&m, EigenOptions::default()).unwrap();
        let s = spec();
        let params = InnerParams {
            outer_iterations: 0,
            flow_steps: 10,
            mu0: -5.0,
            beta0: 100.0,
            gamma_tilde: 20.0,
            xi: 0.9,
            zeta: 2.0,
            riesz: RieszMap::Consistent,
        };
        let phi = NodalField::constant(&m, 0.5);
        let eig = ws.solve_eigen(&phi, &s, None).unwrap();
        let state = OptimizerState::new(phi.clone(), &params);
        let (out, _) = run_fixed_mesh(&mut ws, state, eig, &s, &params, 0).unwrap();
        assert_eq!(out.phi, phi);
        assert_eq!((out.mu, out.beta, out.n), (-5.0, 100.0, 0));
        assert!(out.history.is_empty());
    }
}
