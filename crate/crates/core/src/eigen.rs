//! Smallest eigenpairs of `(K + αW) w = λ M w` on the free dofs.
//!
//! The iterative path runs a restarted block Krylov method on the
//! shift-inverted operator `A⁻¹M` (with `A = K + αW` factored once), followed
//! by Rayleigh–Ritz on the pencil `(A, M)`. Small problems go through a dense
//! generalized eigensolve instead.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::fem::{assemble_weighted_mass, FemOperators, NodalField};
use crate::mesh::Mesh;
use crate::sparse::{Cholesky, SymmetricSparseMatrix};

#[derive(Debug, Clone, PartialEq)]
pub struct EigenOptions {
    /// Bound on `‖Au − λMu‖ / (‖Mu‖ · max(1, λ))`.
    pub tol: f64,
    /// Cap on operator applications; `None` means `10 · m · √n`.
    pub max_iter: Option<usize>,
    /// Problems with at most this many dofs are solved densely.
    pub dense_threshold: usize,
    pub seed: u64,
}

impl Default for EigenOptions {
    fn default() -> Self {
        EigenOptions { tol: 1e-9, max_iter: None, dense_threshold: 200, seed: 0x5eed }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenSet {
    pub lambdas: Vec<f64>,
    /// M-orthonormal eigenvectors; their largest-magnitude entry is positive.
    pub vectors: Vec<Vec<f64>>,
    /// Scaled residuals `‖Au − λMu‖ / (‖Mu‖ · max(1, λ))`.
    pub residual_norms: Vec<f64>,
    pub alpha: f64,
    pub operator_applications: usize,
}

impl EigenSet {
    pub fn len(&self) -> usize {
        self.lambdas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambdas.is_empty()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn fix_sign(v: &mut [f64]) {
    let mut best = 0.0;
    let mut sign = 1.0;
    for &x in v.iter() {
        if x.abs() > best {
            best = x.abs();
            sign = x.signum();
        }
    }
    if sign < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Normwise backward error `‖Au - λMu‖ / ((‖A‖ + |λ|‖M‖)‖u‖)`.
fn scaled_residual(au: &[f64], mu: &[f64], u: &[f64], lambda: f64, norms: (f64, f64)) -> f64 {
    let r: f64 = au.iter().zip(mu).map(|(a, m)| (a - lambda * m).powi(2)).sum::<f64>().sqrt();
    r / ((norms.0 + lambda.abs() * norms.1) * norm2(u))
}

/// Computes the `count` smallest eigenpairs of `(K + αW, M)`. All matrices must
/// already be restricted to the same dof set. `warm` supplies optional start
/// vectors for the iterative path.
pub fn solve_eigenpairs(
    k: &SymmetricSparseMatrix,
    w: &SymmetricSparseMatrix,
    m: &SymmetricSparseMatrix,
    alpha: f64,
    count: usize,
    opts: &EigenOptions,
    warm: Option<&[Vec<f64>]>,
) -> Result<EigenSet> {
    let n = k.dim();
    if w.dim() != n || m.dim() != n {
        return Err(Error::InvalidArgument(format!(
            "matrix dimensions differ: K {n}, W {}, M {}",
            w.dim(),
            m.dim()
        )));
    }
    if count == 0 || count > n {
        return Err(Error::InvalidArgument(format!("requested {count} eigenpairs of a {n}-dimensional problem")));
    }
    if !(alpha >= 0.0) {
        return Err(Error::InvalidArgument(format!("alpha must be non-negative, got {alpha}")));
    }
    let a = if alpha == 0.0 { k.clone() } else { SymmetricSparseMatrix::linear_combination(&[(1.0, k), (alpha, w)]) };
    let mut set = if n <= opts.dense_threshold {
        dense(&a, m, count)?
    } else {
        krylov(&a, m, count, opts, warm)?
    };
    set.alpha = alpha;
    Ok(set)
}

fn dense(a: &SymmetricSparseMatrix, m: &SymmetricSparseMatrix, count: usize) -> Result<EigenSet> {
    let ad = a.to_dense();
    let md = m.to_dense();
    let l = md
        .clone()
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite("mass matrix".into()))?
        .l();
    let linv_a = l.solve_lower_triangular(&ad).expect("triangular factor is invertible");
    let c = l.solve_lower_triangular(&linv_a.transpose()).expect("triangular factor is invertible");
    let c = (&c + c.transpose()) * 0.5;
    let eig = SymmetricEigen::new(c);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let lt = l.transpose();
    let mut set = EigenSet {
        lambdas: Vec::with_capacity(count),
        vectors: Vec::with_capacity(count),
        residual_norms: Vec::with_capacity(count),
        alpha: 0.0,
        operator_applications: 0,
    };
    for &i in order.iter().take(count) {
        let y = eig.eigenvectors.column(i).into_owned();
        let x = lt.solve_upper_triangular(&y).expect("triangular factor is invertible");
        let mut v: Vec<f64> = x.iter().copied().collect();
        fix_sign(&mut v);
        let lambda = eig.eigenvalues[i];
        let res = scaled_residual(&a.mul_vec(&v), &m.mul_vec(&v), &v, lambda, (a.norm_inf(), m.norm_inf()));
        set.lambdas.push(lambda);
        set.vectors.push(v);
        set.residual_norms.push(res);
    }
    Ok(set)
}

/// M-orthonormal basis with the images `M q` cached.
struct Basis<'a> {
    m: &'a SymmetricSparseMatrix,
    q: Vec<Vec<f64>>,
    mq: Vec<Vec<f64>>,
}

impl Basis<'_> {
    /// Orthonormalizes `v` against the basis and appends it. Returns false if
    /// `v` is numerically dependent on the existing columns.
    fn push(&mut self, mut v: Vec<f64>) -> bool {
        let mut mv = self.m.mul_vec(&v);
        let n0 = dot(&v, &mv).max(0.0).sqrt();
        if n0 == 0.0 || !n0.is_finite() {
            return false;
        }
        for _ in 0..2 {
            let coefs: Vec<f64> = self.mq.iter().map(|mq| dot(mq, &v)).collect();
            for (c, q) in coefs.iter().zip(&self.q) {
                v.iter_mut().zip(q).for_each(|(x, y)| *x -= c * y);
            }
            mv = self.m.mul_vec(&v);
        }
        let nrm = dot(&v, &mv).max(0.0).sqrt();
        if nrm < 1e-10 * n0 {
            return false;
        }
        v.iter_mut().for_each(|x| *x /= nrm);
        mv.iter_mut().for_each(|x| *x /= nrm);
        self.q.push(v);
        self.mq.push(mv);
        true
    }
}

fn krylov(
    a: &SymmetricSparseMatrix,
    m: &SymmetricSparseMatrix,
    count: usize,
    opts: &EigenOptions,
    warm: Option<&[Vec<f64>]>,
) -> Result<EigenSet> {
    let n = a.dim();
    let b = (count + 2).min(n);
    let p = (4 * b).max(2 * b + 40).min(n);
    let cap = opts
        .max_iter
        .unwrap_or_else(|| (10.0 * count as f64 * (n as f64).sqrt()).ceil() as usize)
        .max(2 * p);
    let chol = Cholesky::factor(a)?;
    let norms = (a.norm_inf(), m.norm_inf());
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut random = move || -> Vec<f64> { (0..n).map(|_| rng.random_range(-1.0..1.0)).collect() };

    let mut start: Vec<Vec<f64>> = warm
        .unwrap_or(&[])
        .iter()
        .filter(|v| v.len() == n)
        .take(b)
        .cloned()
        .collect();
    let mut applications = 0;
    loop {
        let mut basis = Basis { m, q: Vec::with_capacity(p), mq: Vec::with_capacity(p) };
        while start.len() < b {
            start.push(random());
        }
        let mut block = Vec::with_capacity(b);
        for v in start.drain(..) {
            let mut v = v;
            let mut tries = 0;
            while !basis.push(v) {
                tries += 1;
                if tries > 10 {
                    return Err(Error::EigenNotConverged { iterations: applications, residuals: vec![] });
                }
                v = random();
            }
            block.push(basis.q.len() - 1);
        }
        while basis.q.len() < p && !block.is_empty() {
            let mut next = Vec::with_capacity(block.len());
            for &j in &block {
                if basis.q.len() >= p {
                    break;
                }
                let mut v = chol.solve(&basis.mq[j]);
                // one step of iterative refinement
                let r: Vec<f64> = basis.mq[j].iter().zip(a.mul_vec(&v)).map(|(b, av)| b - av).collect();
                v.iter_mut().zip(chol.solve(&r)).for_each(|(x, d)| *x += d);
                applications += 1;
                if basis.push(v) {
                    next.push(basis.q.len() - 1);
                }
            }
            if next.is_empty() {
                // invariant subspace reached: continue from fresh directions
                for _ in 0..b.min(p - basis.q.len()) {
                    if basis.push(random()) {
                        next.push(basis.q.len() - 1);
                    }
                }
            }
            block = next;
        }

        let dim = basis.q.len();
        let aq: Vec<Vec<f64>> = basis.q.iter().map(|q| a.mul_vec(q)).collect();
        let mut h = DMatrix::<f64>::zeros(dim, dim);
        for i in 0..dim {
            for j in i..dim {
                let v = 0.5 * (dot(&basis.q[i], &aq[j]) + dot(&basis.q[j], &aq[i]));
                h[(i, j)] = v;
                h[(j, i)] = v;
            }
        }
        let eig = SymmetricEigen::new(h);
        let mut order: Vec<usize> = (0..dim).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));

        let combine = |cols: &[Vec<f64>], y: &[f64]| -> Vec<f64> {
            let mut out = vec![0.0; n];
            for (c, col) in y.iter().zip(cols) {
                out.iter_mut().zip(col).for_each(|(o, x)| *o += c * x);
            }
            out
        };
        let mut ritz = Vec::with_capacity(b);
        let mut converged = true;
        let mut set = EigenSet {
            lambdas: Vec::with_capacity(count),
            vectors: Vec::with_capacity(count),
            residual_norms: Vec::with_capacity(count),
            alpha: 0.0,
            operator_applications: applications,
        };
        for (rank, &i) in order.iter().take(b).enumerate() {
            let y: Vec<f64> = eig.eigenvectors.column(i).iter().copied().collect();
            let u = combine(&basis.q, &y);
            if rank < count {
                let au = a.mul_vec(&u);
                let mu = m.mul_vec(&u);
                let lambda = dot(&u, &au) / dot(&u, &mu);
                let res = scaled_residual(&au, &mu, &u, lambda, norms);
                converged &= res <= opts.tol;
                set.lambdas.push(lambda);
                set.residual_norms.push(res);
                set.vectors.push(u.clone());
            }
            ritz.push(u);
        }
        if converged {
            for v in &mut set.vectors {
                fix_sign(v);
            }
            return Ok(set);
        }
        if applications >= cap {
            return Err(Error::EigenNotConverged { iterations: applications, residuals: set.residual_norms });
        }
        start = ritz;
    }
}

/// `vᵀ(K + αW)v / vᵀMv`.
pub fn rayleigh_quotient(
    v: &[f64],
    k: &SymmetricSparseMatrix,
    w: &SymmetricSparseMatrix,
    m: &SymmetricSparseMatrix,
    alpha: f64,
) -> Result<f64> {
    let den = m.quad_form(v);
    if !(den > 0.0) {
        return Err(Error::InvalidArgument("Rayleigh quotient of a zero vector".into()));
    }
    Ok((k.quad_form(v) + alpha * w.quad_form(v)) / den)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapEntry {
    /// One-based eigenvalue index.
    pub index: usize,
    /// `min |λ_i − λ_{i±1}| / λ_i`, infinite without neighbours.
    pub relative_gap: f64,
    pub degenerate: bool,
}

/// Relative distance of each requested eigenvalue (one-based `indices`) to its
/// computed neighbours, flagging gaps below `threshold`.
pub fn multiplicity_gap_report(lambdas: &[f64], indices: &[usize], threshold: f64) -> Vec<GapEntry> {
    indices
        .iter()
        .filter(|&&i| i >= 1 && i <= lambdas.len())
        .map(|&i| {
            let l = lambdas[i - 1];
            let mut gap = f64::INFINITY;
            if i >= 2 {
                gap = gap.min((l - lambdas[i - 2]).abs() / l.abs());
            }
            if i < lambdas.len() {
                gap = gap.min((lambdas[i] - l).abs() / l.abs());
            }
            GapEntry { index: i, relative_gap: gap, degenerate: gap < threshold }
        })
        .collect()
}

/// Solves the weighted problem for a design field on `mesh`, with eigenvectors
/// returned as full nodal vectors (zero on the boundary).
pub fn solve_on_mesh(
    mesh: &Mesh,
    ops: &FemOperators,
    phi: &NodalField,
    alpha: f64,
    count: usize,
    opts: &EigenOptions,
    warm: Option<&[Vec<f64>]>,
) -> Result<EigenSet> {
    ops.check_on(mesh)?;
    let w = ops.dirichlet.restrict_matrix(&assemble_weighted_mass(mesh, phi)?);
    let warm: Option<Vec<Vec<f64>>> = warm.map(|ws| ws.iter().map(|v| ops.dirichlet.restrict_vec(v)).collect());
    let mut set = solve_eigenpairs(&ops.stiffness_free, &w, &ops.mass_free, alpha, count, opts, warm.as_deref())?;
    for v in &mut set.vectors {
        *v = ops.dirichlet.extend(v);
    }
    Ok(set)
}

/// Eigenvalues of `(K, M)` without the weighted term, on the same dofs.
pub fn solve_unweighted(ops: &FemOperators, count: usize, opts: &EigenOptions) -> Result<EigenSet> {
    let zero = ops.mass_free.zeros_like();
    solve_eigenpairs(&ops.stiffness_free, &zero, &ops.mass_free, 0.0, count, opts, None)
}
