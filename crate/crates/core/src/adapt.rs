//! Dörfler marking and the SOLVE → ESTIMATE → MARK → REFINE driver.

use std::time::Instant;

use log::info;

use crate::config::{Mode, Refinement, Restart, RunConfig};
use crate::domain::generate_domain;
use crate::eigen::EigenSet;
use crate::error::{Error, Result};
use crate::estimator::{all_indicators, IndicatorField};
use crate::fem::{prolongate, NodalField};
use crate::mesh::Mesh;
use crate::optimizer::{init_phi, run_fixed_mesh, HistoryRecord, OptimizerState, SandwichLog, Workspace};

/// Greedy Dörfler set: elements by descending `η(T)` (ties by index) until
/// `Σ_M η² ≥ θ² Σ η²`.
pub fn dorfler_mark(ind: &IndicatorField, theta: f64) -> Result<Vec<usize>> {
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(Error::InvalidArgument(format!("Dörfler parameter must lie in (0,1], got {theta}")));
    }
    let eta = &ind.per_element;
    let mut order: Vec<usize> = (0..eta.len()).collect();
    order.sort_by(|&a, &b| eta[b].total_cmp(&eta[a]).then(a.cmp(&b)));
    let total: f64 = order.iter().map(|&t| eta[t] * eta[t]).sum();
    if total == 0.0 {
        return Ok(Vec::new());
    }
    let target = theta * theta * total;
    let mut acc = 0.0;
    let mut marked = Vec::new();
    for t in order {
        if acc >= target || eta[t] == 0.0 {
            break;
        }
        acc += eta[t] * eta[t];
        marked.push(t);
    }
    Ok(marked)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarkedSet {
    pub per_estimator: Vec<Vec<usize>>,
    /// Sorted union of the per-estimator sets.
    pub union: Vec<usize>,
    pub thetas: Vec<f64>,
}

pub fn mark_union(fields: &[IndicatorField], thetas: &[f64]) -> Result<MarkedSet> {
    if fields.len() != thetas.len() {
        return Err(Error::InvalidArgument(format!(
            "{} indicator fields but {} Dörfler parameters",
            fields.len(),
            thetas.len()
        )));
    }
    if let Some(first) = fields.first() {
        if fields.iter().any(|f| f.mesh_id != first.mesh_id || f.per_element.len() != first.per_element.len()) {
            return Err(Error::MeshMismatch("indicator fields live on different meshes".into()));
        }
    }
    let per_estimator = fields.iter().zip(thetas).map(|(f, &t)| dorfler_mark(f, t)).collect::<Result<Vec<_>>>()?;
    let mut union: Vec<usize> = per_estimator.iter().flatten().copied().collect();
    union.sort_unstable();
    union.dedup();
    Ok(MarkedSet { per_estimator, union, thetas: thetas.to_vec() })
}

/// Wall-clock seconds spent in each phase on one mesh.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PhaseTimings {
    pub level: usize,
    pub solve: f64,
    pub estimate: f64,
    pub mark: f64,
    pub refine: f64,
}

impl PhaseTimings {
    pub fn total(&self) -> f64 {
        self.solve + self.estimate + self.mark + self.refine
    }
}

/// Final optimizer state on one mesh.
#[derive(Debug, Clone)]
pub struct LevelState {
    pub phi: NodalField,
    pub mu: f64,
    pub beta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    MaxLevels,
    VertexBudget,
    EstimatorTolerance,
    NothingMarked,
    Failed,
}

#[derive(Debug, Clone)]
pub struct AdaptiveRun {
    pub mode: Mode,
    pub meshes: Vec<Mesh>,
    pub states: Vec<LevelState>,
    pub eigens: Vec<EigenSet>,
    pub indicators: Vec<Vec<IndicatorField>>,
    /// Marked sets for every mesh that was refined adaptively.
    pub marked: Vec<MarkedSet>,
    pub history: Vec<HistoryRecord>,
    pub timings: Vec<PhaseTimings>,
    pub sandwich: SandwichLog,
    pub eigen_solves: usize,
    pub stop: StopReason,
    /// Message of the error that ended the run early.
    pub failure: Option<String>,
}

impl AdaptiveRun {
    fn new(mode: Mode) -> Self {
        AdaptiveRun {
            mode,
            meshes: Vec::new(),
            states: Vec::new(),
            eigens: Vec::new(),
            indicators: Vec::new(),
            marked: Vec::new(),
            history: Vec::new(),
            timings: Vec::new(),
            sandwich: SandwichLog::default(),
            eigen_solves: 0,
            stop: StopReason::MaxLevels,
            failure: None,
        }
    }

    pub fn levels(&self) -> usize {
        self.states.len()
    }

    /// `Σ_j η_{k,j}` global values for estimator `j` across meshes.
    pub fn estimator_globals(&self, j: usize) -> Vec<f64> {
        self.indicators.iter().map(|f| f[j].global).collect()
    }

    pub fn final_history(&self) -> Option<&HistoryRecord> {
        self.history.last()
    }

    pub fn final_vertices(&self) -> usize {
        self.states.len().checked_sub(1).map_or(0, |k| self.meshes[k].num_vertices())
    }
}

fn prolongate_eigen(set: &EigenSet, coarse: &Mesh, fine: &Mesh) -> Result<EigenSet> {
    let vectors = set
        .vectors
        .iter()
        .map(|w| Ok(prolongate(&NodalField::new(coarse, w.clone())?, fine)?.into_values()))
        .collect::<Result<Vec<_>>>()?;
    Ok(EigenSet { vectors, ..set.clone() })
}

/// Runs the configured mode, keeping everything computed before a failure.
/// `observer` sees the run after every completed mesh.
pub fn run_with_observer(
    cfg: &RunConfig,
    observer: &mut dyn FnMut(&AdaptiveRun, usize),
) -> (AdaptiveRun, Option<Error>) {
    let mut run = AdaptiveRun::new(cfg.afem.mode);
    match drive(cfg, &mut run, observer) {
        Ok(()) => (run, None),
        Err(e) => {
            run.stop = StopReason::Failed;
            run.failure = Some(e.to_string());
            (run, Some(e))
        }
    }
}

pub fn adaptive_loop(cfg: &RunConfig) -> Result<AdaptiveRun> {
    let mut cfg = cfg.clone();
    cfg.afem.mode = Mode::Adaptive;
    finish(run_with_observer(&cfg, &mut |_, _| {}))
}

pub fn uniform_loop(cfg: &RunConfig) -> Result<AdaptiveRun> {
    let mut cfg = cfg.clone();
    cfg.afem.mode = Mode::Uniform;
    finish(run_with_observer(&cfg, &mut |_, _| {}))
}

fn finish((run, err): (AdaptiveRun, Option<Error>)) -> Result<AdaptiveRun> {
    match err {
        Some(e) => Err(e),
        None => Ok(run),
    }
}

fn drive(cfg: &RunConfig, run: &mut AdaptiveRun, observer: &mut dyn FnMut(&AdaptiveRun, usize)) -> Result<()> {
    let spec = &cfg.objective;
    let mut params = cfg.inner.clone();
    params.outer_iterations = cfg.iterations_per_mesh();
    let budget = cfg.afem.vertex_budget.unwrap_or(usize::MAX);

    let mut mesh = generate_domain(&cfg.domain).map_err(|e| e.in_phase("mesh generation", 0))?;
    let mut state = OptimizerState::new(init_phi(&mesh, &cfg.init_phi), &cfg.inner);
    let mut warm: Option<EigenSet> = None;

    for level in 0..cfg.afem.k {
        let mut timing = PhaseTimings { level, ..Default::default() };
        let t0 = Instant::now();
        let mut ws = Workspace::new(&mesh, cfg.eigensolver.clone()).map_err(|e| e.in_phase("assembly", level))?;
        let eigen = ws.solve_eigen(&state.phi, spec, warm.as_ref()).map_err(|e| e.in_phase("solve", level))?;
        let result = run_fixed_mesh(&mut ws, state, eigen, spec, &params, level);
        run.sandwich.merge(&ws.sandwich);
        run.eigen_solves += ws.eigen_solves;
        drop(ws);
        let (mut done, eigen) = result.map_err(|e| e.in_phase("solve", level))?;
        timing.solve = t0.elapsed().as_secs_f64();

        let t1 = Instant::now();
        let fields = all_indicators(&mesh, &done.phi, &eigen, spec).map_err(|e| e.in_phase("estimate", level))?;
        timing.estimate = t1.elapsed().as_secs_f64();
        let est_sq: f64 = fields.iter().map(|f| f.global * f.global).sum();

        let last = done.history.last().cloned();
        run.history.append(&mut done.history);
        run.states.push(LevelState { phi: done.phi.clone(), mu: done.mu, beta: done.beta });
        run.indicators.push(fields);
        if let Some(h) = last {
            info!(
                "mesh {level}: {} vertices, Ψ = {:.6}, G = {:.3e}, Ση² = {:.3e}",
                mesh.num_vertices(),
                h.psi,
                h.volume_error,
                est_sq
            );
        }

        let stop = if level + 1 == cfg.afem.k {
            Some(StopReason::MaxLevels)
        } else if cfg.afem.estimator_tol.is_some_and(|tol| est_sq <= tol) {
            Some(StopReason::EstimatorTolerance)
        } else {
            None
        };
        if let Some(reason) = stop {
            run.stop = reason;
            run.eigens.push(eigen);
            run.timings.push(timing);
            run.meshes.push(mesh);
            observer(run, level);
            return Ok(());
        }

        let fine = match cfg.afem.mode {
            Mode::Adaptive => {
                let t2 = Instant::now();
                let marked = mark_union(run.indicators.last().unwrap(), &cfg.afem.thetas)
                    .map_err(|e| e.in_phase("mark", level))?;
                timing.mark = t2.elapsed().as_secs_f64();
                if marked.union.is_empty() {
                    run.stop = StopReason::NothingMarked;
                    None
                } else {
                    let t3 = Instant::now();
                    let fine = match cfg.afem.refinement {
                        Refinement::Single => mesh.bisect(&marked.union),
                        Refinement::AllEdges => mesh.bisect_all_edges(&marked.union),
                    }
                    .map_err(|e| e.in_phase("refine", level))?;
                    timing.refine = t3.elapsed().as_secs_f64();
                    run.marked.push(marked);
                    if fine.num_vertices() > budget {
                        run.stop = StopReason::VertexBudget;
                        None
                    } else {
                        Some(fine)
                    }
                }
            }
            Mode::Uniform => {
                if mesh.uniform_refine_vertex_count() > budget {
                    run.stop = StopReason::VertexBudget;
                    None
                } else {
                    let t3 = Instant::now();
                    let fine = mesh.uniform_refine();
                    timing.refine = t3.elapsed().as_secs_f64();
                    Some(fine)
                }
            }
        };
        run.timings.push(timing);

        let Some(fine) = fine else {
            run.eigens.push(eigen);
            run.meshes.push(mesh);
            observer(run, level);
            return Ok(());
        };
        fine.validate().map_err(|e| e.in_phase("refine", level))?;
        let phi = prolongate(&done.phi, &fine).map_err(|e| e.in_phase("prolongate", level))?;
        warm = Some(prolongate_eigen(&eigen, &mesh, &fine).map_err(|e| e.in_phase("prolongate", level))?);
        state = OptimizerState::new(phi, &cfg.inner);
        match cfg.afem.restart {
            Restart::Continue => {
                state.mu = done.mu;
                state.beta = done.beta;
            }
            Restart::ResetPenalty => state.mu = done.mu,
            Restart::Cold => {}
        }
        run.eigens.push(eigen);
        run.meshes.push(std::mem::replace(&mut mesh, fine));
        observer(run, level);
    }
    Ok(())
}
