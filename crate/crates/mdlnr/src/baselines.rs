//! Comparison methods: L1-penalized MAP with K-fold cross-validation,
//! decimation from an unregularized fit, and MAP under a known Gaussian
//! weight prior.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{Dataset, NodeFields, Pair, WeightTarget, WeightedNetwork};
use crate::models::{Dynamics, ModelError, ModelKind, ModelState};
use crate::prior::n_pairs;

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("{0}")]
    Data(#[from] crate::graph::DataError),
    #[error("need at least {need} terms for {folds} folds, got {got}")]
    FoldTooSmall { need: usize, folds: usize, got: usize },
    #[error("dense start over {n} nodes exceeds the configured cap {cap}")]
    TooDense { n: usize, cap: usize },
    #[error("invalid parameter: {0}")]
    BadParameter(&'static str),
}

#[derive(Debug, Clone)]
pub struct BaselineConfig {
    /// Coordinate-descent rounds per fit.
    pub max_rounds: usize,
    /// Objective-improvement stopping threshold per round (nats).
    pub tol: f64,
    /// Weight search interval half-width.
    pub weight_cap: f64,
    pub theta_cap: f64,
    /// Bisection iterations for the 1-D solvers.
    pub solver_iters: usize,
    /// Fit the node fields by (unpenalized) maximum likelihood.
    pub fit_theta: bool,
    /// Emit a warning above this node count (dense pair scans get slow).
    pub dense_warn: usize,
    /// Hard cap on dense starts.
    pub dense_cap: usize,
    /// Seed for the stochastic support moves of the Gaussian-prior fit.
    pub seed: u64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            max_rounds: 60,
            tol: 1e-6,
            weight_cap: 10.0,
            theta_cap: 10.0,
            solver_iters: 48,
            fit_theta: true,
            dense_warn: 300,
            dense_cap: 2000,
            seed: 1,
        }
    }
}

fn apply_weight(state: &mut ModelState, i: usize, j: usize, w: f64) {
    let snapped = crate::graph::snap_to_grid(w, state.net().grid_delta());
    let target = if snapped == 0.0 {
        WeightTarget::Zero
    } else {
        WeightTarget::NewValue(snapped)
    };
    state.apply_edge(i, j, target).expect("valid entry");
}

/// Root of the decreasing function `w -> grad(w) - slope(w)` by bisection on
/// `[lo, hi]`; assumes `f(lo) >= 0 >= f(hi)` up to cap saturation.
fn bisect_root(mut f: impl FnMut(f64) -> f64, mut lo: f64, mut hi: f64, iters: usize) -> f64 {
    let flo = f(lo);
    let fhi = f(hi);
    if flo <= 0.0 {
        return lo;
    }
    if fhi >= 0.0 {
        return hi;
    }
    for _ in 0..iters {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Exact 1-D maximizer of `loglik(w) - lambda |w|` for entry `(i, j)`.
/// Returns 0 exactly when the subgradient interval at zero contains the
/// gradient, i.e. `|d loglik / dW_ij (0)| <= lambda`.
pub fn solve_entry_l1(
    state: &ModelState,
    i: usize,
    j: usize,
    lambda: f64,
    cap: f64,
    iters: usize,
) -> f64 {
    let g0 = state.grad_edge_at(i, j, 0.0);
    if g0.abs() <= lambda {
        return 0.0;
    }
    if g0 > 0.0 {
        bisect_root(|w| state.grad_edge_at(i, j, w) - lambda, 0.0, cap, iters)
    } else {
        -bisect_root(|t| -(state.grad_edge_at(i, j, -t)) - lambda, 0.0, cap, iters)
    }
}

/// 1-D maximum-likelihood field for node `i`.
fn solve_theta_ml(state: &ModelState, i: usize, cap: f64, iters: usize) -> f64 {
    let g_lo = state.grad_theta_at(i, -cap);
    if g_lo <= 0.0 {
        return -cap;
    }
    let g_hi = state.grad_theta_at(i, cap);
    if g_hi >= 0.0 {
        return cap;
    }
    let (mut lo, mut hi) = (-cap, cap);
    for _ in 0..iters {
        let mid = 0.5 * (lo + hi);
        if state.grad_theta_at(i, mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn theta_sweep(state: &mut ModelState, cfg: &BaselineConfig) {
    for i in 0..state.n_nodes() {
        let cur = state.fields().theta(i);
        // Skip nodes already at their 1-D optimum.
        let g = state.grad_theta(i);
        if g.abs() < 1e-9 * (1.0 + state.n_terms() as f64) {
            continue;
        }
        let t = solve_theta_ml(state, i, cfg.theta_cap, cfg.solver_iters);
        if t != cur {
            state.apply_theta(i, t, true).expect("field fit");
        }
    }
}

fn all_pairs(n: usize) -> Vec<Pair> {
    let mut v = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            v.push((i, j));
        }
    }
    v
}

/// Absent pairs whose gradient magnitude exceeds `threshold`; none of the
/// skipped pairs can move off zero in the L1 subproblem.
fn screen_zero_pairs(state: &ModelState, threshold: f64) -> Vec<Pair> {
    let n = state.n_nodes();
    let mut zero = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if state.net().weight(i, j) == 0.0 {
                zero.push((i, j));
            }
        }
    }
    zero.into_par_iter()
        .filter(|&(i, j)| state.grad_edge(i, j).abs() > threshold)
        .collect()
}

fn l1_objective(state: &ModelState, lambda: f64) -> f64 {
    let penalty: f64 = state.net().edges().map(|(_, w)| w.abs()).sum();
    state.loglik() - lambda * penalty
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct L1Summary {
    pub lambda: f64,
    pub n_edges: usize,
    pub loglik: f64,
    pub objective: f64,
    pub rounds: usize,
    pub converged: bool,
}

/// Coordinate-descent MAP under an L1 penalty: per-entry exact 1-D solves
/// with subgradient screening of the absent pairs, plus unpenalized field
/// fits. Weights are free reals (every value its own category).
pub fn reconstruct_l1(
    data: Dataset,
    kind: ModelKind,
    lambda: f64,
    cfg: &BaselineConfig,
) -> Result<(WeightedNetwork, NodeFields, L1Summary), BaselineError> {
    if lambda <= 0.0 {
        return Err(BaselineError::BadParameter("lambda must be positive"));
    }
    let state = ModelState::empty(data, kind, 1e-8, 1.0, 1e-8, 1.0)?;
    let (state, summary) = l1_fit(state, lambda, cfg);
    let (net, fields) = state.into_parts();
    Ok((net, fields, summary))
}

/// L1 fit continuing from an existing state (used for warm starts along a
/// regularization path).
fn l1_fit(mut state: ModelState, lambda: f64, cfg: &BaselineConfig) -> (ModelState, L1Summary) {
    let mut rounds = 0usize;
    let mut converged = false;
    let mut obj = l1_objective(&state, lambda);
    while rounds < cfg.max_rounds {
        rounds += 1;
        let mut touch: Vec<Pair> = state.net().edges().map(|(p, _)| p).collect();
        touch.sort_unstable();
        let screened = screen_zero_pairs(&state, lambda);
        touch.extend(screened);
        for (i, j) in touch {
            let cur = state.net().weight(i, j);
            // Skip entries already optimal in their own coordinate.
            let g = state.grad_edge(i, j);
            let stat = if cur == 0.0 {
                g.abs() <= lambda
            } else {
                (g - lambda * cur.signum()).abs() < 1e-8 * (1.0 + g.abs())
            };
            if stat {
                continue;
            }
            let w = solve_entry_l1(&state, i, j, lambda, cfg.weight_cap, cfg.solver_iters);
            if w != cur {
                apply_weight(&mut state, i, j, w);
            }
        }
        if cfg.fit_theta {
            theta_sweep(&mut state, cfg);
        }
        let new_obj = l1_objective(&state, lambda);
        debug_assert!(new_obj >= obj - 1e-6, "objective decreased: {obj} -> {new_obj}");
        if new_obj - obj < cfg.tol {
            converged = true;
            obj = new_obj;
            break;
        }
        obj = new_obj;
    }
    state.recompute();
    let summary = L1Summary {
        lambda,
        n_edges: state.net().n_edges(),
        loglik: state.loglik(),
        objective: l1_objective(&state, lambda),
        rounds,
        converged,
    };
    (state, summary)
}

/// Contiguous K-fold masks over the likelihood terms. Returns
/// `(fit_mask, heldout_mask)` per fold.
pub fn fold_masks(n_terms: usize, k_folds: usize) -> Vec<(Vec<bool>, Vec<bool>)> {
    let mut out = Vec::with_capacity(k_folds);
    for f in 0..k_folds {
        let start = f * n_terms / k_folds;
        let end = (f + 1) * n_terms / k_folds;
        let heldout: Vec<bool> = (0..n_terms).map(|t| t >= start && t < end).collect();
        let fit: Vec<bool> = heldout.iter().map(|&h| !h).collect();
        out.push((fit, heldout));
    }
    out
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CvGrid {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl CvGrid {
    pub fn points(&self) -> Vec<f64> {
        assert!(self.lo > 0.0 && self.hi >= self.lo && self.n >= 1);
        if self.n == 1 {
            return vec![self.lo];
        }
        let (a, b) = (self.lo.ln(), self.hi.ln());
        (0..self.n)
            .map(|i| (a + (b - a) * i as f64 / (self.n - 1) as f64).exp())
            .collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CvResult {
    /// All evaluated penalties, ascending (grid plus refinement points).
    pub lambda_grid: Vec<f64>,
    /// Mean held-out log-likelihood per penalty, aligned with `lambda_grid`.
    pub heldout_mean: Vec<f64>,
    pub lambda_hat: f64,
    /// Per-fold edge counts of the fits at `lambda_hat`.
    pub fold_edge_counts: Vec<usize>,
    pub n_folds: usize,
}

/// K-fold cross-validation of the L1 penalty: samples (or transitions, for
/// trajectory data) split into contiguous folds, a descending log-spaced
/// penalty path fit per fold with warm starts, then golden-section
/// refinement around the best grid point.
pub fn cross_validate_l1(
    data: &Dataset,
    kind: ModelKind,
    k_folds: usize,
    grid: CvGrid,
    cfg: &BaselineConfig,
) -> Result<CvResult, BaselineError> {
    if k_folds < 2 {
        return Err(BaselineError::BadParameter("need at least 2 folds"));
    }
    let probe = ModelState::empty(data.clone(), kind, 1e-8, 1.0, 1e-8, 1.0)?;
    let n_terms = probe.n_terms();
    if n_terms < k_folds {
        return Err(BaselineError::FoldTooSmall {
            need: k_folds,
            folds: k_folds,
            got: n_terms,
        });
    }
    let masks = fold_masks(n_terms, k_folds);
    let mut path = grid.points();
    path.reverse(); // strong-to-weak penalty for warm starts

    // Per-fold states evolve along the path; held-out scores recorded per
    // lambda. Folds are independent and can run in parallel.
    let per_fold: Vec<(Vec<f64>, ModelState)> = masks
        .par_iter()
        .map(|(fit_mask, heldout_mask)| {
            let mut st = ModelState::empty(data.clone(), kind, 1e-8, 1.0, 1e-8, 1.0)
                .expect("probe validated the inputs");
            st.set_term_mask(Some(fit_mask.clone())).expect("mask length");
            let mut scores = Vec::with_capacity(path.len());
            for &lambda in &path {
                let (fitted, _) = l1_fit(st, lambda, cfg);
                st = fitted;
                scores.push(st.loglik_over(heldout_mask));
            }
            (scores, st)
        })
        .collect();

    let mut evaluated: Vec<(f64, f64)> = path
        .iter()
        .enumerate()
        .map(|(idx, &lambda)| {
            let mean = per_fold.iter().map(|(s, _)| s[idx]).sum::<f64>() / k_folds as f64;
            (lambda, mean)
        })
        .collect();
    evaluated.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());

    // Bracket refinement around the best grid point.
    let best_idx = evaluated
        .iter()
        .enumerate()
        .max_by(|a, b| a.1 .1.partial_cmp(&b.1 .1).unwrap())
        .map(|(i, _)| i)
        .unwrap();
    let lo = if best_idx > 0 {
        evaluated[best_idx - 1].0
    } else {
        evaluated[best_idx].0 / 2.0
    };
    let hi = if best_idx + 1 < evaluated.len() {
        evaluated[best_idx + 1].0
    } else {
        evaluated[best_idx].0 * 2.0
    };
    let mut fold_states: Vec<ModelState> = per_fold.into_iter().map(|(_, st)| st).collect();
    let mut cv_eval = |lambda: f64, fold_states: &mut Vec<ModelState>| -> f64 {
        let scores: Vec<f64> = fold_states
            .par_iter_mut()
            .zip(&masks)
            .map(|(st, (_, heldout_mask))| {
                let owned = std::mem::replace(
                    st,
                    ModelState::empty(data.clone(), kind, 1e-8, 1.0, 1e-8, 1.0).unwrap(),
                );
                let (fitted, _) = l1_fit(owned, lambda, cfg);
                *st = fitted;
                st.loglik_over(heldout_mask)
            })
            .collect();
        scores.iter().sum::<f64>() / k_folds as f64
    };
    // Manual golden-section loop so every evaluation lands in `evaluated`.
    const INVPHI: f64 = 0.618_033_988_749_894_9;
    let (mut a, mut b) = (lo.ln(), hi.ln());
    let mut c = b - (b - a) * INVPHI;
    let mut d = a + (b - a) * INVPHI;
    let mut fc = cv_eval(c.exp(), &mut fold_states);
    evaluated.push((c.exp(), fc));
    let mut fd = cv_eval(d.exp(), &mut fold_states);
    evaluated.push((d.exp(), fd));
    for _ in 0..4 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - (b - a) * INVPHI;
            fc = cv_eval(c.exp(), &mut fold_states);
            evaluated.push((c.exp(), fc));
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + (b - a) * INVPHI;
            fd = cv_eval(d.exp(), &mut fold_states);
            evaluated.push((d.exp(), fd));
        }
    }

    evaluated.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
    let (lambda_hat, _) = evaluated
        .iter()
        .copied()
        .max_by(|x, y| x.1.partial_cmp(&y.1).unwrap())
        .unwrap();
    // Per-fold edge counts at the selected penalty.
    let fold_edge_counts: Vec<usize> = fold_states
        .par_iter_mut()
        .map(|st| {
            let owned = std::mem::replace(
                st,
                ModelState::empty(data.clone(), kind, 1e-8, 1.0, 1e-8, 1.0).unwrap(),
            );
            let (fitted, _) = l1_fit(owned, lambda_hat, cfg);
            let e = fitted.net().n_edges();
            *st = fitted;
            e
        })
        .collect();

    Ok(CvResult {
        lambda_grid: evaluated.iter().map(|&(l, _)| l).collect(),
        heldout_mean: evaluated.iter().map(|&(_, s)| s).collect(),
        lambda_hat,
        fold_edge_counts,
        n_folds: k_folds,
    })
}

/// Unregularized maximum-likelihood fit restricted to `active` pairs.
fn ml_fit_active(state: &mut ModelState, active: &[Pair], cfg: &BaselineConfig) {
    let mut obj = state.loglik();
    for _ in 0..cfg.max_rounds {
        for &(i, j) in active {
            let g = state.grad_edge(i, j);
            if g.abs() < 1e-9 * (1.0 + state.n_terms() as f64) {
                continue;
            }
            let cur = state.net().weight(i, j);
            let w = bisect_root(
                |w| state.grad_edge_at(i, j, w),
                -cfg.weight_cap,
                cfg.weight_cap,
                cfg.solver_iters,
            );
            if w != cur {
                apply_weight(state, i, j, w);
            }
        }
        if cfg.fit_theta {
            theta_sweep(state, cfg);
        }
        let new_obj = state.loglik();
        if new_obj - obj < cfg.tol {
            return;
        }
        obj = new_obj;
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecimationStep {
    pub e_active: usize,
    pub loglik: f64,
    /// Active entries and their fitted values at this step.
    pub edges: Vec<((usize, usize), f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DecimationStop {
    TargetEdges(usize),
    /// Stop when the relative log-likelihood drop per removed edge first
    /// exceeds the threshold (the end of the initial plateau).
    Plateau { threshold: f64 },
    ToEmpty,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecimationTrajectory {
    pub steps: Vec<DecimationStep>,
    /// Edge count at the plateau-heuristic stopping point, when one exists.
    pub plateau_e: Option<usize>,
    pub warnings: Vec<String>,
}

/// Decimation: fit all pairs by unregularized ML, then repeatedly force the
/// smallest-magnitude fraction of the active entries to zero and refit,
/// recording `(E, max log-likelihood)` per step.
pub fn decimate(
    data: Dataset,
    kind: ModelKind,
    step_fraction: f64,
    stop: DecimationStop,
    cfg: &BaselineConfig,
) -> Result<DecimationTrajectory, BaselineError> {
    if !(0.0..1.0).contains(&step_fraction) || step_fraction <= 0.0 {
        return Err(BaselineError::BadParameter("step fraction must be in (0,1)"));
    }
    let n = data.n_nodes();
    if n > cfg.dense_cap {
        return Err(BaselineError::TooDense { n, cap: cfg.dense_cap });
    }
    let mut warnings = Vec::new();
    if n > cfg.dense_warn {
        warnings.push(format!(
            "dense start over {n} nodes: the initial fit scans all {} pairs",
            n_pairs(n)
        ));
    }
    let mut state = ModelState::empty(data, kind, 1e-8, 1.0, 1e-8, 1.0)?;
    let mut active = all_pairs(n);
    ml_fit_active(&mut state, &active, cfg);
    let mut steps = vec![DecimationStep {
        e_active: active.len(),
        loglik: state.loglik(),
        edges: active
            .iter()
            .map(|&(i, j)| ((i, j), state.net().weight(i, j)))
            .collect(),
    }];
    let mut plateau_e = None;
    loop {
        match stop {
            DecimationStop::TargetEdges(t) if active.len() <= t => break,
            DecimationStop::Plateau { .. } if plateau_e.is_some() => break,
            _ if active.is_empty() => break,
            _ => {}
        }
        let k = ((step_fraction * active.len() as f64).ceil() as usize)
            .max(1)
            .min(active.len());
        // Freeze the k smallest-magnitude active entries to zero.
        active.sort_by(|&(ai, aj), &(bi, bj)| {
            let wa = state.net().weight(ai, aj).abs();
            let wb = state.net().weight(bi, bj).abs();
            wa.partial_cmp(&wb).unwrap().then((ai, aj).cmp(&(bi, bj)))
        });
        let frozen: Vec<Pair> = active.drain(..k).collect();
        for (i, j) in frozen {
            if state.net().weight(i, j) != 0.0 {
                state.apply_edge(i, j, WeightTarget::Zero).expect("freeze");
            }
        }
        ml_fit_active(&mut state, &active, cfg);
        let prev = steps.last().unwrap().loglik;
        let cur = state.loglik();
        steps.push(DecimationStep {
            e_active: active.len(),
            loglik: cur,
            edges: active
                .iter()
                .map(|&(i, j)| ((i, j), state.net().weight(i, j)))
                .collect(),
        });
        if plateau_e.is_none() {
            let threshold = match stop {
                DecimationStop::Plateau { threshold } => threshold,
                _ => 1e-4,
            };
            let rel_per_edge = (prev - cur) / (prev.abs().max(1.0) * k as f64);
            if rel_per_edge > threshold {
                // First significant drop: the previous step ends the plateau.
                plateau_e = Some(steps[steps.len() - 2].e_active);
            }
        }
    }
    Ok(DecimationTrajectory {
        steps,
        plateau_e,
        warnings,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TruePriorSummary {
    pub mu: f64,
    pub sigma: f64,
    pub n_edges: usize,
    pub loglik: f64,
    pub objective: f64,
    pub rounds: usize,
    pub converged: bool,
}

/// Joint objective of the Gaussian-slab fit: log-likelihood plus the slab
/// density on present entries plus the uniform sparse-support prior.
fn slab_objective(state: &ModelState, mu: f64, sigma: f64) -> f64 {
    let np = n_pairs(state.n_nodes()) as i64;
    let e = state.net().n_edges();
    let slab: f64 = state
        .net()
        .edges()
        .map(|(_, w)| {
            -((w - mu) * (w - mu)) / (2.0 * sigma * sigma)
                - (sigma * (2.0 * std::f64::consts::PI).sqrt()).ln()
        })
        .sum();
    state.loglik() + slab - crate::prior::ln_binomial(np, e as i64)
        - ((np + 1) as f64).ln()
}

/// MAP under a Gaussian prior on present weights combined with the uniform
/// sparse-support prior; the same coordinate machinery as L1 minus the
/// categories, plus support moves and swaps.
pub fn reconstruct_true_prior(
    data: Dataset,
    kind: ModelKind,
    mu: f64,
    sigma: f64,
    cfg: &BaselineConfig,
) -> Result<(WeightedNetwork, NodeFields, TruePriorSummary), BaselineError> {
    if sigma <= 0.0 {
        return Err(BaselineError::BadParameter("sigma must be positive"));
    }
    let mut state = ModelState::empty(data, kind, 1e-8, 1.0, 1e-8, 1.0)?;
    let np = n_pairs(state.n_nodes()) as i64;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut rounds = 0usize;
    let mut converged = false;
    let mut obj = slab_objective(&state, mu, sigma);
    while rounds < cfg.max_rounds {
        rounds += 1;
        // Entry sweep over all pairs: each entry goes to its 1-D optimum
        // under likelihood + slab, or to zero when absence wins the
        // support-prior trade-off.
        let slab = |w: f64| {
            -((w - mu) * (w - mu)) / (2.0 * sigma * sigma)
                - (sigma * (2.0 * std::f64::consts::PI).sqrt()).ln()
        };
        for (i, j) in all_pairs(state.n_nodes()) {
            let cur = state.net().weight(i, j);
            let w_star = bisect_root(
                |w| state.grad_edge_at(i, j, w) - (w - mu) / (sigma * sigma),
                -cfg.weight_cap,
                cfg.weight_cap,
                cfg.solver_iters,
            );
            let e_old = state.net().n_edges();
            let delta_obj = |w: f64| {
                let e_new = e_old - usize::from(cur != 0.0) + usize::from(w != 0.0);
                state.delta_edge(i, j, w)
                    + if w != 0.0 { slab(w) } else { 0.0 }
                    - if cur != 0.0 { slab(cur) } else { 0.0 }
                    - crate::prior::ln_binomial(np, e_new as i64)
                    + crate::prior::ln_binomial(np, e_old as i64)
            };
            let d_present = delta_obj(w_star);
            let d_absent = delta_obj(0.0);
            let (d_best, w_best) = if d_present >= d_absent {
                (d_present, w_star)
            } else {
                (d_absent, 0.0)
            };
            if d_best > 1e-12 && w_best != cur {
                apply_weight(&mut state, i, j, w_best);
            }
        }
        // Support moves and swaps (likelihood-only: values and E preserved).
        let cands = CandidateSnapshot::zero_pairs(&state);
        support_moves(&mut state, &cands, &mut rng);
        support_swaps(&mut state, state.net().n_edges(), &mut rng);
        if cfg.fit_theta {
            theta_sweep(&mut state, cfg);
        }
        let new_obj = slab_objective(&state, mu, sigma);
        if new_obj - obj < cfg.tol {
            converged = true;
            obj = new_obj;
            break;
        }
        obj = new_obj;
    }
    state.recompute();
    let summary = TruePriorSummary {
        mu,
        sigma,
        n_edges: state.net().n_edges(),
        loglik: state.loglik(),
        objective: slab_objective(&state, mu, sigma),
        rounds,
        converged,
    };
    let (net, fields) = state.into_parts();
    Ok((net, fields, summary))
}

struct CandidateSnapshot {
    zero_by_node: Vec<Vec<usize>>,
}

impl CandidateSnapshot {
    fn zero_pairs(state: &ModelState) -> Self {
        let n = state.n_nodes();
        let mut zero_by_node = vec![Vec::new(); n];
        for i in 0..n {
            for j in (i + 1)..n {
                if state.net().weight(i, j) == 0.0 {
                    zero_by_node[i].push(j);
                    zero_by_node[j].push(i);
                }
            }
        }
        Self { zero_by_node }
    }
}

fn support_moves<R: Rng + ?Sized>(
    state: &mut ModelState,
    cands: &CandidateSnapshot,
    rng: &mut R,
) -> usize {
    use rand::seq::SliceRandom;
    let n = state.n_nodes();
    let mut accepted = 0;
    for i in 0..n {
        if state.net().degree(i) == 0 || cands.zero_by_node[i].is_empty() {
            continue;
        }
        let j = *state.net().neighbors(i).choose(rng).unwrap();
        let mut u = None;
        for _ in 0..8 {
            let c = *cands.zero_by_node[i].choose(rng).unwrap();
            if c != j && state.net().weight(i, c) == 0.0 {
                u = Some(c);
                break;
            }
        }
        let Some(u) = u else { continue };
        let w = state.net().weight(i, j);
        if state.delta_multi(&[(i, j, 0.0), (i, u, w)]) > 1e-10 {
            state.apply_move(i, j, u).expect("support move");
            accepted += 1;
        }
    }
    accepted
}

fn support_swaps<R: Rng + ?Sized>(state: &mut ModelState, n_proposals: usize, rng: &mut R) -> usize {
    let mut accepted = 0;
    for _ in 0..n_proposals {
        let e = state.net().n_edges();
        if e < 2 {
            break;
        }
        let e1 = rng.gen_range(0..e);
        let e2 = rng.gen_range(0..e);
        if e1 == e2 {
            continue;
        }
        let ((mut i, mut j), w1) = state.net().edge_at(e1);
        let ((mut u, mut v), w2) = state.net().edge_at(e2);
        if rng.gen::<bool>() {
            std::mem::swap(&mut i, &mut j);
        }
        if rng.gen::<bool>() {
            std::mem::swap(&mut u, &mut v);
        }
        if i == u || i == v || j == u || j == v {
            continue;
        }
        if state.net().weight(i, v) != 0.0 || state.net().weight(u, j) != 0.0 {
            continue;
        }
        if state.delta_multi(&[(i, j, 0.0), (u, v, 0.0), (i, v, w1), (u, j, w2)]) > 1e-10 {
            state.apply_move(i, j, v).expect("swap leg");
            state.apply_move(u, v, j).expect("swap leg");
            accepted += 1;
        }
    }
    accepted
}
