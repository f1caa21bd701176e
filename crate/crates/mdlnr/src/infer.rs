//! Description-length optimizer: candidate search over absent entries, edge
//! updates / moves / swaps, category value refinement, and merge-split
//! clustering of the weight and field categories, iterated until the
//! description length stops improving.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::bisect::{golden_section_min, random_bisection, random_bisection_discrete};
use crate::graph::{ordered, snap_to_grid, Dataset, NodeFields, Pair, WeightTarget, WeightedNetwork};
use crate::models::{ModelError, ModelKind, ModelState};
use crate::prior::{
    description_length_running, neglog_prior_theta, weight_prior_nats, PriorHyper,
    ThetaPriorState, WeightPriorState,
};
use crate::report::RunReport;

/// Accepted moves must beat this margin so that floating-point dust on a
/// DL-neutral proposal never counts as an improvement.
pub const MIN_DL_IMPROVEMENT: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepOrder {
    Fixed,
    Shuffled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CandidateMode {
    /// Score every absent pair; O(N^2 M) per round.
    Exact,
    /// Stochastic second-neighbor candidate search.
    NnDescent,
}

#[derive(Debug, Clone)]
pub struct OptimizerConfig {
    /// Candidate budget multiplier: the search keeps the best `kappa * N`
    /// absent entries per round.
    pub kappa: f64,
    pub bisection_iters: usize,
    pub sweep_order: SweepOrder,
    /// Stop when a full round improves the DL by less than this.
    pub tol_nats: f64,
    /// Maximum number of outer rounds.
    pub max_sweeps: usize,
    pub seed: u64,
    pub candidate_mode: CandidateMode,
    /// Interval searched for weight values.
    pub weight_min: f64,
    pub weight_max: f64,
    /// Interval searched for node-field values.
    pub theta_min: f64,
    pub theta_max: f64,
    /// Optimize the node fields along with the weights.
    pub fit_theta: bool,
    /// Minimize the DL over the weight-prior scale after each round.
    pub optimize_lambda: bool,
    /// Per-node candidate list length for the stochastic search
    /// (`2 kappa + 8` when unset).
    pub nnd_list_len: Option<usize>,
    pub nnd_rounds: usize,
    /// Edge-swap proposals per round, as a multiple of the edge count.
    pub swap_proposals_per_edge: f64,
    /// Alternating reassignment/bisection passes inside a split proposal.
    pub split_refine_iters: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            kappa: 1.0,
            bisection_iters: 40,
            sweep_order: SweepOrder::Shuffled,
            tol_nats: 1e-6,
            max_sweeps: 100,
            seed: 1,
            candidate_mode: CandidateMode::Exact,
            weight_min: -10.0,
            weight_max: 10.0,
            theta_min: -10.0,
            theta_max: 10.0,
            fit_theta: true,
            optimize_lambda: false,
            nnd_list_len: None,
            nnd_rounds: 40,
            swap_proposals_per_edge: 1.0,
            split_refine_iters: 8,
        }
    }
}

/// Entries eligible for updates this round: the best-scoring absent pairs
/// together with every currently nonzero pair.
#[derive(Debug, Clone)]
pub struct CandidateSet {
    pub pairs: Vec<Pair>,
}

/// Proposal destination for one entry, with any new value already snapped and
/// routed to an existing category on collision.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Resolved {
    Zero,
    Existing(f64),
    Fresh(f64),
}

fn resolve_weight(net: &WeightedNetwork, v: f64) -> Option<Resolved> {
    let v = snap_to_grid(v, net.grid_delta());
    if v == 0.0 {
        return None;
    }
    if net.categories().slot_of_value(v).is_some() {
        Some(Resolved::Existing(v))
    } else {
        Some(Resolved::Fresh(v))
    }
}

/// DL change (likelihood + weight prior) of assigning entry `(i, j)`.
fn dl_edge_delta(state: &ModelState, hyper: &PriorHyper, i: usize, j: usize, target: Resolved) -> f64 {
    let net = state.net();
    let cur = net.weight(i, j);
    let w_new = match target {
        Resolved::Zero => 0.0,
        Resolved::Existing(v) | Resolved::Fresh(v) => v,
    };
    if w_new == cur {
        return 0.0;
    }
    let n = net.n_nodes();
    let pre = WeightPriorState::of(net);
    let mut post = pre;
    if cur != 0.0 {
        let slot = net.category_of(i, j).unwrap();
        post.remove_member(net.categories().count(slot), cur);
    }
    match target {
        Resolved::Zero => {}
        Resolved::Existing(v) => {
            let slot = net.categories().slot_of_value(v).unwrap();
            // Distinct values: the removal above cannot have touched this slot.
            post.add_member(net.categories().count(slot));
        }
        Resolved::Fresh(v) => post.add_category(v),
    }
    let prior_delta = post.nats(n, hyper) - pre.nats(n, hyper);
    prior_delta - state.delta_edge(i, j, w_new)
}

fn apply_resolved(state: &mut ModelState, i: usize, j: usize, target: Resolved) {
    let t = match target {
        Resolved::Zero => WeightTarget::Zero,
        Resolved::Existing(v) => WeightTarget::Value(v),
        Resolved::Fresh(v) => WeightTarget::NewValue(v),
    };
    state.apply_edge(i, j, t).expect("resolved target must apply");
}

/// Ranking score of the absent pair `(i, j)`: the best log-posterior
/// improvement from inserting the smallest-magnitude category value of either
/// sign, or the gradient magnitude while no categories exist.
pub fn score_pair(state: &ModelState, hyper: &PriorHyper, i: usize, j: usize) -> f64 {
    debug_assert_eq!(state.net().weight(i, j), 0.0);
    let cats = state.net().categories();
    if cats.is_empty() {
        return state.grad_edge(i, j).abs();
    }
    let vals = cats.sorted_values();
    let pos = vals.iter().copied().find(|v| *v > 0.0);
    let neg = vals.iter().rev().copied().find(|v| *v < 0.0);
    // When only one sign exists, both branches use its smallest magnitude.
    let (a, b) = match (pos, neg) {
        (Some(p), Some(n)) => (p, n),
        (Some(p), None) => (p, p),
        (None, Some(n)) => (n, n),
        (None, None) => unreachable!("nonempty categories"),
    };
    let da = -dl_edge_delta(state, hyper, i, j, Resolved::Existing(a));
    if a == b {
        return da;
    }
    let db = -dl_edge_delta(state, hyper, i, j, Resolved::Existing(b));
    da.max(db)
}

fn top_pairs(mut scored: Vec<(f64, Pair)>, budget: usize) -> Vec<Pair> {
    scored.sort_unstable_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    scored.truncate(budget);
    scored.into_iter().map(|(_, p)| p).collect()
}

fn with_nonzero(state: &ModelState, mut pairs: Vec<Pair>) -> CandidateSet {
    let mut nonzero: Vec<Pair> = state.net().edges().map(|(p, _)| p).collect();
    nonzero.sort_unstable();
    pairs.extend(nonzero);
    CandidateSet { pairs }
}

/// Exact candidate search: scores every absent pair and keeps the top
/// `ceil(kappa N)`, unioned with the nonzero entries.
pub fn candidate_search_exact(state: &ModelState, hyper: &PriorHyper, kappa: f64) -> CandidateSet {
    let n = state.n_nodes();
    let budget = (kappa * n as f64).ceil() as usize;
    let mut zero_pairs = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if state.net().weight(i, j) == 0.0 {
                zero_pairs.push((i, j));
            }
        }
    }
    let scored: Vec<(f64, Pair)> = zero_pairs
        .into_par_iter()
        .map(|(i, j)| (score_pair(state, hyper, i, j), (i, j)))
        .collect();
    with_nonzero(state, top_pairs(scored, budget))
}

/// Stochastic second-neighbor candidate search. Per-node best-candidate lists
/// are refined by scoring pairs among list-neighbors of list-neighbors plus a
/// few random injections per round, stopping when under 1% of list slots
/// update in a round.
pub fn candidate_search_nnd<R: Rng + ?Sized>(
    state: &ModelState,
    hyper: &PriorHyper,
    kappa: f64,
    rounds: usize,
    list_len: Option<usize>,
    rng: &mut R,
) -> CandidateSet {
    let n = state.n_nodes();
    if n < 2 {
        return CandidateSet { pairs: Vec::new() };
    }
    let l = list_len.unwrap_or((2.0 * kappa).ceil() as usize + 8).max(1);
    let budget = (kappa * n as f64).ceil() as usize;

    // lists[i]: (score, partner), sorted descending, absent pairs only.
    let mut lists: Vec<Vec<(f64, usize)>> = vec![Vec::new(); n];
    let try_insert = |lists: &mut Vec<Vec<(f64, usize)>>, i: usize, j: usize, s: f64| -> bool {
        let li = &mut lists[i];
        if li.iter().any(|&(_, p)| p == j) {
            return false;
        }
        if li.len() < l {
            let at = li.partition_point(|&(v, _)| v > s);
            li.insert(at, (s, j));
            true
        } else if s > li.last().unwrap().0 {
            li.pop();
            let at = li.partition_point(|&(v, _)| v > s);
            li.insert(at, (s, j));
            true
        } else {
            false
        }
    };

    for i in 0..n {
        for _ in 0..l {
            let j = rng.gen_range(0..n);
            if j == i || state.net().weight(i, j) != 0.0 {
                continue;
            }
            let s = score_pair(state, hyper, i.min(j), i.max(j));
            try_insert(&mut lists, i, j, s);
            try_insert(&mut lists, j, i, s);
        }
    }

    for _ in 0..rounds {
        let mut updates = 0usize;
        for i in 0..n {
            let mut cand: Vec<usize> = Vec::new();
            let firsts: Vec<usize> = lists[i].iter().map(|&(_, p)| p).collect();
            for &u in &firsts {
                for &(_, v) in &lists[u] {
                    if v != i && !firsts.contains(&v) && !cand.contains(&v) {
                        cand.push(v);
                    }
                }
            }
            // Random-pair injection keeps the search from stalling in a
            // disconnected candidate graph.
            for _ in 0..2 {
                let v = rng.gen_range(0..n);
                if v != i && !cand.contains(&v) {
                    cand.push(v);
                }
            }
            for v in cand {
                if state.net().weight(i, v) != 0.0 {
                    continue;
                }
                if lists[i].iter().any(|&(_, p)| p == v) {
                    continue;
                }
                let s = score_pair(state, hyper, i.min(v), i.max(v));
                if try_insert(&mut lists, i, v, s) {
                    updates += 1;
                }
                if try_insert(&mut lists, v, i, s) {
                    updates += 1;
                }
            }
        }
        if (updates as f64) < 0.01 * (n * l) as f64 {
            break;
        }
    }

    let mut seen: Vec<(f64, Pair)> = Vec::new();
    for i in 0..n {
        for &(s, j) in &lists[i] {
            let p = ordered(i, j);
            if !seen.iter().any(|&(_, q)| q == p) {
                seen.push((s, p));
            }
        }
    }
    with_nonzero(state, top_pairs(seen, budget))
}

fn sweep_order<T, R: Rng + ?Sized>(items: &mut Vec<T>, cfg: &OptimizerConfig, rng: &mut R) {
    if cfg.sweep_order == SweepOrder::Shuffled {
        items.shuffle(rng);
    }
}

/// Visit every candidate entry once and propose one uniformly chosen update:
/// the best existing category value (random bisection over the sorted list),
/// a new off-category value (random bisection over the allowed interval), or
/// removal. Applied only on strict DL improvement.
pub fn edge_update_sweep<R: Rng + ?Sized>(
    state: &mut ModelState,
    hyper: &PriorHyper,
    cands: &CandidateSet,
    cfg: &OptimizerConfig,
    rng: &mut R,
) -> usize {
    let mut order = cands.pairs.clone();
    sweep_order(&mut order, cfg, rng);
    let mut accepted = 0usize;
    for (i, j) in order {
        let k = state.net().categories().len();
        match rng.gen_range(0..3u8) {
            0 => {
                if k == 0 {
                    continue;
                }
                let vals = state.net().categories().sorted_values();
                let (idx, neg_dl) = random_bisection_discrete(
                    |ix| -dl_edge_delta(state, hyper, i, j, Resolved::Existing(vals[ix])),
                    k,
                    cfg.bisection_iters,
                    rng,
                );
                if -neg_dl < -MIN_DL_IMPROVEMENT {
                    apply_resolved(state, i, j, Resolved::Existing(vals[idx]));
                    accepted += 1;
                }
            }
            1 => {
                let (v, _) = random_bisection(
                    |v| match resolve_weight(state.net(), v) {
                        Some(t) => -dl_edge_delta(state, hyper, i, j, t),
                        None => f64::NEG_INFINITY,
                    },
                    cfg.weight_min,
                    cfg.weight_max,
                    cfg.bisection_iters,
                    rng,
                );
                let Some(target) = resolve_weight(state.net(), v) else {
                    continue;
                };
                let dl = dl_edge_delta(state, hyper, i, j, target);
                if dl < -MIN_DL_IMPROVEMENT {
                    apply_resolved(state, i, j, target);
                    accepted += 1;
                }
            }
            _ => {
                if state.net().weight(i, j) == 0.0 {
                    continue;
                }
                let dl = dl_edge_delta(state, hyper, i, j, Resolved::Zero);
                if dl < -MIN_DL_IMPROVEMENT {
                    apply_resolved(state, i, j, Resolved::Zero);
                    accepted += 1;
                }
            }
        }
    }
    accepted
}

/// For each node with nonzero degree, try to relocate one random incident
/// edge onto a random absent candidate entry sharing that node. The prior is
/// untouched (E, K, m fixed); only the likelihood decides.
pub fn edge_move_sweep<R: Rng + ?Sized>(
    state: &mut ModelState,
    cands: &CandidateSet,
    cfg: &OptimizerConfig,
    rng: &mut R,
) -> usize {
    let n = state.n_nodes();
    let mut zero_by_node: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &(a, b) in &cands.pairs {
        if state.net().weight(a, b) == 0.0 {
            zero_by_node[a].push(b);
            zero_by_node[b].push(a);
        }
    }
    let mut nodes: Vec<usize> = (0..n).collect();
    sweep_order(&mut nodes, cfg, rng);
    let mut accepted = 0usize;
    for i in nodes {
        if state.net().degree(i) == 0 || zero_by_node[i].is_empty() {
            continue;
        }
        let j = *state
            .net()
            .neighbors(i)
            .choose(rng)
            .expect("nonzero degree");
        // The candidate list is a snapshot; re-check emptiness at proposal time.
        let mut u = None;
        for _ in 0..8 {
            let c = *zero_by_node[i].choose(rng).unwrap();
            if c != j && state.net().weight(i, c) == 0.0 {
                u = Some(c);
                break;
            }
        }
        let Some(u) = u else { continue };
        let w = state.net().weight(i, j);
        let ll_gain = state.delta_multi(&[(i, j, 0.0), (i, u, w)]);
        if ll_gain > MIN_DL_IMPROVEMENT {
            state.apply_move(i, j, u).expect("validated move");
            accepted += 1;
        }
    }
    accepted
}

/// Random endpoint swaps between pairs of nonzero entries on four distinct
/// nodes; preserves E, K, m and the binarized degree sequence.
pub fn edge_swap_sweep<R: Rng + ?Sized>(
    state: &mut ModelState,
    n_proposals: usize,
    rng: &mut R,
) -> usize {
    let mut accepted = 0usize;
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
        let ll_gain =
            state.delta_multi(&[(i, j, 0.0), (u, v, 0.0), (i, v, w1), (u, j, w2)]);
        if ll_gain > MIN_DL_IMPROVEMENT {
            state.apply_move(i, j, v).expect("validated swap leg");
            state.apply_move(u, v, j).expect("validated swap leg");
            accepted += 1;
        }
    }
    accepted
}

/// Random-bisection refinement of each weight category value, all member
/// edges moving together.
pub fn category_value_sweep<R: Rng + ?Sized>(
    state: &mut ModelState,
    hyper: &PriorHyper,
    cfg: &OptimizerConfig,
    rng: &mut R,
) -> usize {
    let mut values = state.net().categories().sorted_values();
    sweep_order(&mut values, cfg, rng);
    let mut accepted = 0usize;
    for z in values {
        let Some(slot) = state.net().categories().slot_of_value(z) else {
            continue;
        };
        let members = state.net().categories().members(slot).to_vec();
        let shift = state.value_shift(&members);
        // Only the lambda |z| prior term depends on the value itself.
        let obj = |v: f64| {
            if v == 0.0 {
                return f64::NEG_INFINITY;
            }
            state.delta_value_shift(&shift, v - z) - hyper.lambda * (v.abs() - z.abs())
        };
        let (v_raw, _) = random_bisection(obj, cfg.weight_min, cfg.weight_max, cfg.bisection_iters, rng);
        let v = snap_to_grid(v_raw, state.net().grid_delta());
        if v == z || v == 0.0 || state.net().categories().slot_of_value(v).is_some() {
            continue;
        }
        let dl = hyper.lambda * (v.abs() - z.abs()) - state.delta_value_shift(&shift, v - z);
        if dl < -MIN_DL_IMPROVEMENT {
            state
                .apply_category_value(z, v)
                .expect("validated category value");
            accepted += 1;
        }
    }
    accepted
}

// ---------------------------------------------------------------------------
// Merge-split machinery (weight categories)
// ---------------------------------------------------------------------------

fn restore_edges(state: &mut ModelState, snap: &[(Pair, f64)]) {
    for &((a, b), w) in snap {
        if state.net().weight(a, b) != w {
            let target = if state.net().categories().slot_of_value(w).is_some() {
                WeightTarget::Value(w)
            } else {
                WeightTarget::NewValue(w)
            };
            state.apply_edge(a, b, target).expect("snapshot restore");
        }
    }
}

/// Bisect the value of the category currently at `z`, applying the best
/// strictly improving value. Returns the (possibly unchanged) value.
fn refine_category_value<R: Rng + ?Sized>(
    state: &mut ModelState,
    hyper: &PriorHyper,
    cfg: &OptimizerConfig,
    z: f64,
    rng: &mut R,
) -> f64 {
    let Some(slot) = state.net().categories().slot_of_value(z) else {
        return z;
    };
    let members = state.net().categories().members(slot).to_vec();
    let shift = state.value_shift(&members);
    let obj = |v: f64| {
        if v == 0.0 {
            return f64::NEG_INFINITY;
        }
        state.delta_value_shift(&shift, v - z) - hyper.lambda * (v.abs() - z.abs())
    };
    let (v_raw, _) = random_bisection(obj, cfg.weight_min, cfg.weight_max, cfg.bisection_iters, rng);
    let v = snap_to_grid(v_raw, state.net().grid_delta());
    if v == z || v == 0.0 || state.net().categories().slot_of_value(v).is_some() {
        return z;
    }
    let gain = state.delta_value_shift(&shift, v - z) - hyper.lambda * (v.abs() - z.abs());
    if gain > MIN_DL_IMPROVEMENT {
        state.apply_category_value(z, v).expect("refined value");
        v
    } else {
        z
    }
}

/// Alternate member reassignment between the categories at `va`/`vb` and
/// value bisection until neither changes. Returns the final two values.
fn refine_two_categories<R: Rng + ?Sized>(
    state: &mut ModelState,
    hyper: &PriorHyper,
    cfg: &OptimizerConfig,
    members: &[Pair],
    mut va: f64,
    mut vb: f64,
    rng: &mut R,
) -> (f64, f64) {
    for _ in 0..cfg.split_refine_iters {
        let mut moved = 0usize;
        for &(a, b) in members {
            let w = state.net().weight(a, b);
            let other = if w == va {
                vb
            } else if w == vb {
                va
            } else {
                continue; // member restored elsewhere mid-proposal; skip
            };
            // Never empty a side.
            let cur_slot = state.net().category_of(a, b).unwrap();
            if state.net().categories().count(cur_slot) == 1 {
                continue;
            }
            let dl = dl_edge_delta(state, hyper, a, b, Resolved::Existing(other));
            if dl < -MIN_DL_IMPROVEMENT {
                apply_resolved(state, a, b, Resolved::Existing(other));
                moved += 1;
            }
        }
        let va2 = refine_category_value(state, hyper, cfg, va, rng);
        let vb2 = refine_category_value(state, hyper, cfg, vb, rng);
        let values_stable = va2 == va && vb2 == vb;
        va = va2;
        vb = vb2;
        if moved == 0 && values_stable {
            break;
        }
    }
    (va, vb)
}

/// Merge / split / merge-split proposals over the weight categories, accepted
/// on strict DL improvement; rejected proposals are rolled back exactly.
pub fn merge_split_sweep<R: Rng + ?Sized>(
    state: &mut ModelState,
    hyper: &PriorHyper,
    cfg: &OptimizerConfig,
    rng: &mut R,
) -> usize {
    let k0 = state.net().categories().len();
    if k0 == 0 {
        return 0;
    }
    let mut accepted = 0usize;
    for _ in 0..k0 {
        let k = state.net().categories().len();
        if k == 0 {
            break;
        }
        let kind = if k >= 2 { rng.gen_range(0..3u8) } else { 1 };
        match kind {
            0 => {
                if try_merge(state, hyper, cfg, rng) {
                    accepted += 1;
                }
            }
            1 => {
                if try_split(state, hyper, cfg, rng) {
                    accepted += 1;
                }
            }
            _ => {
                if try_merge_split(state, hyper, cfg, rng) {
                    accepted += 1;
                }
            }
        }
    }
    accepted
}

fn pick_two_values<R: Rng + ?Sized>(state: &ModelState, rng: &mut R) -> Option<(f64, f64)> {
    let vals = state.net().categories().sorted_values();
    if vals.len() < 2 {
        return None;
    }
    let a = rng.gen_range(0..vals.len());
    let mut b = rng.gen_range(0..vals.len() - 1);
    if b >= a {
        b += 1;
    }
    Some((vals[a], vals[b]))
}

fn snapshot_categories(state: &ModelState, values: &[f64]) -> Vec<(Pair, f64)> {
    let mut snap = Vec::new();
    for &v in values {
        if let Some(slot) = state.net().categories().slot_of_value(v) {
            for &p in state.net().categories().members(slot) {
                snap.push((p, v));
            }
        }
    }
    snap
}

fn try_merge<R: Rng + ?Sized>(
    state: &mut ModelState,
    hyper: &PriorHyper,
    cfg: &OptimizerConfig,
    rng: &mut R,
) -> bool {
    let Some((za, zb)) = pick_two_values(state, rng) else {
        return false;
    };
    let dl0 = description_length_running(state, hyper);
    let snap = snapshot_categories(state, &[za, zb]);
    // Absorb b into a, then bisect the merged value.
    for &(p, w) in &snap {
        if w == zb {
            apply_resolved(state, p.0, p.1, Resolved::Existing(za));
        }
    }
    refine_category_value(state, hyper, cfg, za, rng);
    let dl1 = description_length_running(state, hyper);
    if dl1 < dl0 - MIN_DL_IMPROVEMENT {
        true
    } else {
        restore_edges(state, &snap);
        false
    }
}

/// Seed range for a split: between the sorted neighbors of `z`, falling back
/// to the allowed weight interval at the extremes.
fn split_seed_range(state: &ModelState, cfg: &OptimizerConfig, z: f64) -> (f64, f64) {
    let vals = state.net().categories().sorted_values();
    let idx = vals.iter().position(|&v| v == z).unwrap();
    let lo = if idx > 0 { vals[idx - 1] } else { cfg.weight_min };
    let hi = if idx + 1 < vals.len() {
        vals[idx + 1]
    } else {
        cfg.weight_max
    };
    (lo, hi)
}

fn try_split<R: Rng + ?Sized>(
    state: &mut ModelState,
    hyper: &PriorHyper,
    cfg: &OptimizerConfig,
    rng: &mut R,
) -> bool {
    let vals = state.net().categories().sorted_values();
    let z = vals[rng.gen_range(0..vals.len())];
    let slot = state.net().categories().slot_of_value(z).unwrap();
    if state.net().categories().count(slot) < 2 {
        return false;
    }
    let dl0 = description_length_running(state, hyper);
    let snap = snapshot_categories(state, &[z]);
    let members: Vec<Pair> = snap.iter().map(|&(p, _)| p).collect();
    let (lo, hi) = split_seed_range(state, cfg, z);
    // Seed two fresh values; bail out if no valid distinct pair is found.
    let mut seeds = None;
    for _ in 0..16 {
        let a = snap_to_grid(rng.gen_range(lo..hi), state.net().grid_delta());
        let b = snap_to_grid(rng.gen_range(lo..hi), state.net().grid_delta());
        let distinct = a != b && a != 0.0 && b != 0.0;
        let free = |v: f64| v == z || state.net().categories().slot_of_value(v).is_none();
        if distinct && free(a) && free(b) {
            seeds = Some((a, b));
            break;
        }
    }
    let Some((va, vb)) = seeds else { return false };
    // Move one member to each seed, then distribute the rest greedily.
    let (first, second) = (members[0], members[1]);
    apply_resolved(state, first.0, first.1, resolve_weight(state.net(), va).unwrap());
    apply_resolved(state, second.0, second.1, resolve_weight(state.net(), vb).unwrap());
    let va = state.net().weight(first.0, first.1);
    let vb = state.net().weight(second.0, second.1);
    for &p in &members[2..] {
        let da = dl_edge_delta(state, hyper, p.0, p.1, Resolved::Existing(va));
        let db = dl_edge_delta(state, hyper, p.0, p.1, Resolved::Existing(vb));
        let v = if da <= db { va } else { vb };
        apply_resolved(state, p.0, p.1, Resolved::Existing(v));
    }
    refine_two_categories(state, hyper, cfg, &members, va, vb, rng);
    let dl1 = description_length_running(state, hyper);
    if dl1 < dl0 - MIN_DL_IMPROVEMENT {
        true
    } else {
        restore_edges(state, &snap);
        false
    }
}

fn try_merge_split<R: Rng + ?Sized>(
    state: &mut ModelState,
    hyper: &PriorHyper,
    cfg: &OptimizerConfig,
    rng: &mut R,
) -> bool {
    let Some((za, zb)) = pick_two_values(state, rng) else {
        return false;
    };
    let dl0 = description_length_running(state, hyper);
    let snap = snapshot_categories(state, &[za, zb]);
    let members: Vec<Pair> = snap.iter().map(|&(p, _)| p).collect();
    if members.len() < 2 {
        return false;
    }
    // Redistribute the union over the two existing values, then refine both.
    refine_two_categories(state, hyper, cfg, &members, za, zb, rng);
    let dl1 = description_length_running(state, hyper);
    if dl1 < dl0 - MIN_DL_IMPROVEMENT {
        true
    } else {
        restore_edges(state, &snap);
        false
    }
}

// ---------------------------------------------------------------------------
// Node-field moves (mirror of the weight machinery on the field categories)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
enum FieldTarget {
    Existing(f64),
    Fresh(f64),
}

fn resolve_field(fields: &NodeFields, v: f64) -> FieldTarget {
    let v = snap_to_grid(v, fields.delta());
    if fields.slot_of_value(v).is_some() {
        FieldTarget::Existing(v)
    } else {
        FieldTarget::Fresh(v)
    }
}

fn dl_theta_delta(state: &ModelState, hyper: &PriorHyper, i: usize, target: FieldTarget) -> f64 {
    let fields = state.fields();
    let v_new = match target {
        FieldTarget::Existing(v) | FieldTarget::Fresh(v) => v,
    };
    let cur = fields.theta(i);
    if v_new == cur {
        return 0.0;
    }
    let pre = ThetaPriorState::of(fields);
    let mut post = pre;
    let cur_slot = fields.slot_of_node(i);
    post.remove_member(fields.count(cur_slot), cur);
    match target {
        FieldTarget::Existing(v) => {
            let slot = fields.slot_of_value(v).unwrap();
            post.add_member(fields.count(slot));
        }
        FieldTarget::Fresh(v) => post.add_category(v),
    }
    let n = fields.n_nodes();
    post.nats(n, hyper) - pre.nats(n, hyper) - state.delta_theta(i, v_new)
}

fn apply_field(state: &mut ModelState, i: usize, target: FieldTarget) {
    match target {
        FieldTarget::Existing(v) => {
            state.apply_theta(i, v, false).expect("existing field value");
        }
        FieldTarget::Fresh(v) => {
            state.apply_theta(i, v, true).expect("fresh field value");
        }
    }
}

/// Per-node field updates: move a node to the best existing field category
/// (discrete random bisection) or to a new value (continuous bisection).
pub fn field_update_sweep<R: Rng + ?Sized>(
    state: &mut ModelState,
    hyper: &PriorHyper,
    cfg: &OptimizerConfig,
    rng: &mut R,
) -> usize {
    let mut nodes: Vec<usize> = (0..state.n_nodes()).collect();
    sweep_order(&mut nodes, cfg, rng);
    let mut accepted = 0usize;
    for i in nodes {
        match rng.gen_range(0..2u8) {
            0 => {
                let vals = state.fields().sorted_values();
                let (idx, neg_dl) = random_bisection_discrete(
                    |ix| -dl_theta_delta(state, hyper, i, FieldTarget::Existing(vals[ix])),
                    vals.len(),
                    cfg.bisection_iters,
                    rng,
                );
                if -neg_dl < -MIN_DL_IMPROVEMENT {
                    apply_field(state, i, FieldTarget::Existing(vals[idx]));
                    accepted += 1;
                }
            }
            _ => {
                let (v, _) = random_bisection(
                    |v| -dl_theta_delta(state, hyper, i, resolve_field(state.fields(), v)),
                    cfg.theta_min,
                    cfg.theta_max,
                    cfg.bisection_iters,
                    rng,
                );
                let target = resolve_field(state.fields(), v);
                let dl = dl_theta_delta(state, hyper, i, target);
                if dl < -MIN_DL_IMPROVEMENT {
                    apply_field(state, i, target);
                    accepted += 1;
                }
            }
        }
    }
    accepted
}

/// Field-prior value when the category at `old_v` moves to `new_v`; infinity
/// on collision.
fn theta_prior_with_value(state: &ModelState, hyper: &PriorHyper, old_v: f64, new_v: f64) -> f64 {
    let fields = state.fields();
    let mut counts = Vec::with_capacity(fields.n_categories());
    let mut values = Vec::with_capacity(fields.n_categories());
    for (v, c) in fields.sorted_value_counts() {
        counts.push(c);
        values.push(if v == old_v { new_v } else { v });
    }
    neglog_prior_theta(fields.n_nodes(), &counts, &values, hyper).unwrap_or(f64::INFINITY)
}

/// Random-bisection refinement of each field category value.
pub fn field_value_sweep<R: Rng + ?Sized>(
    state: &mut ModelState,
    hyper: &PriorHyper,
    cfg: &OptimizerConfig,
    rng: &mut R,
) -> usize {
    let mut values = state.fields().sorted_values();
    sweep_order(&mut values, cfg, rng);
    let mut accepted = 0usize;
    for u in values {
        let Some(slot) = state.fields().slot_of_value(u) else {
            continue;
        };
        let nodes = state.fields().members(slot).to_vec();
        let base_prior = theta_prior_with_value(state, hyper, u, u);
        let obj = |v: f64| {
            state.delta_theta_bulk(&nodes, v - u) + base_prior
                - theta_prior_with_value(state, hyper, u, v)
        };
        let (v_raw, _) = random_bisection(obj, cfg.theta_min, cfg.theta_max, cfg.bisection_iters, rng);
        let v = snap_to_grid(v_raw, state.fields().delta());
        if v == u || (v != u && state.fields().slot_of_value(v).is_some()) {
            continue;
        }
        let gain = state.delta_theta_bulk(&nodes, v - u) + base_prior
            - theta_prior_with_value(state, hyper, u, v);
        if gain > MIN_DL_IMPROVEMENT {
            state
                .apply_theta_category_value(u, v)
                .expect("validated field value");
            accepted += 1;
        }
    }
    accepted
}

fn restore_thetas(state: &mut ModelState, snap: &[(usize, f64)]) {
    for &(i, v) in snap {
        if state.fields().theta(i) != v {
            state.apply_theta(i, v, true).expect("field snapshot restore");
        }
    }
}

fn snapshot_field_categories(state: &ModelState, values: &[f64]) -> Vec<(usize, f64)> {
    let mut snap = Vec::new();
    for &v in values {
        if let Some(slot) = state.fields().slot_of_value(v) {
            for &i in state.fields().members(slot) {
                snap.push((i, v));
            }
        }
    }
    snap
}

fn refine_field_value<R: Rng + ?Sized>(
    state: &mut ModelState,
    hyper: &PriorHyper,
    cfg: &OptimizerConfig,
    u: f64,
    rng: &mut R,
) -> f64 {
    let Some(slot) = state.fields().slot_of_value(u) else {
        return u;
    };
    let nodes = state.fields().members(slot).to_vec();
    let base_prior = theta_prior_with_value(state, hyper, u, u);
    let obj = |v: f64| {
        state.delta_theta_bulk(&nodes, v - u) + base_prior
            - theta_prior_with_value(state, hyper, u, v)
    };
    let (v_raw, _) = random_bisection(obj, cfg.theta_min, cfg.theta_max, cfg.bisection_iters, rng);
    let v = snap_to_grid(v_raw, state.fields().delta());
    if v == u || state.fields().slot_of_value(v).is_some() {
        return u;
    }
    let gain = state.delta_theta_bulk(&nodes, v - u) + base_prior
        - theta_prior_with_value(state, hyper, u, v);
    if gain > MIN_DL_IMPROVEMENT {
        state.apply_theta_category_value(u, v).expect("refined field value");
        v
    } else {
        u
    }
}

fn refine_two_field_categories<R: Rng + ?Sized>(
    state: &mut ModelState,
    hyper: &PriorHyper,
    cfg: &OptimizerConfig,
    members: &[usize],
    mut va: f64,
    mut vb: f64,
    rng: &mut R,
) -> (f64, f64) {
    for _ in 0..cfg.split_refine_iters {
        let mut moved = 0usize;
        for &i in members {
            let t = state.fields().theta(i);
            let other = if t == va {
                vb
            } else if t == vb {
                va
            } else {
                continue;
            };
            let cur_slot = state.fields().slot_of_node(i);
            if state.fields().count(cur_slot) == 1 {
                continue;
            }
            let dl = dl_theta_delta(state, hyper, i, FieldTarget::Existing(other));
            if dl < -MIN_DL_IMPROVEMENT {
                apply_field(state, i, FieldTarget::Existing(other));
                moved += 1;
            }
        }
        let va2 = refine_field_value(state, hyper, cfg, va, rng);
        let vb2 = refine_field_value(state, hyper, cfg, vb, rng);
        let stable = va2 == va && vb2 == vb;
        va = va2;
        vb = vb2;
        if moved == 0 && stable {
            break;
        }
    }
    (va, vb)
}

/// Merge / split / merge-split proposals over the field categories.
pub fn field_merge_split_sweep<R: Rng + ?Sized>(
    state: &mut ModelState,
    hyper: &PriorHyper,
    cfg: &OptimizerConfig,
    rng: &mut R,
) -> usize {
    let k0 = state.fields().n_categories();
    let mut accepted = 0usize;
    for _ in 0..k0 {
        let k = state.fields().n_categories();
        let kind = if k >= 2 { rng.gen_range(0..3u8) } else { 1 };
        let ok = match kind {
            0 => try_field_merge(state, hyper, cfg, rng),
            1 => try_field_split(state, hyper, cfg, rng),
            _ => try_field_merge_split(state, hyper, cfg, rng),
        };
        if ok {
            accepted += 1;
        }
    }
    accepted
}

fn pick_two_field_values<R: Rng + ?Sized>(state: &ModelState, rng: &mut R) -> Option<(f64, f64)> {
    let vals = state.fields().sorted_values();
    if vals.len() < 2 {
        return None;
    }
    let a = rng.gen_range(0..vals.len());
    let mut b = rng.gen_range(0..vals.len() - 1);
    if b >= a {
        b += 1;
    }
    Some((vals[a], vals[b]))
}

fn try_field_merge<R: Rng + ?Sized>(
    state: &mut ModelState,
    hyper: &PriorHyper,
    cfg: &OptimizerConfig,
    rng: &mut R,
) -> bool {
    let Some((ua, ub)) = pick_two_field_values(state, rng) else {
        return false;
    };
    let dl0 = description_length_running(state, hyper);
    let snap = snapshot_field_categories(state, &[ua, ub]);
    for &(i, u) in &snap {
        if u == ub {
            apply_field(state, i, FieldTarget::Existing(ua));
        }
    }
    refine_field_value(state, hyper, cfg, ua, rng);
    let dl1 = description_length_running(state, hyper);
    if dl1 < dl0 - MIN_DL_IMPROVEMENT {
        true
    } else {
        restore_thetas(state, &snap);
        false
    }
}

fn try_field_split<R: Rng + ?Sized>(
    state: &mut ModelState,
    hyper: &PriorHyper,
    cfg: &OptimizerConfig,
    rng: &mut R,
) -> bool {
    let vals = state.fields().sorted_values();
    let u = vals[rng.gen_range(0..vals.len())];
    let slot = state.fields().slot_of_value(u).unwrap();
    if state.fields().count(slot) < 2 {
        return false;
    }
    let dl0 = description_length_running(state, hyper);
    let snap = snapshot_field_categories(state, &[u]);
    let members: Vec<usize> = snap.iter().map(|&(i, _)| i).collect();
    let idx = vals.iter().position(|&v| v == u).unwrap();
    let lo = if idx > 0 { vals[idx - 1] } else { cfg.theta_min };
    let hi = if idx + 1 < vals.len() { vals[idx + 1] } else { cfg.theta_max };
    let mut seeds = None;
    for _ in 0..16 {
        let a = snap_to_grid(rng.gen_range(lo..hi), state.fields().delta());
        let b = snap_to_grid(rng.gen_range(lo..hi), state.fields().delta());
        let free = |v: f64| v == u || state.fields().slot_of_value(v).is_none();
        if a != b && free(a) && free(b) {
            seeds = Some((a, b));
            break;
        }
    }
    let Some((sa, sb)) = seeds else { return false };
    apply_field(state, members[0], resolve_field(state.fields(), sa));
    apply_field(state, members[1], resolve_field(state.fields(), sb));
    let va = state.fields().theta(members[0]);
    let vb = state.fields().theta(members[1]);
    for &i in &members[2..] {
        let da = dl_theta_delta(state, hyper, i, FieldTarget::Existing(va));
        let db = dl_theta_delta(state, hyper, i, FieldTarget::Existing(vb));
        let v = if da <= db { va } else { vb };
        apply_field(state, i, FieldTarget::Existing(v));
    }
    refine_two_field_categories(state, hyper, cfg, &members, va, vb, rng);
    let dl1 = description_length_running(state, hyper);
    if dl1 < dl0 - MIN_DL_IMPROVEMENT {
        true
    } else {
        restore_thetas(state, &snap);
        false
    }
}

fn try_field_merge_split<R: Rng + ?Sized>(
    state: &mut ModelState,
    hyper: &PriorHyper,
    cfg: &OptimizerConfig,
    rng: &mut R,
) -> bool {
    let Some((ua, ub)) = pick_two_field_values(state, rng) else {
        return false;
    };
    let dl0 = description_length_running(state, hyper);
    let snap = snapshot_field_categories(state, &[ua, ub]);
    let members: Vec<usize> = snap.iter().map(|&(i, _)| i).collect();
    if members.len() < 2 {
        return false;
    }
    refine_two_field_categories(state, hyper, cfg, &members, ua, ub, rng);
    let dl1 = description_length_running(state, hyper);
    if dl1 < dl0 - MIN_DL_IMPROVEMENT {
        true
    } else {
        restore_thetas(state, &snap);
        false
    }
}

// ---------------------------------------------------------------------------
// Driver
// ---------------------------------------------------------------------------

/// Minimize the DL over the weight-prior scale (golden section on the log
/// scale); only the prior terms depend on it.
fn tune_lambda(state: &ModelState, hyper: &PriorHyper) -> f64 {
    let pre = WeightPriorState::of(state.net());
    let n = state.n_nodes();
    let obj = |ln_lambda: f64| {
        let mut h = *hyper;
        h.lambda = ln_lambda.exp();
        weight_prior_nats(pre.e, pre.k, pre.sum_ln_fact_m, pre.sum_abs_z, n, &h)
    };
    let (best, _) = golden_section_min(obj, -6.0, 6.0, 80);
    best.exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum SweepKind {
    EdgeUpdate,
    EdgeMove,
    EdgeSwap,
    CategoryValue,
    CategoryMergeSplit,
    FieldUpdate,
    FieldValue,
    FieldMergeSplit,
}

impl SweepKind {
    fn name(self) -> &'static str {
        match self {
            SweepKind::EdgeUpdate => "edge_update",
            SweepKind::EdgeMove => "edge_move",
            SweepKind::EdgeSwap => "edge_swap",
            SweepKind::CategoryValue => "category_value",
            SweepKind::CategoryMergeSplit => "category_merge_split",
            SweepKind::FieldUpdate => "field_update",
            SweepKind::FieldValue => "field_value",
            SweepKind::FieldMergeSplit => "field_merge_split",
        }
    }
}

/// Full MAP reconstruction under the quantized categorized prior. Starts from
/// an empty network and empty category set; alternates candidate search with
/// all sweep types until a round improves the DL by less than `tol_nats`.
pub fn reconstruct_mdl(
    data: Dataset,
    kind: ModelKind,
    hyper: &PriorHyper,
    cfg: &OptimizerConfig,
) -> Result<(WeightedNetwork, NodeFields, RunReport), ModelError> {
    hyper.validate();
    let start = Instant::now();
    let mut hyper = *hyper;
    let mut state = ModelState::empty(
        data,
        kind,
        hyper.delta,
        hyper.lambda,
        hyper.delta_theta,
        hyper.lambda_theta,
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut acceptance: BTreeMap<String, u64> = BTreeMap::new();
    let mut trajectory = vec![description_length_running(&state, &hyper)];
    let mut converged = false;
    let mut rounds = 0usize;

    for _ in 0..cfg.max_sweeps {
        rounds += 1;
        state.recompute();
        let dl_start = description_length_running(&state, &hyper);
        let cands = match cfg.candidate_mode {
            CandidateMode::Exact => candidate_search_exact(&state, &hyper, cfg.kappa),
            CandidateMode::NnDescent => candidate_search_nnd(
                &state,
                &hyper,
                cfg.kappa,
                cfg.nnd_rounds,
                cfg.nnd_list_len,
                &mut rng,
            ),
        };
        let mut sweeps = vec![
            SweepKind::EdgeUpdate,
            SweepKind::EdgeMove,
            SweepKind::EdgeSwap,
            SweepKind::CategoryValue,
            SweepKind::CategoryMergeSplit,
        ];
        if cfg.fit_theta {
            sweeps.extend([
                SweepKind::FieldUpdate,
                SweepKind::FieldValue,
                SweepKind::FieldMergeSplit,
            ]);
        }
        if cfg.sweep_order == SweepOrder::Shuffled {
            sweeps.shuffle(&mut rng);
        }
        for sweep in sweeps {
            let acc = match sweep {
                SweepKind::EdgeUpdate => {
                    edge_update_sweep(&mut state, &hyper, &cands, cfg, &mut rng)
                }
                SweepKind::EdgeMove => edge_move_sweep(&mut state, &cands, cfg, &mut rng),
                SweepKind::EdgeSwap => {
                    let n = (cfg.swap_proposals_per_edge * state.net().n_edges() as f64).ceil()
                        as usize;
                    edge_swap_sweep(&mut state, n, &mut rng)
                }
                SweepKind::CategoryValue => category_value_sweep(&mut state, &hyper, cfg, &mut rng),
                SweepKind::CategoryMergeSplit => {
                    merge_split_sweep(&mut state, &hyper, cfg, &mut rng)
                }
                SweepKind::FieldUpdate => field_update_sweep(&mut state, &hyper, cfg, &mut rng),
                SweepKind::FieldValue => field_value_sweep(&mut state, &hyper, cfg, &mut rng),
                SweepKind::FieldMergeSplit => {
                    field_merge_split_sweep(&mut state, &hyper, cfg, &mut rng)
                }
            };
            *acceptance.entry(sweep.name().to_string()).or_insert(0) += acc as u64;
        }
        if cfg.optimize_lambda {
            let lambda = tune_lambda(&state, &hyper);
            hyper.lambda = lambda;
            state.set_lambda(lambda);
        }
        let dl_end = description_length_running(&state, &hyper);
        trajectory.push(dl_end);
        if dl_start - dl_end < cfg.tol_nats {
            converged = true;
            break;
        }
    }

    state.recompute();
    let report = RunReport::from_state(
        "mdl",
        &state,
        &hyper,
        rounds,
        converged,
        acceptance,
        trajectory,
        cfg.seed,
        start.elapsed().as_secs_f64(),
    );
    let (net, fields) = state.into_parts();
    Ok((net, fields, report))
}
