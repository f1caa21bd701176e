//! Data generation for the supported models (synchronous kinetic trajectories,
//! equilibrium MCMC with convergence diagnostics), synthetic weight planting,
//! and macrostate perturbation analysis of fitted models.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::graph::{
    Alphabet, DataKind, Dataset, NodeFields, Pair, WeightTarget, WeightedNetwork,
};
use crate::models::{ln_1p2cosh, ln_2cosh};

/// Local field of node `i` under configuration `x`.
fn field_at(net: &WeightedNetwork, fields: &NodeFields, x: &[i8], i: usize) -> f64 {
    let mut s = fields.theta(i);
    for &j in net.neighbors(i) {
        s += net.weight(i, j) * x[j] as f64;
    }
    s
}

fn sample_state<R: Rng + ?Sized>(s: f64, alphabet: Alphabet, rng: &mut R) -> i8 {
    match alphabet {
        Alphabet::Binary => {
            // P(+1 | s) = e^s / (2 cosh s)
            let p_up = (s - ln_2cosh(s)).exp();
            if rng.gen::<f64>() < p_up {
                1
            } else {
                -1
            }
        }
        Alphabet::ZeroValued => {
            let z = ln_1p2cosh(s);
            let p_up = (s - z).exp();
            let p_zero = (-z).exp();
            let r = rng.gen::<f64>();
            if r < p_up {
                1
            } else if r < p_up + p_zero {
                0
            } else {
                -1
            }
        }
    }
}

pub fn random_config<R: Rng + ?Sized>(n: usize, alphabet: Alphabet, rng: &mut R) -> Vec<i8> {
    (0..n)
        .map(|_| match alphabet {
            Alphabet::Binary => {
                if rng.gen::<bool>() {
                    1
                } else {
                    -1
                }
            }
            Alphabet::ZeroValued => rng.gen_range(-1i8..=1),
        })
        .collect()
}

/// Sample `n_transitions` synchronous transitions starting from `x0`. The
/// returned dataset holds `n_transitions + 1` columns (the initial state
/// included) and is flagged as a Markov trajectory.
pub fn sample_kinetic<R: Rng + ?Sized>(
    net: &WeightedNetwork,
    fields: &NodeFields,
    n_transitions: usize,
    x0: &[i8],
    alphabet: Alphabet,
    rng: &mut R,
) -> Dataset {
    let n = net.n_nodes();
    assert_eq!(x0.len(), n);
    assert!(n_transitions >= 1);
    let m = n_transitions + 1;
    let mut states = vec![0i8; n * m];
    let mut cur: Vec<i8> = x0.to_vec();
    for (i, &v) in cur.iter().enumerate() {
        states[i * m] = v;
    }
    let mut next = vec![0i8; n];
    for t in 1..m {
        for i in 0..n {
            let s = field_at(net, fields, &cur, i);
            next[i] = sample_state(s, alphabet, rng);
        }
        for i in 0..n {
            states[i * m + t] = next[i];
        }
        std::mem::swap(&mut cur, &mut next);
    }
    Dataset::new(n, m, states, DataKind::Markov, alphabet).expect("sampled states are valid")
}

/// One sweep of single-site Metropolis updates. `clamped` marks a node that
/// is never updated.
fn metropolis_sweep<R: Rng + ?Sized>(
    net: &WeightedNetwork,
    fields: &NodeFields,
    x: &mut [i8],
    alphabet: Alphabet,
    clamped: Option<usize>,
    rng: &mut R,
) {
    let n = x.len();
    for _ in 0..n {
        let i = rng.gen_range(0..n);
        if Some(i) == clamped {
            continue;
        }
        let cur = x[i];
        let prop: i8 = match alphabet {
            Alphabet::Binary => -cur,
            Alphabet::ZeroValued => {
                // Uniform proposal over the other two states.
                let others = match cur {
                    -1 => [0, 1],
                    0 => [-1, 1],
                    _ => [-1, 0],
                };
                others[rng.gen_range(0..2)]
            }
        };
        let s = field_at(net, fields, x, i);
        let dlogp = (prop - cur) as f64 * s;
        if dlogp >= 0.0 || rng.gen::<f64>() < dlogp.exp() {
            x[i] = prop;
        }
    }
}

/// One sweep of single-site heat-bath (Glauber) updates.
fn glauber_sweep<R: Rng + ?Sized>(
    net: &WeightedNetwork,
    fields: &NodeFields,
    x: &mut [i8],
    alphabet: Alphabet,
    clamped: Option<usize>,
    rng: &mut R,
) {
    let n = x.len();
    for _ in 0..n {
        let i = rng.gen_range(0..n);
        if Some(i) == clamped {
            continue;
        }
        let s = field_at(net, fields, x, i);
        x[i] = sample_state(s, alphabet, rng);
    }
}

/// Split potential-scale-reduction statistic over per-chain sequences.
/// Sequences shorter than 4 yield NaN.
pub fn split_r_hat(sequences: &[Vec<f64>]) -> f64 {
    let mut halves: Vec<&[f64]> = Vec::new();
    for s in sequences {
        if s.len() < 4 {
            return f64::NAN;
        }
        let mid = s.len() / 2;
        halves.push(&s[..mid]);
        halves.push(&s[mid..]);
    }
    let m = halves.len() as f64;
    let n = halves.iter().map(|h| h.len()).min().unwrap() as f64;
    let means: Vec<f64> = halves
        .iter()
        .map(|h| h.iter().sum::<f64>() / h.len() as f64)
        .collect();
    let grand = means.iter().sum::<f64>() / m;
    let b = n / (m - 1.0) * means.iter().map(|x| (x - grand).powi(2)).sum::<f64>();
    let w = halves
        .iter()
        .zip(&means)
        .map(|(h, mu)| h.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (h.len() as f64 - 1.0))
        .sum::<f64>()
        / m;
    if w == 0.0 {
        if b == 0.0 {
            return 1.0; // all halves frozen at the same value
        }
        return f64::INFINITY;
    }
    let var_plus = (n - 1.0) / n * w + b / n;
    (var_plus / w).sqrt()
}

/// Effective sample size from the autocorrelation of a pooled sequence
/// (initial-positive-sequence truncation).
pub fn effective_sample_size(seq: &[f64]) -> f64 {
    let n = seq.len();
    if n < 4 {
        return f64::NAN;
    }
    let mean = seq.iter().sum::<f64>() / n as f64;
    let var = seq.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
    if var == 0.0 {
        return n as f64;
    }
    let mut rho_sum = 0.0;
    let mut t = 1usize;
    while t + 1 < n {
        let rho_t = autocovariance(seq, mean, t) / var;
        let rho_t1 = autocovariance(seq, mean, t + 1) / var;
        let pair = rho_t + rho_t1;
        if pair <= 0.0 {
            break;
        }
        rho_sum += pair;
        t += 2;
    }
    (n as f64 / (1.0 + 2.0 * rho_sum)).min(n as f64)
}

fn autocovariance(seq: &[f64], mean: f64, lag: usize) -> f64 {
    let n = seq.len();
    (0..n - lag)
        .map(|i| (seq[i] - mean) * (seq[i + lag] - mean))
        .sum::<f64>()
        / n as f64
}

#[derive(Debug, Clone)]
pub struct ChainDiagnostics {
    pub r_hat: Vec<f64>,
    pub ess: Vec<f64>,
    pub n_chains: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct EquilibriumOptions {
    pub n_chains: usize,
    /// R-hat threshold ending burn-in.
    pub r_hat_target: f64,
    /// Sweeps between kept samples.
    pub thin: usize,
    /// Abort burn-in after this many sweeps per chain.
    pub max_burnin_sweeps: usize,
}

impl Default for EquilibriumOptions {
    fn default() -> Self {
        Self {
            n_chains: 4,
            r_hat_target: 1.01,
            thin: 1,
            max_burnin_sweeps: 65_536,
        }
    }
}

/// Sample `m_samples` configurations from the equilibrium model by parallel
/// single-site Metropolis chains. Burn-in grows geometrically until the split
/// R-hat of every node drops below the target (or the budget runs out, which
/// clears the `converged` flag); draws are then taken round-robin across
/// chains every `thin` sweeps.
pub fn sample_equilibrium(
    net: &WeightedNetwork,
    fields: &NodeFields,
    m_samples: usize,
    alphabet: Alphabet,
    opts: &EquilibriumOptions,
    seed: u64,
) -> (Dataset, ChainDiagnostics) {
    let n = net.n_nodes();
    assert!(m_samples >= 1 && opts.n_chains >= 1);
    let mut chains: Vec<(Vec<i8>, ChaCha8Rng, Vec<Vec<f64>>)> = (0..opts.n_chains)
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(c as u64 * 0x9E37_79B9));
            let x = random_config(n, alphabet, &mut rng);
            let hist: Vec<Vec<f64>> = vec![Vec::new(); n];
            (x, rng, hist)
        })
        .collect();

    // Burn-in in doubling blocks; diagnostics on the recorded per-node series
    // with the first half discarded as warm-up.
    let mut total_sweeps = 0usize;
    let mut block = 64usize;
    let mut converged = false;
    let mut r_hat = vec![f64::NAN; n];
    while total_sweeps < opts.max_burnin_sweeps {
        chains.par_iter_mut().for_each(|(x, rng, hist)| {
            for _ in 0..block {
                metropolis_sweep(net, fields, x, alphabet, None, rng);
                for i in 0..n {
                    hist[i].push(x[i] as f64);
                }
            }
        });
        total_sweeps += block;
        block *= 2;
        let mut worst = f64::NEG_INFINITY;
        for i in 0..n {
            let seqs: Vec<Vec<f64>> = chains
                .iter()
                .map(|(_, _, hist)| hist[i][hist[i].len() / 2..].to_vec())
                .collect();
            r_hat[i] = split_r_hat(&seqs);
            let v = if r_hat[i].is_nan() {
                f64::INFINITY
            } else {
                r_hat[i]
            };
            worst = worst.max(v);
        }
        if worst < opts.r_hat_target {
            converged = true;
            break;
        }
    }

    // Sampling phase: round-robin across chains.
    let m = m_samples;
    let mut states = vec![0i8; n * m];
    let mut kept_series: Vec<Vec<f64>> = vec![Vec::new(); n];
    let per_chain = m.div_ceil(opts.n_chains);
    let collected: Vec<Vec<Vec<i8>>> = chains
        .par_iter_mut()
        .map(|(x, rng, _)| {
            let mut out = Vec::with_capacity(per_chain);
            for _ in 0..per_chain {
                for _ in 0..opts.thin {
                    metropolis_sweep(net, fields, x, alphabet, None, rng);
                }
                out.push(x.clone());
            }
            out
        })
        .collect();
    let mut written = 0usize;
    'outer: for round in 0..per_chain {
        for chain in &collected {
            if written == m {
                break 'outer;
            }
            let cfg = &chain[round];
            for i in 0..n {
                states[i * m + written] = cfg[i];
                kept_series[i].push(cfg[i] as f64);
            }
            written += 1;
        }
    }
    let ess: Vec<f64> = (0..n)
        .map(|i| effective_sample_size(&kept_series[i]))
        .collect();
    let data = Dataset::new(n, m, states, DataKind::Iid, alphabet).expect("sampled states valid");
    (
        data,
        ChainDiagnostics {
            r_hat,
            ess,
            n_chains: opts.n_chains,
            burn_in: total_sweeps,
            thin: opts.thin,
            converged,
        },
    )
}

/// Weight mean specification for planting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MeanSpec {
    Literal(f64),
    /// `N / 2E` computed from the edge list (one over the mean degree).
    InverseMeanDegree,
}

#[derive(Debug, Error, PartialEq)]
pub enum PlantError {
    #[error("empty edge list cannot define a mean degree")]
    EmptyEdges,
}

/// Draw one standard normal variate (Box-Muller).
pub fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen::<f64>();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Plant i.i.d. normal weights on the given support.
pub fn plant_weights<R: Rng + ?Sized>(
    edges: &[Pair],
    mean_spec: MeanSpec,
    sigma: f64,
    n_nodes: usize,
    rng: &mut R,
) -> Result<WeightedNetwork, PlantError> {
    assert!(sigma >= 0.0);
    let mean = match mean_spec {
        MeanSpec::Literal(m) => m,
        MeanSpec::InverseMeanDegree => {
            if edges.is_empty() {
                return Err(PlantError::EmptyEdges);
            }
            n_nodes as f64 / (2.0 * edges.len() as f64)
        }
    };
    let mut net = WeightedNetwork::new(n_nodes, 1e-8, 1.0);
    for &(i, j) in edges {
        let w = mean + sigma * normal(rng);
        net.set_entry_target(i, j, WeightTarget::NewValue(w))
            .expect("valid planted edge");
    }
    Ok(net)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitSpec {
    Random,
    AllUp,
}

#[derive(Debug, Clone)]
pub struct PerturbSpec {
    /// Relaxation sweeps before each measurement phase.
    pub t_relax: usize,
    /// Measurement sweeps per phase.
    pub t_avg: usize,
    /// Measurement blocks for standard errors.
    pub n_blocks: usize,
    pub init: InitSpec,
    pub alphabet: Alphabet,
}

impl Default for PerturbSpec {
    fn default() -> Self {
        Self {
            t_relax: 1000,
            t_avg: 2000,
            n_blocks: 10,
            init: InitSpec::Random,
            alphabet: Alphabet::Binary,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PerturbationResult {
    pub node_j: usize,
    /// Expected number of additional nodes lost after clamping `j` down.
    pub z_value: f64,
    pub mc_stderr: f64,
    pub marginals_before: Vec<f64>,
    pub marginals_after: Vec<f64>,
    /// Set when the within-run block diagnostic suggests poor equilibration.
    pub flagged: bool,
}

/// Time-averaged marginals over `t_avg` Glauber sweeps, split into blocks.
/// Returns per-node means and per-block values of `sum_{i != skip} xbar_i / 2`.
fn measure_phase<R: Rng + ?Sized>(
    net: &WeightedNetwork,
    fields: &NodeFields,
    x: &mut [i8],
    spec: &PerturbSpec,
    skip: usize,
    clamped: Option<usize>,
    rng: &mut R,
) -> (Vec<f64>, Vec<f64>) {
    let n = x.len();
    let block_len = (spec.t_avg / spec.n_blocks).max(1);
    let mut marginals = vec![0.0; n];
    let mut block_scores = Vec::with_capacity(spec.n_blocks);
    for _ in 0..spec.n_blocks {
        let mut block_sum = vec![0.0; n];
        for _ in 0..block_len {
            glauber_sweep(net, fields, x, spec.alphabet, clamped, rng);
            for i in 0..n {
                block_sum[i] += x[i] as f64;
            }
        }
        let mut score = 0.0;
        for i in 0..n {
            let mean = block_sum[i] / block_len as f64;
            marginals[i] += mean;
            if i != skip {
                score += mean;
            }
        }
        block_scores.push(0.5 * score);
    }
    for v in marginals.iter_mut() {
        *v /= spec.n_blocks as f64;
    }
    (marginals, block_scores)
}

fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Relax into a macrostate, measure marginals, clamp node `j` down, continue
/// the dynamics from there, measure again, and report the expected node loss
/// `z = (1/2) sum_{i != j} (xbar_i - xbar'_i)` with its Monte Carlo error.
pub fn perturb_keystone(
    net: &WeightedNetwork,
    fields: &NodeFields,
    j: usize,
    spec: &PerturbSpec,
    seed: u64,
) -> PerturbationResult {
    let n = net.n_nodes();
    assert!(j < n, "invalid node");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = match spec.init {
        InitSpec::Random => random_config(n, spec.alphabet, &mut rng),
        InitSpec::AllUp => vec![1i8; n],
    };
    // Phase 1: free relaxation into a macrostate.
    for _ in 0..spec.t_relax {
        glauber_sweep(net, fields, &mut x, spec.alphabet, None, &mut rng);
    }
    let (before, blocks_before) = measure_phase(net, fields, &mut x, spec, j, None, &mut rng);
    // Phase 2: clamp x_j = -1 and let the dynamics potentially escape.
    x[j] = -1;
    for _ in 0..spec.t_relax {
        glauber_sweep(net, fields, &mut x, spec.alphabet, Some(j), &mut rng);
    }
    let (after, blocks_after) = measure_phase(net, fields, &mut x, spec, j, Some(j), &mut rng);

    let (mb, se_b) = mean_and_se(&blocks_before);
    let (ma, se_a) = mean_and_se(&blocks_after);
    let z = mb - ma;
    let stderr = (se_b * se_b + se_a * se_a).sqrt();
    // Crude equilibration check: disagreement between block halves.
    let flagged = [&blocks_before, &blocks_after].iter().any(|blocks| {
        let half = blocks.len() / 2;
        if half < 2 {
            return true;
        }
        let (m1, s1) = mean_and_se(&blocks[..half]);
        let (m2, s2) = mean_and_se(&blocks[half..]);
        let s = (s1 * s1 + s2 * s2).sqrt();
        s.is_finite() && (m1 - m2).abs() > 5.0 * s.max(1e-12)
    });
    PerturbationResult {
        node_j: j,
        z_value: z,
        mc_stderr: stderr,
        marginals_before: before,
        marginals_after: after,
        flagged,
    }
}

/// Repeat the single-node perturbation over uniformly sampled nodes with
/// fresh random macrostates; rows feed a histogram of `z`.
pub fn keystone_scan(
    net: &WeightedNetwork,
    fields: &NodeFields,
    n_nodes_sampled: usize,
    spec: &PerturbSpec,
    seed: u64,
) -> Vec<PerturbationResult> {
    let n = net.n_nodes();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks: Vec<(usize, u64)> = (0..n_nodes_sampled)
        .map(|k| (rng.gen_range(0..n), seed.wrapping_add(1 + k as u64)))
        .collect();
    picks
        .into_par_iter()
        .map(|(j, s)| perturb_keystone(net, fields, j, spec, s))
        .collect()
}
