//! Closed-form negative log prior (description length) terms for the weights,
//! their shared categories, and the node fields.
//!
//! All combinatorial factors go through log-gamma; nothing here computes a
//! factorial directly. Small exponents (`lambda * delta` down to 1e-8) are
//! handled through `exp_m1`/`ln_1p` so the default grid spacing does not
//! underflow.

use statrs::function::gamma::ln_gamma;
use thiserror::Error;

use crate::graph::{snap_to_grid, NodeFields, WeightedNetwork};

/// Hyperparameters of the quantized priors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriorHyper {
    /// Grid spacing for weight category values.
    pub delta: f64,
    /// Laplace scale for weight category values.
    pub lambda: f64,
    /// Grid spacing for node-field category values.
    pub delta_theta: f64,
    /// Laplace scale for node-field category values.
    pub lambda_theta: f64,
}

impl Default for PriorHyper {
    fn default() -> Self {
        Self {
            delta: 1e-8,
            lambda: 1.0,
            delta_theta: 1e-8,
            lambda_theta: 1.0,
        }
    }
}

impl PriorHyper {
    pub fn validate(&self) {
        assert!(
            self.delta > 0.0 && self.lambda > 0.0 && self.delta_theta > 0.0 && self.lambda_theta > 0.0,
            "prior hyperparameters must be strictly positive"
        );
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum PriorError {
    #[error("category count must be >= 1 (index {0})")]
    EmptyCategory(usize),
    #[error("weight category value must be nonzero")]
    ZeroValue,
    #[error("category value {0} is off the quantization grid")]
    OffGrid(f64),
    #[error("counts/values length mismatch: {counts} vs {values}")]
    LengthMismatch { counts: usize, values: usize },
    #[error("counts sum to {got}, expected {expected}")]
    CountSum { got: usize, expected: usize },
    #[error("more categories ({k}) than members ({e})")]
    TooManyCategories { k: usize, e: usize },
    #[error("duplicate category value {0}")]
    DuplicateValue(f64),
}

#[inline]
pub fn ln_factorial(n: usize) -> f64 {
    ln_gamma(n as f64 + 1.0)
}

/// `ln C(n, k)` with the conventions `C(n, 0) = C(n, n) = 1` for any `n`
/// (including `C(-1, -1) = 1`). Out-of-range pairs panic.
pub fn ln_binomial(n: i64, k: i64) -> f64 {
    if k == 0 || k == n {
        return 0.0;
    }
    assert!(
        n >= 0 && (0..=n).contains(&k),
        "ln_binomial({n}, {k}) undefined"
    );
    ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
}

/// `ln(e^x - 1)`, accurate for small `x`.
#[inline]
pub fn ln_expm1(x: f64) -> f64 {
    x.exp_m1().ln()
}

/// `ln(1 - e^{-x})`, accurate for small `x`.
#[inline]
pub fn ln_one_minus_exp_neg(x: f64) -> f64 {
    (-(-x).exp_m1()).ln()
}

/// Number of unordered node pairs.
#[inline]
pub fn n_pairs(n_nodes: usize) -> u64 {
    let n = n_nodes as u64;
    n * (n - 1) / 2
}

// Grid membership is checked with a small tolerance: exactly representable
// inputs like 0.5 sit ~1 ulp away from their snapped image on a 1e-8 grid.
fn on_grid(w: f64, delta: f64) -> bool {
    (w - snap_to_grid(w, delta)).abs() <= 1e-6 * delta
}

/// Information content (nats) of one nonzero grid value under the quantized
/// Laplace mass: `lambda |w| - ln(e^{lambda delta} - 1) + ln 2`.
///
/// Returns infinity for `w = 0` or off-grid values, which are excluded from
/// the support.
pub fn qlaplace_neglogmass(w: f64, lambda: f64, delta: f64) -> f64 {
    if w == 0.0 || !on_grid(w, delta) {
        return f64::INFINITY;
    }
    lambda * w.abs() - ln_expm1(lambda * delta) + std::f64::consts::LN_2
}

/// Negative log prior of the weighted adjacency structure: uniform sparse
/// support, uniform edge count, categorized weights with nonzero counts, and
/// quantized-Laplace category values.
pub fn neglog_prior_weights(
    e: usize,
    counts: &[usize],
    values: &[f64],
    n_nodes: usize,
    hyper: &PriorHyper,
) -> Result<f64, PriorError> {
    if counts.len() != values.len() {
        return Err(PriorError::LengthMismatch {
            counts: counts.len(),
            values: values.len(),
        });
    }
    let k = counts.len();
    if k > e {
        return Err(PriorError::TooManyCategories { k, e });
    }
    let mut sum = 0usize;
    let mut sum_ln_fact_m = 0.0;
    let mut sum_abs_z = 0.0;
    for (idx, (&m, &z)) in counts.iter().zip(values).enumerate() {
        if m == 0 {
            return Err(PriorError::EmptyCategory(idx));
        }
        if z == 0.0 {
            return Err(PriorError::ZeroValue);
        }
        if !on_grid(z, hyper.delta) {
            return Err(PriorError::OffGrid(z));
        }
        if values[..idx].contains(&z) {
            return Err(PriorError::DuplicateValue(z));
        }
        sum += m;
        sum_ln_fact_m += ln_factorial(m);
        sum_abs_z += z.abs();
    }
    if sum != e {
        return Err(PriorError::CountSum { got: sum, expected: e });
    }
    Ok(weight_prior_nats(
        e,
        k,
        sum_ln_fact_m,
        sum_abs_z,
        n_nodes,
        hyper,
    ))
}

/// The assembled weight-prior value from summary statistics. Callers are
/// responsible for the validity of the summaries.
#[inline]
pub fn weight_prior_nats(
    e: usize,
    k: usize,
    sum_ln_fact_m: f64,
    sum_abs_z: f64,
    n_nodes: usize,
    hyper: &PriorHyper,
) -> f64 {
    let np = n_pairs(n_nodes) as i64;
    -sum_ln_fact_m
        + ln_factorial(e)
        + ln_binomial(e as i64 - 1, k as i64 - 1)
        + hyper.lambda * sum_abs_z
        - k as f64 * ln_expm1(hyper.lambda * hyper.delta)
        + k as f64 * std::f64::consts::LN_2
        + (e.max(1) as f64).ln()
        + ln_binomial(np, e as i64)
        + ((np + 1) as f64).ln()
}

/// Negative log prior of the node fields: categorized values with a
/// quantized-Laplace mass that admits zero.
pub fn neglog_prior_theta(
    n_nodes: usize,
    counts: &[usize],
    values: &[f64],
    hyper: &PriorHyper,
) -> Result<f64, PriorError> {
    if counts.len() != values.len() {
        return Err(PriorError::LengthMismatch {
            counts: counts.len(),
            values: values.len(),
        });
    }
    let mut sum = 0usize;
    let mut sum_ln_fact_n = 0.0;
    let mut sum_abs_u = 0.0;
    let mut has_zero = false;
    for (idx, (&c, &u)) in counts.iter().zip(values).enumerate() {
        if c == 0 {
            return Err(PriorError::EmptyCategory(idx));
        }
        if !on_grid(u, hyper.delta_theta) {
            return Err(PriorError::OffGrid(u));
        }
        if values[..idx].contains(&u) {
            return Err(PriorError::DuplicateValue(u));
        }
        has_zero |= u == 0.0;
        sum += c;
        sum_ln_fact_n += ln_factorial(c);
        sum_abs_u += u.abs();
    }
    if sum != n_nodes {
        return Err(PriorError::CountSum {
            got: sum,
            expected: n_nodes,
        });
    }
    Ok(theta_prior_nats(
        n_nodes,
        counts.len(),
        sum_ln_fact_n,
        sum_abs_u,
        has_zero,
        hyper,
    ))
}

/// The node-field prior value from summary statistics.
#[inline]
pub fn theta_prior_nats(
    n_nodes: usize,
    k: usize,
    sum_ln_fact_n: f64,
    sum_abs_u: f64,
    has_zero: bool,
    hyper: &PriorHyper,
) -> f64 {
    let ld = hyper.lambda_theta * hyper.delta_theta;
    let zero = if has_zero { 1.0 } else { 0.0 };
    -sum_ln_fact_n
        + ln_factorial(n_nodes)
        + ln_binomial(n_nodes as i64 - 1, k as i64 - 1)
        + (n_nodes as f64).ln()
        + hyper.lambda_theta * sum_abs_u
        - (k as f64 - zero) * ld.sinh().ln()
        - zero * ln_one_minus_exp_neg(ld)
}

/// Running summary of the weight-prior arguments, supporting O(1) previews of
/// single-entry changes. Category identity here is only (count, value).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightPriorState {
    pub e: usize,
    pub k: usize,
    pub sum_ln_fact_m: f64,
    pub sum_abs_z: f64,
}

impl WeightPriorState {
    pub fn of(net: &WeightedNetwork) -> Self {
        let cats = net.categories();
        let mut s = Self {
            e: net.n_edges(),
            k: cats.len(),
            sum_ln_fact_m: 0.0,
            sum_abs_z: 0.0,
        };
        for slot in 0..cats.len() {
            s.sum_ln_fact_m += ln_factorial(cats.count(slot));
            s.sum_abs_z += cats.value(slot).abs();
        }
        s
    }

    pub fn nats(&self, n_nodes: usize, hyper: &PriorHyper) -> f64 {
        weight_prior_nats(self.e, self.k, self.sum_ln_fact_m, self.sum_abs_z, n_nodes, hyper)
    }

    /// Remove one member from a category that currently has `count` members
    /// and value `value`; deletes the category when it empties.
    pub fn remove_member(&mut self, count: usize, value: f64) {
        debug_assert!(count >= 1);
        self.e -= 1;
        self.sum_ln_fact_m -= (count as f64).ln();
        if count == 1 {
            self.k -= 1;
            self.sum_abs_z -= value.abs();
        }
    }

    /// Add one member to a category that currently has `count` members.
    pub fn add_member(&mut self, count: usize) {
        self.e += 1;
        self.sum_ln_fact_m += (count as f64 + 1.0).ln();
    }

    /// Add a fresh single-member category at `value`.
    pub fn add_category(&mut self, value: f64) {
        debug_assert!(value != 0.0);
        self.e += 1;
        self.k += 1;
        self.sum_abs_z += value.abs();
    }
}

/// Running summary of the node-field prior arguments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaPriorState {
    pub k: usize,
    pub sum_ln_fact_n: f64,
    pub sum_abs_u: f64,
    pub has_zero: bool,
}

impl ThetaPriorState {
    pub fn of(fields: &NodeFields) -> Self {
        let mut s = Self {
            k: fields.n_categories(),
            sum_ln_fact_n: 0.0,
            sum_abs_u: 0.0,
            has_zero: false,
        };
        for slot in 0..fields.n_categories() {
            s.sum_ln_fact_n += ln_factorial(fields.count(slot));
            s.sum_abs_u += fields.value(slot).abs();
            s.has_zero |= fields.value(slot) == 0.0;
        }
        s
    }

    pub fn nats(&self, n_nodes: usize, hyper: &PriorHyper) -> f64 {
        theta_prior_nats(n_nodes, self.k, self.sum_ln_fact_n, self.sum_abs_u, self.has_zero, hyper)
    }

    /// Remove one node from a category with `count` members and value `value`.
    pub fn remove_member(&mut self, count: usize, value: f64) {
        debug_assert!(count >= 1);
        self.sum_ln_fact_n -= (count as f64).ln();
        if count == 1 {
            self.k -= 1;
            self.sum_abs_u -= value.abs();
            if value == 0.0 {
                self.has_zero = false;
            }
        }
    }

    pub fn add_member(&mut self, count: usize) {
        self.sum_ln_fact_n += (count as f64 + 1.0).ln();
    }

    pub fn add_category(&mut self, value: f64) {
        self.k += 1;
        self.sum_abs_u += value.abs();
        if value == 0.0 {
            self.has_zero = true;
        }
    }
}

/// Weight-prior value for the network's current categories.
pub fn network_prior_nats(net: &WeightedNetwork, hyper: &PriorHyper) -> f64 {
    WeightPriorState::of(net).nats(net.n_nodes(), hyper)
}

/// Field-prior value for the current node-field categories.
pub fn fields_prior_nats(fields: &NodeFields, hyper: &PriorHyper) -> f64 {
    ThetaPriorState::of(fields).nats(fields.n_nodes(), hyper)
}

/// Total description length of a model state in nats: negative log-likelihood
/// (recomputed from the local-field cache) plus both prior terms.
pub fn description_length(state: &crate::models::ModelState, hyper: &PriorHyper) -> f64 {
    -state.compute_loglik()
        + network_prior_nats(state.net(), hyper)
        + fields_prior_nats(state.fields(), hyper)
}

/// Description length using the running log-likelihood (no cache pass);
/// optimizer hot path.
pub fn description_length_running(state: &crate::models::ModelState, hyper: &PriorHyper) -> f64 {
    -state.loglik()
        + network_prior_nats(state.net(), hyper)
        + fields_prior_nats(state.fields(), hyper)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn qlaplace_direct_value() {
        // lambda = 1, delta = 1, w = 1: -ln[e^{-1}(e - 1)/2]
        let expect = -((-1.0f64).exp() * (1.0f64.exp() - 1.0) / 2.0).ln();
        let got = qlaplace_neglogmass(1.0, 1.0, 1.0);
        assert!((got - expect).abs() < 1e-12, "{got} vs {expect}");
    }

    #[test]
    fn qlaplace_excludes_zero_and_off_grid() {
        assert!(qlaplace_neglogmass(0.0, 1.0, 1.0).is_infinite());
        assert!(qlaplace_neglogmass(0.5001, 1.0, 0.5).is_infinite());
    }

    #[test]
    fn qlaplace_normalizes_on_grid() {
        for &(lambda, delta) in &[(1.0f64, 1.0f64), (2.0, 0.5), (0.3, 0.1)] {
            let mut total = 0.0;
            let cutoff = (40.0 / (lambda * delta)).ceil() as i64;
            for n in 1..=cutoff {
                let w = n as f64 * delta;
                total += 2.0 * (-qlaplace_neglogmass(w, lambda, delta)).exp();
            }
            assert!(
                (total - 1.0).abs() < 1e-12,
                "sum {total} for lambda={lambda}, delta={delta}"
            );
        }
    }

    #[test]
    fn weight_prior_empty_network() {
        let hyper = PriorHyper::default();
        let v = neglog_prior_weights(0, &[], &[], 3, &hyper).unwrap();
        assert!((v - 4.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn weight_prior_single_edge() {
        let hyper = PriorHyper::default();
        let v = neglog_prior_weights(1, &[1], &[0.5], 3, &hyper).unwrap();
        let expect = 0.5 - ln_expm1(1e-8) + 2.0f64.ln() + 3.0f64.ln() + 4.0f64.ln();
        assert!((v - expect).abs() < 1e-9, "{v} vs {expect}");
    }

    #[test]
    fn grouping_beats_singletons() {
        // Four equal weights: one shared category describes them more
        // compactly than one category per edge.
        let hyper = PriorHyper::default();
        let grouped = neglog_prior_weights(4, &[4], &[0.5], 10, &hyper).unwrap();
        // K = E requires distinct values; take four grid values around 0.5.
        let vals = [0.5, 0.5 + 1e-8, 0.5 + 2e-8, 0.5 + 3e-8];
        let split = neglog_prior_weights(4, &[1, 1, 1, 1], &vals, 10, &hyper).unwrap();
        assert!(split > grouped);
    }

    #[test]
    fn weight_prior_errors() {
        let hyper = PriorHyper::default();
        assert!(matches!(
            neglog_prior_weights(2, &[0, 2], &[0.5, 0.7], 5, &hyper),
            Err(PriorError::EmptyCategory(0))
        ));
        assert!(matches!(
            neglog_prior_weights(1, &[1], &[0.0], 5, &hyper),
            Err(PriorError::ZeroValue)
        ));
        assert!(matches!(
            neglog_prior_weights(1, &[1, 1], &[0.5, 0.7], 5, &hyper),
            Err(PriorError::TooManyCategories { .. })
        ));
    }

    #[test]
    fn theta_prior_single_zero_category() {
        let hyper = PriorHyper::default();
        let v = neglog_prior_theta(4, &[4], &[0.0], &hyper).unwrap();
        let expect = 4.0f64.ln() - ln_one_minus_exp_neg(1e-8);
        assert!((v - expect).abs() < 1e-9, "{v} vs {expect}");
    }

    #[test]
    fn theta_equal_beats_distinct() {
        let hyper = PriorHyper::default();
        let equal = neglog_prior_theta(4, &[4], &[0.3], &hyper).unwrap();
        let distinct =
            neglog_prior_theta(4, &[1, 1, 1, 1], &[0.1, 0.2, 0.3, 0.4], &hyper).unwrap();
        assert!(equal < distinct);
    }

    #[test]
    fn theta_singleton_counts_contribute_nothing() {
        // n_k = 1 for every category: the -sum ln n_k! term must vanish.
        let hyper = PriorHyper::default();
        let vals = [0.1, 0.2, 0.3];
        let v = neglog_prior_theta(3, &[1, 1, 1], &vals, &hyper).unwrap();
        let ld = hyper.lambda_theta * hyper.delta_theta;
        let expect = ln_factorial(3) + ln_binomial(2, 2) + 3.0f64.ln()
            + hyper.lambda_theta * 0.6
            - 3.0 * ld.sinh().ln();
        assert!((v - expect).abs() < 1e-9);
    }

    #[test]
    fn monotone_in_edge_count_when_sparse() {
        let hyper = PriorHyper::default();
        let mut last = f64::NEG_INFINITY;
        for e in 1..=10usize {
            let v = neglog_prior_weights(e, &[e], &[0.5], 20, &hyper).unwrap();
            assert!(v > last, "E={e}: {v} <= {last}");
            last = v;
        }
    }

    #[test]
    fn permutation_invariance() {
        let hyper = PriorHyper::default();
        let a = neglog_prior_weights(6, &[3, 2, 1], &[0.5, -0.25, 1.0], 8, &hyper).unwrap();
        let b = neglog_prior_weights(6, &[1, 3, 2], &[1.0, 0.5, -0.25], 8, &hyper).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn scale_enters_only_through_lambda_term() {
        let hyper = PriorHyper::default();
        let vals = [0.5, -0.25, 1.0];
        let base = neglog_prior_weights(6, &[3, 2, 1], &vals, 8, &hyper).unwrap();
        let c = 3.0;
        let scaled: Vec<f64> = vals.iter().map(|z| z * c).collect();
        let v = neglog_prior_weights(6, &[3, 2, 1], &scaled, 8, &hyper).unwrap();
        let lambda_shift = hyper.lambda * (c - 1.0) * vals.iter().map(|z| z.abs()).sum::<f64>();
        assert!((v - base - lambda_shift).abs() < 1e-9);
    }

    #[test]
    fn binomial_conventions() {
        assert_eq!(ln_binomial(-1, -1), 0.0);
        assert_eq!(ln_binomial(5, 0), 0.0);
        assert!((ln_binomial(5, 2) - 10.0f64.ln()).abs() < 1e-12);
    }
}
