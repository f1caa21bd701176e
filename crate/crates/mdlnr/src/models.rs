//! Generative-model likelihoods: kinetic dynamics and equilibrium
//! pseudolikelihood, each in a binary and a zero-valued variant, with O(M)
//! single-entry deltas and analytic gradients backed by a local-field cache.
//!
//! The cache holds `s_i(m) = sum_j W_ij x_j(m) + theta_i` for every node and
//! sample. Changing one matrix entry or one field touches at most two rows of
//! the cache, which is what makes sweep-style optimizers affordable.

use thiserror::Error;

use crate::graph::{
    Alphabet, DataKind, Dataset, GraphError, NodeFields, Pair, WeightTarget, WeightedNetwork,
};

/// Which likelihood the data are scored under.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dynamics {
    /// Markov chain of synchronous transitions.
    Kinetic,
    /// Independent samples scored by the pseudolikelihood.
    EquilibriumPl,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelKind {
    pub dynamics: Dynamics,
    pub alphabet: Alphabet,
}

impl ModelKind {
    pub const KINETIC: Self = Self {
        dynamics: Dynamics::Kinetic,
        alphabet: Alphabet::Binary,
    };
    pub const KINETIC_ZERO: Self = Self {
        dynamics: Dynamics::Kinetic,
        alphabet: Alphabet::ZeroValued,
    };
    pub const EQUILIBRIUM: Self = Self {
        dynamics: Dynamics::EquilibriumPl,
        alphabet: Alphabet::Binary,
    };
    pub const EQUILIBRIUM_ZERO: Self = Self {
        dynamics: Dynamics::EquilibriumPl,
        alphabet: Alphabet::ZeroValued,
    };
}

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("data alphabet {data:?} incompatible with model alphabet {model:?}")]
    AlphabetMismatch { data: Alphabet, model: Alphabet },
    #[error("kinetic model requires markov data")]
    KindMismatch,
    #[error("dimension mismatch: data has {data} nodes, network {net}")]
    DimensionMismatch { data: usize, net: usize },
    #[error("term mask length {got}, expected {expected}")]
    MaskLength { got: usize, expected: usize },
}

/// `ln(2 cosh s)` without overflow.
#[inline(always)]
pub fn ln_2cosh(s: f64) -> f64 {
    let a = s.abs();
    a + (-2.0 * a).exp().ln_1p()
}

/// `ln(1 + 2 cosh s)` without overflow.
#[inline(always)]
pub fn ln_1p2cosh(s: f64) -> f64 {
    let a = s.abs();
    a + ((-a).exp() + (-2.0 * a).exp()).ln_1p()
}

/// Conditional mean of a three-state spin with local field `s`.
#[inline(always)]
pub fn mean_zero_valued(s: f64) -> f64 {
    let a = s.abs();
    let g = (-(-2.0 * a).exp_m1()) / ((-a).exp() + 1.0 + (-2.0 * a).exp());
    if s < 0.0 {
        -g
    } else {
        g
    }
}

#[inline(always)]
fn log_z(s: f64, alphabet: Alphabet) -> f64 {
    match alphabet {
        Alphabet::Binary => ln_2cosh(s),
        Alphabet::ZeroValued => ln_1p2cosh(s),
    }
}

#[inline(always)]
fn cond_mean(s: f64, alphabet: Alphabet) -> f64 {
    match alphabet {
        Alphabet::Binary => s.tanh(),
        Alphabet::ZeroValued => mean_zero_valued(s),
    }
}

/// Bundle of data, network, fields and the local-field cache.
#[derive(Debug, Clone)]
pub struct ModelState {
    data: Dataset,
    net: WeightedNetwork,
    fields: NodeFields,
    kind: ModelKind,
    /// `s_i(m)`, row-major N x M.
    local: Vec<f64>,
    /// Running log-likelihood over the active terms; kept in sync by the
    /// `apply_*` operations and refreshed by [`ModelState::recompute`].
    loglik: f64,
    /// Optional per-term activity mask (length [`ModelState::n_terms`]).
    term_mask: Option<Vec<bool>>,
}

impl ModelState {
    pub fn new(
        data: Dataset,
        net: WeightedNetwork,
        fields: NodeFields,
        kind: ModelKind,
    ) -> Result<Self, ModelError> {
        if data.n_nodes() != net.n_nodes() || fields.n_nodes() != net.n_nodes() {
            return Err(ModelError::DimensionMismatch {
                data: data.n_nodes(),
                net: net.n_nodes(),
            });
        }
        if kind.alphabet == Alphabet::Binary && data.alphabet() == Alphabet::ZeroValued {
            return Err(ModelError::AlphabetMismatch {
                data: data.alphabet(),
                model: kind.alphabet,
            });
        }
        if kind.dynamics == Dynamics::Kinetic && data.kind() != DataKind::Markov {
            return Err(ModelError::KindMismatch);
        }
        let mut state = Self {
            local: vec![0.0; data.n_nodes() * data.n_samples()],
            data,
            net,
            fields,
            kind,
            loglik: 0.0,
            term_mask: None,
        };
        state.recompute();
        Ok(state)
    }

    /// Build an empty-network state for a reconstruction run.
    pub fn empty(
        data: Dataset,
        kind: ModelKind,
        delta: f64,
        lambda: f64,
        delta_theta: f64,
        lambda_theta: f64,
    ) -> Result<Self, ModelError> {
        let n = data.n_nodes();
        let net = WeightedNetwork::new(n, delta, lambda);
        let fields = NodeFields::new_zero(n, delta_theta, lambda_theta);
        Self::new(data, net, fields, kind)
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }

    pub fn net(&self) -> &WeightedNetwork {
        &self.net
    }

    pub fn fields(&self) -> &NodeFields {
        &self.fields
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn n_nodes(&self) -> usize {
        self.data.n_nodes()
    }

    /// Number of likelihood terms: samples for the equilibrium model,
    /// transitions for the kinetic one.
    pub fn n_terms(&self) -> usize {
        match self.kind.dynamics {
            Dynamics::Kinetic => self.data.n_samples().saturating_sub(1),
            Dynamics::EquilibriumPl => self.data.n_samples(),
        }
    }

    pub fn loglik(&self) -> f64 {
        self.loglik
    }

    pub fn term_mask(&self) -> Option<&[bool]> {
        self.term_mask.as_deref()
    }

    /// Restrict the likelihood to the terms where `mask` is true.
    pub fn set_term_mask(&mut self, mask: Option<Vec<bool>>) -> Result<(), ModelError> {
        if let Some(m) = &mask {
            if m.len() != self.n_terms() {
                return Err(ModelError::MaskLength {
                    got: m.len(),
                    expected: self.n_terms(),
                });
            }
        }
        self.term_mask = mask;
        self.loglik = self.compute_loglik();
        Ok(())
    }

    pub fn local_field(&self, i: usize, m: usize) -> f64 {
        self.local[i * self.data.n_samples() + m]
    }

    fn local_row(&self, i: usize) -> &[f64] {
        let m = self.data.n_samples();
        &self.local[i * m..(i + 1) * m]
    }

    /// Rebuild the local-field cache and the running log-likelihood from
    /// scratch.
    pub fn recompute(&mut self) {
        let n = self.data.n_nodes();
        let m = self.data.n_samples();
        for i in 0..n {
            let theta = self.fields.theta(i);
            let row = &mut self.local[i * m..(i + 1) * m];
            row.fill(theta);
        }
        for ((a, b), w) in self.net.edges() {
            for (x, y) in [(a, b), (b, a)] {
                let src = self.data.row(y);
                let dst = &mut self.local[x * m..(x + 1) * m];
                for t in 0..m {
                    dst[t] += w * src[t] as f64;
                }
            }
        }
        self.loglik = self.compute_loglik();
    }

    /// Log-likelihood over the active terms, evaluated from the cache.
    pub fn compute_loglik(&self) -> f64 {
        match &self.term_mask {
            None => self.loglik_full(),
            Some(mask) => self.loglik_masked(mask),
        }
    }

    /// Log-likelihood over an arbitrary term subset (ignores the fit mask);
    /// used for held-out evaluation.
    pub fn loglik_over(&self, mask: &[bool]) -> f64 {
        assert_eq!(mask.len(), self.n_terms());
        self.loglik_masked(mask)
    }

    fn loglik_full(&self) -> f64 {
        let n = self.data.n_nodes();
        let alphabet = self.kind.alphabet;
        let mut total = 0.0;
        match self.kind.dynamics {
            Dynamics::EquilibriumPl => {
                for i in 0..n {
                    let x = self.data.row(i);
                    let s = self.local_row(i);
                    let mut acc = 0.0;
                    for m in 0..x.len() {
                        acc += x[m] as f64 * s[m] - log_z(s[m], alphabet);
                    }
                    total += acc;
                }
            }
            Dynamics::Kinetic => {
                let t_max = self.n_terms();
                for i in 0..n {
                    let x = self.data.row(i);
                    let s = self.local_row(i);
                    let mut acc = 0.0;
                    for t in 0..t_max {
                        acc += x[t + 1] as f64 * s[t] - log_z(s[t], alphabet);
                    }
                    total += acc;
                }
            }
        }
        total
    }

    fn loglik_masked(&self, mask: &[bool]) -> f64 {
        let n = self.data.n_nodes();
        let alphabet = self.kind.alphabet;
        let mut total = 0.0;
        match self.kind.dynamics {
            Dynamics::EquilibriumPl => {
                for i in 0..n {
                    let x = self.data.row(i);
                    let s = self.local_row(i);
                    let mut acc = 0.0;
                    for m in 0..x.len() {
                        if mask[m] {
                            acc += x[m] as f64 * s[m] - log_z(s[m], alphabet);
                        }
                    }
                    total += acc;
                }
            }
            Dynamics::Kinetic => {
                for i in 0..n {
                    let x = self.data.row(i);
                    let s = self.local_row(i);
                    let mut acc = 0.0;
                    for t in 0..mask.len() {
                        if mask[t] {
                            acc += x[t + 1] as f64 * s[t] - log_z(s[t], alphabet);
                        }
                    }
                    total += acc;
                }
            }
        }
        total
    }

    /// Log-likelihood change from shifting row `i` by `shift[m] * unit`, where
    /// `shift` is given implicitly as `coef * x_partner` pairs.
    #[inline]
    fn row_delta(&self, i: usize, partners: &[(usize, f64)]) -> f64 {
        let alphabet = self.kind.alphabet;
        let x = self.data.row(i);
        let s = self.local_row(i);
        let mask = self.term_mask.as_deref();
        let mut acc = 0.0;
        match self.kind.dynamics {
            Dynamics::EquilibriumPl => {
                let m_max = x.len();
                for m in 0..m_max {
                    if let Some(mk) = mask {
                        if !mk[m] {
                            continue;
                        }
                    }
                    let mut ds = 0.0;
                    for &(p, c) in partners {
                        ds += c * self.data.get(p, m) as f64;
                    }
                    if ds != 0.0 {
                        acc += x[m] as f64 * ds - log_z(s[m] + ds, alphabet)
                            + log_z(s[m], alphabet);
                    }
                }
            }
            Dynamics::Kinetic => {
                let t_max = self.n_terms();
                for t in 0..t_max {
                    if let Some(mk) = mask {
                        if !mk[t] {
                            continue;
                        }
                    }
                    let mut ds = 0.0;
                    for &(p, c) in partners {
                        ds += c * self.data.get(p, t) as f64;
                    }
                    if ds != 0.0 {
                        acc += x[t + 1] as f64 * ds - log_z(s[t] + ds, alphabet)
                            + log_z(s[t], alphabet);
                    }
                }
            }
        }
        acc
    }

    /// Log-likelihood change from shifting the field of node `i` by `dv`.
    fn row_delta_const(&self, i: usize, dv: f64) -> f64 {
        if dv == 0.0 {
            return 0.0;
        }
        let alphabet = self.kind.alphabet;
        let x = self.data.row(i);
        let s = self.local_row(i);
        let mask = self.term_mask.as_deref();
        let mut acc = 0.0;
        match self.kind.dynamics {
            Dynamics::EquilibriumPl => {
                for m in 0..x.len() {
                    if let Some(mk) = mask {
                        if !mk[m] {
                            continue;
                        }
                    }
                    acc += x[m] as f64 * dv - log_z(s[m] + dv, alphabet) + log_z(s[m], alphabet);
                }
            }
            Dynamics::Kinetic => {
                for t in 0..self.n_terms() {
                    if let Some(mk) = mask {
                        if !mk[t] {
                            continue;
                        }
                    }
                    acc += x[t + 1] as f64 * dv - log_z(s[t] + dv, alphabet)
                        + log_z(s[t], alphabet);
                }
            }
        }
        acc
    }

    /// `loglik(W with W_ij = w_new) - loglik(W)`, in O(M).
    pub fn delta_edge(&self, i: usize, j: usize, w_new: f64) -> f64 {
        debug_assert_ne!(i, j);
        let d = w_new - self.net.weight(i, j);
        if d == 0.0 {
            return 0.0;
        }
        self.row_delta(i, &[(j, d)]) + self.row_delta(j, &[(i, d)])
    }

    /// `loglik(theta with theta_i = v_new) - loglik(theta)`, in O(M).
    pub fn delta_theta(&self, i: usize, v_new: f64) -> f64 {
        self.row_delta_const(i, v_new - self.fields.theta(i))
    }

    /// Joint log-likelihood change of several simultaneous entry assignments.
    /// Pairs must be distinct; shared endpoints are handled exactly.
    pub fn delta_multi(&self, changes: &[(usize, usize, f64)]) -> f64 {
        let mut by_node: Vec<(usize, Vec<(usize, f64)>)> = Vec::new();
        for (idx, &(a, b, w_new)) in changes.iter().enumerate() {
            debug_assert_ne!(a, b);
            debug_assert!(
                changes[..idx]
                    .iter()
                    .all(|&(x, y, _)| crate::graph::ordered(x, y) != crate::graph::ordered(a, b)),
                "duplicate pair in delta_multi"
            );
            let d = w_new - self.net.weight(a, b);
            if d == 0.0 {
                continue;
            }
            for (node, partner) in [(a, b), (b, a)] {
                match by_node.iter_mut().find(|(n, _)| *n == node) {
                    Some((_, v)) => v.push((partner, d)),
                    None => by_node.push((node, vec![(partner, d)])),
                }
            }
        }
        by_node
            .iter()
            .map(|(node, partners)| self.row_delta(*node, partners))
            .sum()
    }

    /// Gradient of the log-likelihood with respect to `W_ij` at the current
    /// state.
    pub fn grad_edge(&self, i: usize, j: usize) -> f64 {
        self.grad_edge_shifted(i, j, 0.0)
    }

    /// Gradient with respect to `W_ij` evaluated as if the entry held `w`.
    pub fn grad_edge_at(&self, i: usize, j: usize, w: f64) -> f64 {
        self.grad_edge_shifted(i, j, w - self.net.weight(i, j))
    }

    fn grad_edge_shifted(&self, i: usize, j: usize, shift: f64) -> f64 {
        debug_assert_ne!(i, j);
        self.row_grad(i, j, shift) + self.row_grad(j, i, shift)
    }

    /// d/dw of node i's likelihood terms when `s_i` gains `w * x_p`.
    fn row_grad(&self, i: usize, p: usize, shift: f64) -> f64 {
        let alphabet = self.kind.alphabet;
        let x = self.data.row(i);
        let xp = self.data.row(p);
        let s = self.local_row(i);
        let mask = self.term_mask.as_deref();
        let mut acc = 0.0;
        match self.kind.dynamics {
            Dynamics::EquilibriumPl => {
                for m in 0..x.len() {
                    if let Some(mk) = mask {
                        if !mk[m] {
                            continue;
                        }
                    }
                    let xv = xp[m] as f64;
                    if xv != 0.0 {
                        acc += xv * (x[m] as f64 - cond_mean(s[m] + shift * xv, alphabet));
                    }
                }
            }
            Dynamics::Kinetic => {
                for t in 0..self.n_terms() {
                    if let Some(mk) = mask {
                        if !mk[t] {
                            continue;
                        }
                    }
                    let xv = xp[t] as f64;
                    if xv != 0.0 {
                        acc += xv * (x[t + 1] as f64 - cond_mean(s[t] + shift * xv, alphabet));
                    }
                }
            }
        }
        acc
    }

    /// Gradient of the log-likelihood with respect to `theta_i`.
    pub fn grad_theta(&self, i: usize) -> f64 {
        self.grad_theta_shifted(i, 0.0)
    }

    pub fn grad_theta_at(&self, i: usize, v: f64) -> f64 {
        self.grad_theta_shifted(i, v - self.fields.theta(i))
    }

    fn grad_theta_shifted(&self, i: usize, shift: f64) -> f64 {
        let alphabet = self.kind.alphabet;
        let x = self.data.row(i);
        let s = self.local_row(i);
        let mask = self.term_mask.as_deref();
        let mut acc = 0.0;
        match self.kind.dynamics {
            Dynamics::EquilibriumPl => {
                for m in 0..x.len() {
                    if let Some(mk) = mask {
                        if !mk[m] {
                            continue;
                        }
                    }
                    acc += x[m] as f64 - cond_mean(s[m] + shift, alphabet);
                }
            }
            Dynamics::Kinetic => {
                for t in 0..self.n_terms() {
                    if let Some(mk) = mask {
                        if !mk[t] {
                            continue;
                        }
                    }
                    acc += x[t + 1] as f64 - cond_mean(s[t] + shift, alphabet);
                }
            }
        }
        acc
    }

    fn shift_row(&mut self, node: usize, partner: usize, d: f64) {
        let m = self.data.n_samples();
        let (local, data) = (&mut self.local, &self.data);
        let src = data.row(partner);
        let dst = &mut local[node * m..(node + 1) * m];
        for t in 0..m {
            dst[t] += d * src[t] as f64;
        }
    }

    /// Assign entry `(i, j)` and keep the cache and running log-likelihood
    /// consistent. Returns the previous weight.
    pub fn apply_edge(
        &mut self,
        i: usize,
        j: usize,
        target: WeightTarget,
    ) -> Result<f64, GraphError> {
        let old = self.net.set_entry_target(i, j, target)?;
        let new = self.net.weight(i, j);
        let d = new - old;
        if d != 0.0 {
            self.loglik += self.row_delta(i, &[(j, d)]) + self.row_delta(j, &[(i, d)]);
            self.shift_row(i, j, d);
            self.shift_row(j, i, d);
        }
        Ok(old)
    }

    /// Relocate the entry at `(i, j)` to the empty position `(i, u)` keeping
    /// value and category (used by edge moves and swaps).
    pub fn apply_move(&mut self, i: usize, j: usize, u: usize) -> Result<(), GraphError> {
        let w = self.net.weight(i, j);
        debug_assert!(w != 0.0 && self.net.weight(i, u) == 0.0);
        self.loglik += self.delta_multi(&[(i, j, 0.0), (i, u, w)]);
        self.net.move_entry(i, j, u)?;
        self.shift_row(j, i, -w);
        self.shift_row(u, i, w);
        let m = self.data.n_samples();
        for t in 0..m {
            let dj = self.data.get(j, t) as f64;
            let du = self.data.get(u, t) as f64;
            self.local[i * m + t] += w * (du - dj);
        }
        Ok(())
    }

    /// Set node `i`'s field, creating the category when needed. Returns the
    /// previous value.
    pub fn apply_theta(&mut self, i: usize, value: f64, create: bool) -> Result<f64, GraphError> {
        let snapped = crate::graph::snap_to_grid(value, self.fields.delta());
        let old = self.fields.theta(i);
        let d = snapped - old;
        if d != 0.0 {
            self.loglik += self.row_delta_const(i, d);
        }
        self.fields.set_theta(i, snapped, create)?;
        if d != 0.0 {
            let m = self.data.n_samples();
            for t in 0..m {
                self.local[i * m + t] += d;
            }
        }
        Ok(old)
    }

    /// Move the whole weight category at `old_value` to `new_value`.
    pub fn apply_category_value(
        &mut self,
        old_value: f64,
        new_value: f64,
    ) -> Result<(), GraphError> {
        let snapped = crate::graph::snap_to_grid(new_value, self.net.grid_delta());
        if snapped == old_value {
            return Ok(());
        }
        let slot = self
            .net
            .categories()
            .slot_of_value(old_value)
            .ok_or(GraphError::NoSuchCategory(old_value))?;
        let members: Vec<Pair> = self.net.categories().members(slot).to_vec();
        let shift = self.value_shift(&members);
        let dv = snapped - old_value;
        self.loglik += self.delta_value_shift(&shift, dv);
        self.net.set_category_value(old_value, snapped)?;
        let m = self.data.n_samples();
        for (node, psum) in shift.nodes.iter().zip(&shift.psums) {
            let dst = &mut self.local[node * m..(node + 1) * m];
            for t in 0..m {
                dst[t] += dv * psum[t];
            }
        }
        Ok(())
    }

    /// Move the whole field category at `old_value` to `new_value`.
    pub fn apply_theta_category_value(
        &mut self,
        old_value: f64,
        new_value: f64,
    ) -> Result<(), GraphError> {
        let snapped = crate::graph::snap_to_grid(new_value, self.fields.delta());
        if snapped == old_value {
            return Ok(());
        }
        let slot = self
            .fields
            .slot_of_value(old_value)
            .ok_or(GraphError::NoSuchCategory(old_value))?;
        let nodes: Vec<usize> = self.fields.members(slot).to_vec();
        let dv = snapped - old_value;
        for &i in &nodes {
            self.loglik += self.row_delta_const(i, dv);
        }
        self.fields.set_category_value(old_value, snapped)?;
        let m = self.data.n_samples();
        for &i in &nodes {
            let dst = &mut self.local[i * m..(i + 1) * m];
            for t in 0..m {
                dst[t] += dv;
            }
        }
        Ok(())
    }

    /// Precompute per-node partner sums for a set of pairs that will all be
    /// shifted by the same value delta (bisection over a category value).
    pub fn value_shift(&self, pairs: &[Pair]) -> ValueShift {
        let m = self.data.n_samples();
        let mut nodes: Vec<usize> = Vec::new();
        let mut psums: Vec<Vec<f64>> = Vec::new();
        for &(a, b) in pairs {
            for (node, partner) in [(a, b), (b, a)] {
                let idx = match nodes.iter().position(|&n| n == node) {
                    Some(i) => i,
                    None => {
                        nodes.push(node);
                        psums.push(vec![0.0; m]);
                        nodes.len() - 1
                    }
                };
                let src = self.data.row(partner);
                let dst = &mut psums[idx];
                for t in 0..m {
                    dst[t] += src[t] as f64;
                }
            }
        }
        ValueShift { nodes, psums }
    }

    /// Log-likelihood change when every pair captured in `shift` changes its
    /// value by `dv`.
    pub fn delta_value_shift(&self, shift: &ValueShift, dv: f64) -> f64 {
        if dv == 0.0 {
            return 0.0;
        }
        let alphabet = self.kind.alphabet;
        let mask = self.term_mask.as_deref();
        let mut acc = 0.0;
        for (pos, &i) in shift.nodes.iter().enumerate() {
            let x = self.data.row(i);
            let s = self.local_row(i);
            let psum = &shift.psums[pos];
            match self.kind.dynamics {
                Dynamics::EquilibriumPl => {
                    for m in 0..x.len() {
                        if let Some(mk) = mask {
                            if !mk[m] {
                                continue;
                            }
                        }
                        let ds = dv * psum[m];
                        if ds != 0.0 {
                            acc += x[m] as f64 * ds - log_z(s[m] + ds, alphabet)
                                + log_z(s[m], alphabet);
                        }
                    }
                }
                Dynamics::Kinetic => {
                    for t in 0..self.n_terms() {
                        if let Some(mk) = mask {
                            if !mk[t] {
                                continue;
                            }
                        }
                        let ds = dv * psum[t];
                        if ds != 0.0 {
                            acc += x[t + 1] as f64 * ds - log_z(s[t] + ds, alphabet)
                                + log_z(s[t], alphabet);
                        }
                    }
                }
            }
        }
        acc
    }

    /// Log-likelihood change when every node in `nodes` shifts its field by
    /// `dv` (bisection over a field category value).
    pub fn delta_theta_bulk(&self, nodes: &[usize], dv: f64) -> f64 {
        nodes.iter().map(|&i| self.row_delta_const(i, dv)).sum()
    }

    pub fn set_lambda(&mut self, lambda: f64) {
        self.net.set_lambda(lambda);
    }

    pub fn into_parts(self) -> (WeightedNetwork, NodeFields) {
        (self.net, self.fields)
    }

    /// Verify the cache against a from-scratch recomputation; test hook.
    pub fn validate_cache(&self, tol: f64) {
        let mut fresh = self.clone();
        fresh.recompute();
        for (idx, (&a, &b)) in self.local.iter().zip(&fresh.local).enumerate() {
            let scale = 1.0f64.max(b.abs());
            assert!(
                (a - b).abs() <= tol * scale,
                "cache drift at {idx}: {a} vs {b}"
            );
        }
        let scale = 1.0f64.max(fresh.loglik.abs());
        assert!(
            (self.loglik - fresh.loglik).abs() <= tol * scale,
            "loglik drift: {} vs {}",
            self.loglik,
            fresh.loglik
        );
    }
}

/// Partner-sum rows for a joint value shift (see [`ModelState::value_shift`]).
pub struct ValueShift {
    nodes: Vec<usize>,
    psums: Vec<Vec<f64>>,
}
