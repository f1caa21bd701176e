//! Mutable reconstruction state: sparse symmetric weight matrix, shared weight
//! categories, per-node fields, and observed data.
//!
//! Every nonzero weight is bound to a category holding its exact value, so the
//! matrix entries and the category bookkeeping (values, counts) can never drift
//! apart. Entries are stored once with `i < j`; queries are symmetric.

use std::collections::HashMap;

use thiserror::Error;

/// Canonical unordered pair, always stored as `(min, max)`.
pub type Pair = (usize, usize);

#[inline]
pub fn ordered(i: usize, j: usize) -> Pair {
    if i < j {
        (i, j)
    } else {
        (j, i)
    }
}

/// Snap a value to the quantization grid with spacing `delta`
/// (round-half-to-even).
#[inline]
pub fn snap_to_grid(w: f64, delta: f64) -> f64 {
    delta * (w / delta).round_ties_even()
}

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("self-loop at node {0}")]
    SelfLoop(usize),
    #[error("node {node} out of range for {n_nodes} nodes")]
    NodeOutOfRange { node: usize, n_nodes: usize },
    #[error("weight {0} does not match any existing category")]
    UnknownCategory(f64),
    #[error("category value {0} collides with an existing category")]
    DuplicateCategory(f64),
    #[error("weight category value must be nonzero")]
    ZeroCategory,
    #[error("no category with value {0}")]
    NoSuchCategory(f64),
}

/// Target of an entry assignment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WeightTarget {
    /// Remove the entry.
    Zero,
    /// Assign to the category holding exactly this value.
    Value(f64),
    /// Assign to this value, creating the category if absent. The value is
    /// snapped to the grid first.
    NewValue(f64),
}

#[derive(Debug, Clone)]
struct Entry {
    weight: f64,
    cat: usize,        // slot id
    member_pos: usize, // position in the slot's member list
    list_pos: usize,   // position in the global edge list
}

#[derive(Debug, Clone)]
struct CatSlot {
    value: f64,
    members: Vec<Pair>,
}

/// The set of distinct nonzero weight values plus per-category edge counts.
///
/// Slots have stable ids while they live; sorted access goes through
/// [`WeightCategories::sorted_values`]. Category identity is by value, which
/// is unique (values are distinct grid points).
#[derive(Debug, Clone)]
pub struct WeightCategories {
    slots: Vec<CatSlot>,
    delta: f64,
    lambda: f64,
}

impl WeightCategories {
    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn set_lambda(&mut self, lambda: f64) {
        assert!(lambda > 0.0);
        self.lambda = lambda;
    }

    pub fn value(&self, slot: usize) -> f64 {
        self.slots[slot].value
    }

    pub fn count(&self, slot: usize) -> usize {
        self.slots[slot].members.len()
    }

    pub fn members(&self, slot: usize) -> &[Pair] {
        &self.slots[slot].members
    }

    pub fn slot_of_value(&self, value: f64) -> Option<usize> {
        self.slots.iter().position(|s| s.value == value)
    }

    /// Category values in increasing order.
    pub fn sorted_values(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.slots.iter().map(|s| s.value).collect();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v
    }

    /// `(value, count)` pairs ordered by increasing value.
    pub fn sorted_value_counts(&self) -> Vec<(f64, usize)> {
        let mut v: Vec<(f64, usize)> = self
            .slots
            .iter()
            .map(|s| (s.value, s.members.len()))
            .collect();
        v.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        v
    }

    pub fn sum_abs_values(&self) -> f64 {
        self.slots.iter().map(|s| s.value.abs()).sum()
    }
}

/// Sparse symmetric weighted network without self-loops.
#[derive(Debug, Clone)]
pub struct WeightedNetwork {
    n_nodes: usize,
    entries: HashMap<Pair, Entry>,
    edge_list: Vec<Pair>,
    adjacency: Vec<Vec<usize>>,
    cats: WeightCategories,
}

impl WeightedNetwork {
    pub fn new(n_nodes: usize, delta: f64, lambda: f64) -> Self {
        assert!(delta > 0.0 && lambda > 0.0);
        Self {
            n_nodes,
            entries: HashMap::new(),
            edge_list: Vec::new(),
            adjacency: vec![Vec::new(); n_nodes],
            cats: WeightCategories {
                slots: Vec::new(),
                delta,
                lambda,
            },
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn n_edges(&self) -> usize {
        self.edge_list.len()
    }

    pub fn categories(&self) -> &WeightCategories {
        &self.cats
    }

    pub fn set_lambda(&mut self, lambda: f64) {
        self.cats.set_lambda(lambda);
    }

    pub fn grid_delta(&self) -> f64 {
        self.cats.delta
    }

    /// Weight of the `(i, j)` entry; symmetric in its arguments, 0 if absent.
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return 0.0;
        }
        self.entries.get(&ordered(i, j)).map_or(0.0, |e| e.weight)
    }

    /// Slot id of the category the `(i, j)` entry belongs to, if present.
    pub fn category_of(&self, i: usize, j: usize) -> Option<usize> {
        self.entries.get(&ordered(i, j)).map(|e| e.cat)
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.adjacency[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adjacency[i].len()
    }

    /// Stored entries in insertion order (deterministic for a given history).
    pub fn edges(&self) -> impl Iterator<Item = (Pair, f64)> + '_ {
        self.edge_list
            .iter()
            .map(move |p| (*p, self.entries[p].weight))
    }

    pub fn edge_at(&self, idx: usize) -> (Pair, f64) {
        let p = self.edge_list[idx];
        (p, self.entries[&p].weight)
    }

    /// Entries sorted by `(i, j)`.
    pub fn sorted_edges(&self) -> Vec<(Pair, f64)> {
        let mut v: Vec<(Pair, f64)> = self.edges().collect();
        v.sort_by_key(|&(p, _)| p);
        v
    }

    /// Support of the binarized adjacency matrix, sorted by `(i, j)`.
    pub fn binarize(&self) -> Vec<Pair> {
        let mut v: Vec<Pair> = self.edge_list.clone();
        v.sort_unstable();
        v
    }

    fn check_pair(&self, i: usize, j: usize) -> Result<Pair, GraphError> {
        if i == j {
            return Err(GraphError::SelfLoop(i));
        }
        for &n in &[i, j] {
            if n >= self.n_nodes {
                return Err(GraphError::NodeOutOfRange {
                    node: n,
                    n_nodes: self.n_nodes,
                });
            }
        }
        Ok(ordered(i, j))
    }

    /// Set entry `(i, j)` to `w`. Nonzero `w` must exactly equal an existing
    /// category value; use [`WeightedNetwork::set_entry_target`] with
    /// [`WeightTarget::NewValue`] to create categories. Returns the previous
    /// weight.
    pub fn set_entry(&mut self, i: usize, j: usize, w: f64) -> Result<f64, GraphError> {
        if w == 0.0 {
            self.set_entry_target(i, j, WeightTarget::Zero)
        } else {
            self.set_entry_target(i, j, WeightTarget::Value(w))
        }
    }

    /// General entry assignment. Returns the previous weight.
    pub fn set_entry_target(
        &mut self,
        i: usize,
        j: usize,
        target: WeightTarget,
    ) -> Result<f64, GraphError> {
        let pair = self.check_pair(i, j)?;
        let current = self.entries.get(&pair).map_or(0.0, |e| e.weight);
        // Resolve the destination value; slot ids are looked up only after the
        // removal below, which can shuffle them.
        let dest: Option<f64> = match target {
            WeightTarget::Zero => None,
            WeightTarget::Value(v) => {
                if v == 0.0 {
                    None
                } else {
                    if self.cats.slot_of_value(v).is_none() {
                        return Err(GraphError::UnknownCategory(v));
                    }
                    Some(v)
                }
            }
            WeightTarget::NewValue(v) => {
                let v = snap_to_grid(v, self.cats.delta);
                if v == 0.0 {
                    return Err(GraphError::ZeroCategory);
                }
                Some(v)
            }
        };
        if dest == Some(current) {
            return Ok(current); // no-op assignment
        }
        let old_w = self.remove_entry(pair);
        if let Some(v) = dest {
            // Distinct from the removed value, so this category survived the
            // removal (or gets created here).
            let slot = match self.cats.slot_of_value(v) {
                Some(s) => s,
                None => {
                    debug_assert!(matches!(target, WeightTarget::NewValue(_)));
                    self.cats.slots.push(CatSlot {
                        value: v,
                        members: Vec::new(),
                    });
                    self.cats.slots.len() - 1
                }
            };
            self.insert_entry(pair, slot);
        }
        Ok(old_w)
    }

    /// Remove the entry if present, deleting its category when it was the last
    /// member. Returns the previous weight.
    fn remove_entry(&mut self, pair: Pair) -> f64 {
        let Some(entry) = self.entries.remove(&pair) else {
            return 0.0;
        };
        // Global edge list: swap-remove with position fixup.
        let last = *self.edge_list.last().unwrap();
        self.edge_list.swap_remove(entry.list_pos);
        if last != pair {
            self.entries.get_mut(&last).unwrap().list_pos = entry.list_pos;
        }
        // Adjacency.
        for (a, b) in [(pair.0, pair.1), (pair.1, pair.0)] {
            let pos = self.adjacency[a].iter().position(|&x| x == b).unwrap();
            self.adjacency[a].swap_remove(pos);
        }
        // Category membership: swap-remove with fixup, delete empty slot.
        let slot = &mut self.cats.slots[entry.cat];
        let last_member = *slot.members.last().unwrap();
        slot.members.swap_remove(entry.member_pos);
        if last_member != pair {
            self.entries.get_mut(&last_member).unwrap().member_pos = entry.member_pos;
        }
        if self.cats.slots[entry.cat].members.is_empty() {
            self.delete_slot(entry.cat);
        }
        entry.weight
    }

    fn delete_slot(&mut self, slot: usize) {
        let moved_from = self.cats.slots.len() - 1;
        self.cats.slots.swap_remove(slot);
        if moved_from != slot {
            for p in self.cats.slots[slot].members.clone() {
                self.entries.get_mut(&p).unwrap().cat = slot;
            }
        }
    }

    fn insert_entry(&mut self, pair: Pair, slot: usize) {
        let value = self.cats.slots[slot].value;
        let member_pos = self.cats.slots[slot].members.len();
        self.cats.slots[slot].members.push(pair);
        let list_pos = self.edge_list.len();
        self.edge_list.push(pair);
        self.adjacency[pair.0].push(pair.1);
        self.adjacency[pair.1].push(pair.0);
        self.entries.insert(
            pair,
            Entry {
                weight: value,
                cat: slot,
                member_pos,
                list_pos,
            },
        );
    }

    /// Relocate the entry at `(i, j)` to the empty position `(i, u)`, keeping
    /// its value and category. Category counts are unchanged.
    pub fn move_entry(
        &mut self,
        i: usize,
        j: usize,
        u: usize,
    ) -> Result<(), GraphError> {
        let from = self.check_pair(i, j)?;
        let to = self.check_pair(i, u)?;
        assert!(
            self.entries.contains_key(&from) && !self.entries.contains_key(&to),
            "move_entry requires an occupied source and a free destination"
        );
        let entry = self.entries.remove(&from).unwrap();
        self.edge_list[entry.list_pos] = to;
        self.cats.slots[entry.cat].members[entry.member_pos] = to;
        for (a, b) in [(from.0, from.1), (from.1, from.0)] {
            let pos = self.adjacency[a].iter().position(|&x| x == b).unwrap();
            self.adjacency[a].swap_remove(pos);
        }
        self.adjacency[to.0].push(to.1);
        self.adjacency[to.1].push(to.0);
        self.entries.insert(to, entry);
        Ok(())
    }

    /// Change the value of the category currently at `old_value`; all member
    /// edges move together. The new value is snapped to the grid and must not
    /// collide with another category.
    pub fn set_category_value(&mut self, old_value: f64, new_value: f64) -> Result<(), GraphError> {
        let slot = self
            .cats
            .slot_of_value(old_value)
            .ok_or(GraphError::NoSuchCategory(old_value))?;
        let v = snap_to_grid(new_value, self.cats.delta);
        if v == 0.0 {
            return Err(GraphError::ZeroCategory);
        }
        if v != old_value && self.cats.slot_of_value(v).is_some() {
            return Err(GraphError::DuplicateCategory(v));
        }
        self.cats.slots[slot].value = v;
        for p in self.cats.slots[slot].members.clone() {
            self.entries.get_mut(&p).unwrap().weight = v;
        }
        Ok(())
    }

    /// Recount `(E, K, m)` from the raw entries; used to validate the
    /// incrementally maintained bookkeeping.
    pub fn recount(&self) -> (usize, usize, Vec<(f64, usize)>) {
        let mut by_value: HashMap<u64, (f64, usize)> = HashMap::new();
        for e in self.entries.values() {
            let ent = by_value.entry(e.weight.to_bits()).or_insert((e.weight, 0));
            ent.1 += 1;
        }
        let mut counts: Vec<(f64, usize)> = by_value.into_values().collect();
        counts.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        (self.entries.len(), counts.len(), counts)
    }

    /// Check all coupling invariants; panics on violation. Test/debug hook.
    pub fn validate(&self) {
        let (e, k, counts) = self.recount();
        assert_eq!(e, self.edge_list.len());
        assert_eq!(k, self.cats.slots.len());
        assert_eq!(counts, self.cats.sorted_value_counts());
        assert!(self.cats.slots.iter().all(|s| !s.members.is_empty()));
        for (idx, p) in self.edge_list.iter().enumerate() {
            assert!(p.0 < p.1, "entries must be stored with i < j");
            let entry = &self.entries[p];
            assert_eq!(entry.list_pos, idx);
            assert_eq!(self.cats.slots[entry.cat].members[entry.member_pos], *p);
            assert_eq!(entry.weight, self.cats.slots[entry.cat].value);
            assert_ne!(entry.weight, 0.0);
            assert_eq!(
                entry.weight,
                snap_to_grid(entry.weight, self.cats.delta),
                "stored weight off the grid"
            );
        }
        let mut deg = vec![0usize; self.n_nodes];
        for p in &self.edge_list {
            deg[p.0] += 1;
            deg[p.1] += 1;
        }
        for i in 0..self.n_nodes {
            assert_eq!(deg[i], self.adjacency[i].len());
        }
    }
}

/// Per-node parameters with their own category set (zero allowed as a value).
#[derive(Debug, Clone)]
pub struct NodeFields {
    theta: Vec<f64>,
    slots: Vec<FieldSlot>,
    node_slot: Vec<usize>,
    node_member_pos: Vec<usize>,
    delta: f64,
    lambda: f64,
}

#[derive(Debug, Clone)]
struct FieldSlot {
    value: f64,
    members: Vec<usize>,
}

impl NodeFields {
    /// All-zero fields: one category with value 0 holding every node.
    pub fn new_zero(n_nodes: usize, delta: f64, lambda: f64) -> Self {
        assert!(delta > 0.0 && lambda > 0.0);
        Self {
            theta: vec![0.0; n_nodes],
            slots: vec![FieldSlot {
                value: 0.0,
                members: (0..n_nodes).collect(),
            }],
            node_slot: vec![0; n_nodes],
            node_member_pos: (0..n_nodes).collect(),
            delta,
            lambda,
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.theta.len()
    }

    pub fn theta(&self, i: usize) -> f64 {
        self.theta[i]
    }

    pub fn thetas(&self) -> &[f64] {
        &self.theta
    }

    pub fn n_categories(&self) -> usize {
        self.slots.len()
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn value(&self, slot: usize) -> f64 {
        self.slots[slot].value
    }

    pub fn count(&self, slot: usize) -> usize {
        self.slots[slot].members.len()
    }

    pub fn members(&self, slot: usize) -> &[usize] {
        &self.slots[slot].members
    }

    pub fn slot_of_node(&self, i: usize) -> usize {
        self.node_slot[i]
    }

    pub fn slot_of_value(&self, value: f64) -> Option<usize> {
        self.slots.iter().position(|s| s.value == value)
    }

    pub fn sorted_values(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.slots.iter().map(|s| s.value).collect();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v
    }

    pub fn sorted_value_counts(&self) -> Vec<(f64, usize)> {
        let mut v: Vec<(f64, usize)> = self
            .slots
            .iter()
            .map(|s| (s.value, s.members.len()))
            .collect();
        v.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        v
    }

    pub fn has_zero_category(&self) -> bool {
        self.slots.iter().any(|s| s.value == 0.0)
    }

    /// Move node `i` to the category holding `value`, creating it if
    /// `create` is set. The value is snapped to the grid.
    pub fn set_theta(&mut self, i: usize, value: f64, create: bool) -> Result<f64, GraphError> {
        let v = snap_to_grid(value, self.delta);
        let old = self.theta[i];
        if v == old {
            return Ok(old);
        }
        let dest = match self.slot_of_value(v) {
            Some(s) => s,
            None if create => {
                self.slots.push(FieldSlot {
                    value: v,
                    members: Vec::new(),
                });
                self.slots.len() - 1
            }
            None => return Err(GraphError::UnknownCategory(v)),
        };
        // Detach from the old slot.
        let old_slot = self.node_slot[i];
        let pos = self.node_member_pos[i];
        let last = *self.slots[old_slot].members.last().unwrap();
        self.slots[old_slot].members.swap_remove(pos);
        if last != i {
            self.node_member_pos[last] = pos;
        }
        let dest = if self.slots[old_slot].members.is_empty() {
            let moved_from = self.slots.len() - 1;
            self.slots.swap_remove(old_slot);
            if moved_from != old_slot {
                for &n in &self.slots[old_slot].members.clone() {
                    self.node_slot[n] = old_slot;
                }
                if dest == moved_from {
                    old_slot
                } else {
                    dest
                }
            } else {
                dest
            }
        } else {
            dest
        };
        self.node_member_pos[i] = self.slots[dest].members.len();
        self.slots[dest].members.push(i);
        self.node_slot[i] = dest;
        self.theta[i] = v;
        Ok(old)
    }

    /// Change a category value in place; all member nodes move together.
    pub fn set_category_value(&mut self, old_value: f64, new_value: f64) -> Result<(), GraphError> {
        let slot = self
            .slot_of_value(old_value)
            .ok_or(GraphError::NoSuchCategory(old_value))?;
        let v = snap_to_grid(new_value, self.delta);
        if v != old_value && self.slot_of_value(v).is_some() {
            return Err(GraphError::DuplicateCategory(v));
        }
        self.slots[slot].value = v;
        for &n in &self.slots[slot].members {
            self.theta[n] = v;
        }
        Ok(())
    }

    pub fn validate(&self) {
        let n: usize = self.slots.iter().map(|s| s.members.len()).sum();
        assert_eq!(n, self.theta.len());
        assert!(self.slots.iter().all(|s| !s.members.is_empty()));
        for (si, s) in self.slots.iter().enumerate() {
            for (pos, &node) in s.members.iter().enumerate() {
                assert_eq!(self.node_slot[node], si);
                assert_eq!(self.node_member_pos[node], pos);
                assert_eq!(self.theta[node], s.value);
            }
            assert_eq!(s.value, snap_to_grid(s.value, self.delta));
        }
        let mut vals = self.sorted_values();
        vals.dedup();
        assert_eq!(vals.len(), self.slots.len(), "duplicate category values");
    }
}

/// Kind of the observation matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataKind {
    /// Columns are independent samples.
    Iid,
    /// Columns form a Markov trajectory.
    Markov,
}

/// State alphabet of the observations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Alphabet {
    /// States in {-1, +1}.
    Binary,
    /// States in {-1, 0, +1}.
    ZeroValued,
}

impl Alphabet {
    pub fn contains(self, v: i8) -> bool {
        match self {
            Alphabet::Binary => v == -1 || v == 1,
            Alphabet::ZeroValued => (-1..=1).contains(&v),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum DataError {
    #[error("state {value} at node {node}, sample {sample} outside the declared alphabet")]
    OutOfAlphabet { node: usize, sample: usize, value: i8 },
    #[error("markov data needs at least 2 samples, got {0}")]
    TooShort(usize),
    #[error("states length {got} does not match {n_nodes} x {n_samples}")]
    ShapeMismatch {
        got: usize,
        n_nodes: usize,
        n_samples: usize,
    },
}

/// Observed node states: an `N x M` matrix stored row-major (one row per node).
#[derive(Debug, Clone)]
pub struct Dataset {
    n_nodes: usize,
    n_samples: usize,
    states: Vec<i8>,
    kind: DataKind,
    alphabet: Alphabet,
}

impl Dataset {
    pub fn new(
        n_nodes: usize,
        n_samples: usize,
        states: Vec<i8>,
        kind: DataKind,
        alphabet: Alphabet,
    ) -> Result<Self, DataError> {
        if states.len() != n_nodes * n_samples {
            return Err(DataError::ShapeMismatch {
                got: states.len(),
                n_nodes,
                n_samples,
            });
        }
        if kind == DataKind::Markov && n_samples < 2 {
            return Err(DataError::TooShort(n_samples));
        }
        for i in 0..n_nodes {
            for m in 0..n_samples {
                let v = states[i * n_samples + m];
                if !alphabet.contains(v) {
                    return Err(DataError::OutOfAlphabet {
                        node: i,
                        sample: m,
                        value: v,
                    });
                }
            }
        }
        Ok(Self {
            n_nodes,
            n_samples,
            states,
            kind,
            alphabet,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn kind(&self) -> DataKind {
        self.kind
    }

    pub fn alphabet(&self) -> Alphabet {
        self.alphabet
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[i8] {
        &self.states[i * self.n_samples..(i + 1) * self.n_samples]
    }

    #[inline]
    pub fn get(&self, i: usize, m: usize) -> i8 {
        self.states[i * self.n_samples + m]
    }

    /// Number of likelihood terms per node: samples for iid data, transitions
    /// for a Markov trajectory.
    pub fn n_terms(&self) -> usize {
        match self.kind {
            DataKind::Iid => self.n_samples,
            DataKind::Markov => self.n_samples.saturating_sub(1),
        }
    }

    /// Same states reinterpreted with a different kind (used by samplers).
    pub fn with_kind(mut self, kind: DataKind) -> Result<Self, DataError> {
        if kind == DataKind::Markov && self.n_samples < 2 {
            return Err(DataError::TooShort(self.n_samples));
        }
        self.kind = kind;
        Ok(self)
    }
}
