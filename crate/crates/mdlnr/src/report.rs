//! Run summaries emitted by the fitting routines.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::graph::Alphabet;
use crate::models::{Dynamics, ModelKind, ModelState};
use crate::prior::{neglog_prior_theta, neglog_prior_weights, PriorError, PriorHyper};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CategoryEntry {
    pub value: f64,
    pub count: usize,
}

/// Everything needed to audit a fit: the DL and its ingredients, the final
/// category structure, move acceptance counts, and provenance (seed, timing,
/// warnings). The DL is recomputable from the report's own fields.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub method: String,
    pub model: String,
    pub n_nodes: usize,
    pub n_samples: usize,
    pub description_length: f64,
    pub loglik: f64,
    pub n_edges: usize,
    pub n_categories: usize,
    pub categories: Vec<CategoryEntry>,
    pub theta_categories: Vec<CategoryEntry>,
    pub lambda: f64,
    pub delta: f64,
    pub lambda_theta: f64,
    pub delta_theta: f64,
    pub sweeps: usize,
    pub converged: bool,
    pub acceptance: BTreeMap<String, u64>,
    pub dl_trajectory: Vec<f64>,
    pub wall_time_s: f64,
    pub seed: u64,
    pub warnings: Vec<String>,
}

pub fn model_name(kind: ModelKind) -> &'static str {
    match (kind.dynamics, kind.alphabet) {
        (Dynamics::Kinetic, Alphabet::Binary) => "kinetic",
        (Dynamics::Kinetic, Alphabet::ZeroValued) => "kinetic-z",
        (Dynamics::EquilibriumPl, Alphabet::Binary) => "equilibrium",
        (Dynamics::EquilibriumPl, Alphabet::ZeroValued) => "equilibrium-z",
    }
}

impl RunReport {
    #[allow(clippy::too_many_arguments)]
    pub fn from_state(
        method: &str,
        state: &ModelState,
        hyper: &PriorHyper,
        sweeps: usize,
        converged: bool,
        acceptance: BTreeMap<String, u64>,
        dl_trajectory: Vec<f64>,
        seed: u64,
        wall_time_s: f64,
    ) -> Self {
        let loglik = state.compute_loglik();
        let categories: Vec<CategoryEntry> = state
            .net()
            .categories()
            .sorted_value_counts()
            .into_iter()
            .map(|(value, count)| CategoryEntry { value, count })
            .collect();
        let theta_categories: Vec<CategoryEntry> = state
            .fields()
            .sorted_value_counts()
            .into_iter()
            .map(|(value, count)| CategoryEntry { value, count })
            .collect();
        let mut warnings = Vec::new();
        if !converged {
            warnings.push("did not converge within the sweep budget".to_string());
        }
        Self {
            method: method.to_string(),
            model: model_name(state.kind()).to_string(),
            n_nodes: state.n_nodes(),
            n_samples: state.data().n_samples(),
            description_length: crate::prior::description_length(state, hyper),
            loglik,
            n_edges: state.net().n_edges(),
            n_categories: state.net().categories().len(),
            categories,
            theta_categories,
            lambda: hyper.lambda,
            delta: hyper.delta,
            lambda_theta: hyper.lambda_theta,
            delta_theta: hyper.delta_theta,
            sweeps,
            converged,
            acceptance,
            dl_trajectory,
            wall_time_s,
            seed,
            warnings,
        }
    }

    /// Recompute the DL from the report's own fields; must agree with
    /// `description_length` to 1e-6.
    pub fn recomputed_dl(&self) -> Result<f64, PriorError> {
        let hyper = PriorHyper {
            delta: self.delta,
            lambda: self.lambda,
            delta_theta: self.delta_theta,
            lambda_theta: self.lambda_theta,
        };
        let m: Vec<usize> = self.categories.iter().map(|c| c.count).collect();
        let z: Vec<f64> = self.categories.iter().map(|c| c.value).collect();
        let n_t: Vec<usize> = self.theta_categories.iter().map(|c| c.count).collect();
        let u: Vec<f64> = self.theta_categories.iter().map(|c| c.value).collect();
        let w = neglog_prior_weights(self.n_edges, &m, &z, self.n_nodes, &hyper)?;
        let t = neglog_prior_theta(self.n_nodes, &n_t, &u, &hyper)?;
        Ok(-self.loglik + w + t)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}
