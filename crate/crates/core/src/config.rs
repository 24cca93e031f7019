use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Pruning hyperparameters.
///
/// `tau` may exceed 1 to disable temporal merging entirely (cosine similarity
/// never reaches it); the ratios must lie in `(0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PruneConfig {
    /// Static-token similarity threshold.
    pub tau: f64,
    /// Temporal segments per frame.
    pub gamma: f64,
    /// Spatial clusters per token.
    pub beta: f64,
    /// Fraction of merged visual tokens kept after attention ranking.
    pub alpha: f64,
    /// 1-based layer whose attention drives selection.
    pub m_layer: usize,
    /// Neighbour count for DPC-KNN density.
    pub k_knn: usize,
    pub seed: u64,
}

impl Default for PruneConfig {
    fn default() -> Self {
        Self {
            tau: 0.8,
            gamma: 0.25,
            beta: 0.5,
            alpha: 0.4,
            m_layer: 10,
            k_knn: 5,
            seed: 0,
        }
    }
}

impl PruneConfig {
    /// Checks ranges; `n_layers` adds the `m_layer < L` check.
    pub fn validate(&self, n_layers: Option<usize>) -> Result<()> {
        let ratio = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 && v <= 1.0 {
                Ok(())
            } else {
                Err(Error::InvalidConfig(format!("{name}={v} must lie in (0, 1]")))
            }
        };
        ratio("gamma", self.gamma)?;
        ratio("beta", self.beta)?;
        ratio("alpha", self.alpha)?;
        if !self.tau.is_finite() || self.tau < 0.0 {
            return Err(Error::InvalidConfig(format!("tau={} must be finite and >= 0", self.tau)));
        }
        if self.k_knn == 0 {
            return Err(Error::InvalidConfig("k_knn must be >= 1".into()));
        }
        if self.m_layer == 0 {
            return Err(Error::InvalidConfig("m_layer is 1-based and must be >= 1".into()));
        }
        if let Some(l) = n_layers {
            if self.m_layer >= l {
                return Err(Error::InvalidConfig(format!(
                    "m_layer={} must be < number of layers {l}",
                    self.m_layer
                )));
            }
        }
        Ok(())
    }
}
