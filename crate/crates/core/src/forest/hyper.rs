use serde::{Deserialize, Serialize};

use crate::error::{HobzError, Result};

/// Probabilities of the three structural moves on a non-stump tree.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MoveProbs {
    pub grow: f64,
    pub prune: f64,
    pub change: f64,
}

impl Default for MoveProbs {
    fn default() -> Self {
        MoveProbs {
            grow: 0.3,
            prune: 0.3,
            change: 0.4,
        }
    }
}

/// Prior and tuning settings for the shared forest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub num_trees: usize,
    /// Base split probability `alpha` in `alpha (1 + d)^-beta`.
    pub tree_alpha: f64,
    /// Depth penalty `beta` in `alpha (1 + d)^-beta`.
    pub tree_beta: f64,
    /// Prior SD of the mass-at-one probit leaves.
    pub sigma_theta1: f64,
    /// Prior SD of the mass-at-zero probit leaves.
    pub sigma_theta0: f64,
    /// Gamma shape for the leaf `lambda`.
    pub alpha_g: f64,
    /// Gamma rate for the leaf `lambda`.
    pub beta_g: f64,
    /// Gamma shape for the Beta precision `kappa`.
    pub alpha_kappa: f64,
    /// Gamma rate for the Beta precision `kappa`.
    pub beta_kappa: f64,
    pub moves: MoveProbs,
    /// Minimum number of training rows in any leaf; smaller proposals are rejected.
    pub min_leaf_size: usize,
    /// Initial slice width for `kappa`, on the log scale.
    pub kappa_slice_width: f64,
}

impl Hyperparams {
    /// Probit leaf SD `3 / (k sqrt(T))` with `k = 2`.
    pub fn probit_leaf_sd(num_trees: usize) -> f64 {
        3.0 / (2.0 * (num_trees.max(1) as f64).sqrt())
    }

    pub fn new(num_trees: usize) -> Self {
        let sd = Self::probit_leaf_sd(num_trees);
        Hyperparams {
            num_trees,
            tree_alpha: 0.95,
            tree_beta: 2.0,
            sigma_theta1: sd,
            sigma_theta0: sd,
            alpha_g: 0.5,
            beta_g: 0.15,
            alpha_kappa: 1.0,
            beta_kappa: 2.0,
            moves: MoveProbs::default(),
            min_leaf_size: 1,
            kappa_slice_width: 1.0,
        }
    }

    /// Same settings with a different tree count; the probit leaf SDs are
    /// recalibrated to the new count.
    pub fn with_trees(mut self, num_trees: usize) -> Self {
        self.num_trees = num_trees;
        self.sigma_theta1 = Self::probit_leaf_sd(num_trees);
        self.sigma_theta0 = self.sigma_theta1;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("sigma_theta1", self.sigma_theta1),
            ("sigma_theta0", self.sigma_theta0),
            ("alpha_g", self.alpha_g),
            ("beta_g", self.beta_g),
            ("alpha_kappa", self.alpha_kappa),
            ("beta_kappa", self.beta_kappa),
            ("kappa_slice_width", self.kappa_slice_width),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(HobzError::validation(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        if self.num_trees == 0 {
            return Err(HobzError::validation("num_trees must be at least 1"));
        }
        if !(self.tree_alpha > 0.0 && self.tree_alpha < 1.0) {
            return Err(HobzError::validation(format!(
                "tree_alpha must lie in (0, 1), got {}",
                self.tree_alpha
            )));
        }
        if !(self.tree_beta.is_finite() && self.tree_beta >= 0.0) {
            return Err(HobzError::validation(format!(
                "tree_beta must be non-negative, got {}",
                self.tree_beta
            )));
        }
        let m = self.moves;
        if [m.grow, m.prune, m.change].iter().any(|p| !(*p > 0.0)) {
            return Err(HobzError::validation("move probabilities must be positive"));
        }
        if ((m.grow + m.prune + m.change) - 1.0).abs() > 1e-12 {
            return Err(HobzError::validation("move probabilities must sum to 1"));
        }
        Ok(())
    }
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams::new(100)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let h = Hyperparams::default();
        h.validate().unwrap();
        assert!((h.sigma_theta1 - 0.15).abs() < 1e-15);
    }

    #[test]
    fn bad_move_probs_rejected() {
        let mut h = Hyperparams::new(10);
        h.moves.change = 0.5;
        assert!(h.validate().is_err());
        let mut h = Hyperparams::new(10);
        h.tree_alpha = 1.0;
        assert!(h.validate().is_err());
    }
}
