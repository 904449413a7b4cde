use serde::{Deserialize, Serialize};

use crate::error::{HobzError, Result};

/// Chain settings recorded with every draw set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainMeta {
    pub seed: u64,
    pub iterations: u64,
    pub burn_in: u64,
    pub thin: u64,
    pub num_trees: u64,
    /// Hash of the configuration that produced the draws; 0 when unset.
    pub config_hash: u64,
}

/// Per-draw, per-row component fits, stored draw-major (`L x n`).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ComponentDraws {
    pub n_rows: usize,
    pub f1: Vec<f64>,
    pub f0: Vec<f64>,
    pub fb: Vec<f64>,
}

impl ComponentDraws {
    pub fn new(n_rows: usize) -> Self {
        ComponentDraws {
            n_rows,
            ..Default::default()
        }
    }

    pub fn num_draws(&self) -> usize {
        if self.n_rows == 0 {
            0
        } else {
            self.f1.len() / self.n_rows
        }
    }

    #[inline]
    pub fn get(&self, draw: usize, row: usize) -> (f64, f64, f64) {
        let k = draw * self.n_rows + row;
        (self.f1[k], self.f0[k], self.fb[k])
    }

    pub fn push_draw(&mut self, f1: &[f64], f0: &[f64], fb: &[f64]) {
        debug_assert!(f1.len() == self.n_rows && f0.len() == self.n_rows && fb.len() == self.n_rows);
        self.f1.extend_from_slice(f1);
        self.f0.extend_from_slice(f0);
        self.fb.extend_from_slice(fb);
    }
}

/// Move and acceptance bookkeeping for one chain.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ChainDiagnostics {
    /// Indexed by `MoveKind as usize`: grow, prune, change.
    pub proposed: [u64; 3],
    pub accepted: [u64; 3],
    pub rejected_min_leaf: u64,
    /// Mean leaves per tree at each kept draw.
    pub mean_leaves: Vec<f64>,
}

impl ChainDiagnostics {
    pub fn acceptance_rate(&self) -> f64 {
        let p: u64 = self.proposed.iter().sum();
        if p == 0 {
            0.0
        } else {
            self.accepted.iter().sum::<u64>() as f64 / p as f64
        }
    }
}

/// Kept draws of the chain.
///
/// `kappa.len()` is the number of kept draws `L`; `train` and `test` each
/// hold `L x n` values per component.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorDraws {
    pub meta: ChainMeta,
    pub kappa: Vec<f64>,
    pub train: ComponentDraws,
    pub test: ComponentDraws,
    pub diagnostics: ChainDiagnostics,
}

impl PosteriorDraws {
    pub fn num_draws(&self) -> usize {
        self.kappa.len()
    }

    /// Check the shape and positivity invariants.
    pub fn validate(&self) -> Result<()> {
        let l = self.kappa.len();
        for (name, c) in [("train", &self.train), ("test", &self.test)] {
            let want = l * c.n_rows;
            if c.f1.len() != want || c.f0.len() != want || c.fb.len() != want {
                return Err(HobzError::format(format!(
                    "{name} draws hold {} values, expected {want}",
                    c.f1.len()
                )));
            }
            if let Some(k) = c.fb.iter().position(|v| !(*v > 0.0)) {
                return Err(HobzError::format(format!(
                    "{name} f_b at draw {}, row {} is not positive",
                    k / c.n_rows.max(1),
                    k % c.n_rows.max(1)
                )));
            }
        }
        if self.kappa.iter().any(|k| !(*k > 0.0 && k.is_finite())) {
            return Err(HobzError::format("kappa draws must be positive"));
        }
        Ok(())
    }
}

/// Effective sample size from the initial positive sequence of
/// autocorrelation pairs.
pub fn effective_sample_size(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 4 {
        return n as f64;
    }
    let m = xs.iter().sum::<f64>() / n as f64;
    let c0 = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n as f64;
    if c0 <= 0.0 {
        return n as f64;
    }
    let acf = |lag: usize| {
        (0..n - lag)
            .map(|i| (xs[i] - m) * (xs[i + lag] - m))
            .sum::<f64>()
            / (n as f64 * c0)
    };
    let mut tau = -1.0;
    let mut lag = 0;
    while lag + 1 < n {
        let pair = acf(lag) + acf(lag + 1);
        if pair <= 0.0 {
            break;
        }
        tau += 2.0 * pair;
        lag += 2;
    }
    (n as f64 / tau.max(1.0 / n as f64)).min(n as f64)
}
