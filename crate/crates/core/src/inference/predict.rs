use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::Category;
use crate::dist::{interior_beta, norm_cdf};
use crate::error::{HobzError, Result};
use crate::sampler::{ComponentDraws, PosteriorDraws};

/// `E[Y] = Phi(f1) + mu (1 - Phi(f0)) (1 - Phi(f1))` with `mu = f_b / (1 + f_b)`.
pub fn expected_outcome(f1: f64, f0: f64, fb: f64) -> f64 {
    let p1 = norm_cdf(f1);
    (p1 + interior_mean(fb) * norm_cdf(-f0) * norm_cdf(-f1)).clamp(0.0, 1.0)
}

/// `E[Y | Y < 1] = mu (1 - Phi(f0))`.
pub fn expected_partial_outcome(f0: f64, fb: f64) -> f64 {
    interior_mean(fb) * norm_cdf(-f0)
}

/// Beta mean `f_b / (1 + f_b)`, stable for huge `f_b`.
#[inline]
pub fn interior_mean(fb: f64) -> f64 {
    if fb.is_infinite() {
        1.0
    } else {
        fb / (1.0 + fb)
    }
}

/// Which expectation a contrast is built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    FullExpectation,
    PartialExpectation,
}

impl MetricKind {
    pub fn eval(self, f1: f64, f0: f64, fb: f64) -> f64 {
        match self {
            MetricKind::FullExpectation => expected_outcome(f1, f0, fb),
            MetricKind::PartialExpectation => expected_partial_outcome(f0, fb),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            MetricKind::FullExpectation => "full_expectation",
            MetricKind::PartialExpectation => "partial_expectation",
        }
    }
}

impl std::str::FromStr for MetricKind {
    type Err = HobzError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" | "full_expectation" => Ok(MetricKind::FullExpectation),
            "partial" | "partial_expectation" => Ok(MetricKind::PartialExpectation),
            other => Err(HobzError::validation(format!(
                "unknown metric kind '{other}', expected full or partial"
            ))),
        }
    }
}

/// One simulated response.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictionDraw {
    pub category: Category,
    pub value: f64,
}

/// Draw a response from the hurdle given one set of component values.
pub fn predict_one<R: Rng + ?Sized>(f1: f64, f0: f64, fb: f64, kappa: f64, rng: &mut R) -> PredictionDraw {
    if rng.random::<f64>() < norm_cdf(f1) {
        PredictionDraw {
            category: Category::One,
            value: 1.0,
        }
    } else if rng.random::<f64>() < norm_cdf(f0) {
        PredictionDraw {
            category: Category::Zero,
            value: 0.0,
        }
    } else {
        PredictionDraw {
            category: Category::Interior,
            value: interior_beta(kappa * fb, kappa, rng),
        }
    }
}

/// Which rows of a draw set to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowSet {
    Train,
    Test,
}

impl PosteriorDraws {
    pub fn rows(&self, set: RowSet) -> &ComponentDraws {
        match set {
            RowSet::Train => &self.train,
            RowSet::Test => &self.test,
        }
    }
}

/// One posterior predictive response per kept draw and row, draw-major.
pub fn predict_draws<R: Rng + ?Sized>(
    draws: &PosteriorDraws,
    set: RowSet,
    rng: &mut R,
) -> Result<Vec<PredictionDraw>> {
    let c = draws.rows(set);
    if draws.num_draws() == 0 {
        return Err(HobzError::validation("no posterior draws to predict from"));
    }
    let mut out = Vec::with_capacity(draws.num_draws() * c.n_rows);
    for (l, &kappa) in draws.kappa.iter().enumerate() {
        for i in 0..c.n_rows {
            let (f1, f0, fb) = c.get(l, i);
            out.push(predict_one(f1, f0, fb, kappa, rng));
        }
    }
    Ok(out)
}

/// Posterior mean per row of both expectations: `(full, partial)`.
pub fn posterior_expectations(c: &ComponentDraws) -> (Vec<f64>, Vec<f64>) {
    let l = c.num_draws();
    let mut full = vec![0.0; c.n_rows];
    let mut partial = vec![0.0; c.n_rows];
    for d in 0..l {
        for i in 0..c.n_rows {
            let (f1, f0, fb) = c.get(d, i);
            full[i] += expected_outcome(f1, f0, fb);
            partial[i] += expected_partial_outcome(f0, fb);
        }
    }
    if l > 0 {
        full.iter_mut().for_each(|v| *v /= l as f64);
        partial.iter_mut().for_each(|v| *v /= l as f64);
    }
    (full, partial)
}

/// Posterior mean per row of the interior Beta mean `f_b / (1 + f_b)`.
pub fn posterior_interior_mean(c: &ComponentDraws) -> Vec<f64> {
    let l = c.num_draws();
    let mut out = vec![0.0; c.n_rows];
    for d in 0..l {
        for (i, v) in out.iter_mut().enumerate() {
            *v += interior_mean(c.get(d, i).2);
        }
    }
    if l > 0 {
        out.iter_mut().for_each(|v| *v /= l as f64);
    }
    out
}
