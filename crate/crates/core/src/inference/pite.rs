use serde::{Deserialize, Serialize};

use super::predict::MetricKind;
use crate::dist::quantile_sorted;
use crate::error::{HobzError, Result};
use crate::sampler::{ComponentDraws, PosteriorDraws};

/// Default credible level for PITE intervals.
pub const DEFAULT_LEVEL: f64 = 0.6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PiteRow {
    pub point: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Per-individual treatment contrasts with equal-tailed credible bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiteResult {
    pub kind: MetricKind,
    pub level: f64,
    pub rows: Vec<PiteRow>,
    /// Mean of the point estimates.
    pub ate: f64,
}

impl PiteResult {
    pub fn points(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.point).collect()
    }
}

/// PITE from the test-row draws of two separately fitted arms.
pub fn compute_pite(
    treated: &PosteriorDraws,
    control: &PosteriorDraws,
    kind: MetricKind,
    level: f64,
) -> Result<PiteResult> {
    compute_pite_rows(&treated.test, &control.test, kind, level)
}

/// PITE from two component draw sets over the same individuals.
///
/// Draw `l` of one arm is paired with draw `l` of the other; the arms were
/// fitted independently so any pairing gives the same posterior.
pub fn compute_pite_rows(
    treated: &ComponentDraws,
    control: &ComponentDraws,
    kind: MetricKind,
    level: f64,
) -> Result<PiteResult> {
    if treated.n_rows != control.n_rows {
        return Err(HobzError::validation(format!(
            "arms cover {} and {} individuals",
            treated.n_rows, control.n_rows
        )));
    }
    let l = treated.num_draws();
    if l != control.num_draws() {
        return Err(HobzError::validation(format!(
            "arms hold {} and {} draws",
            l,
            control.num_draws()
        )));
    }
    if l == 0 {
        return Err(HobzError::validation("no draws to contrast"));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(HobzError::validation(format!(
            "credible level must lie in (0, 1), got {level}"
        )));
    }
    let lo_p = (1.0 - level) / 2.0;
    let hi_p = (1.0 + level) / 2.0;
    let mut rows = Vec::with_capacity(treated.n_rows);
    let mut contrast = vec![0.0; l];
    for i in 0..treated.n_rows {
        for (d, c) in contrast.iter_mut().enumerate() {
            let (a1, a0, ab) = treated.get(d, i);
            let (b1, b0, bb) = control.get(d, i);
            *c = kind.eval(a1, a0, ab) - kind.eval(b1, b0, bb);
        }
        let point = contrast.iter().sum::<f64>() / l as f64;
        contrast.sort_by(|a, b| a.total_cmp(b));
        let lower = quantile_sorted(&contrast, lo_p).min(point);
        let upper = quantile_sorted(&contrast, hi_p).max(point);
        rows.push(PiteRow { point, lower, upper });
    }
    let ate = rows.iter().map(|r| r.point).sum::<f64>() / rows.len().max(1) as f64;
    Ok(PiteResult {
        kind,
        level,
        rows,
        ate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::expected_outcome;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_draws(n: usize, l: usize, seed: u64) -> ComponentDraws {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut c = ComponentDraws::new(n);
        for _ in 0..l {
            let f1: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
            let f0: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
            let fb: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..5.0)).collect();
            c.push_draw(&f1, &f0, &fb);
        }
        c
    }

    #[test]
    fn identical_arms_give_zero() {
        let a = random_draws(5, 50, 1);
        let r = compute_pite_rows(&a, &a, MetricKind::FullExpectation, 0.6).unwrap();
        assert!(r.rows.iter().all(|p| p.point == 0.0 && p.lower == 0.0 && p.upper == 0.0));
        assert_eq!(r.ate, 0.0);
    }

    #[test]
    fn swapping_arms_negates() {
        let a = random_draws(6, 80, 2);
        let b = random_draws(6, 80, 3);
        for kind in [MetricKind::FullExpectation, MetricKind::PartialExpectation] {
            let ab = compute_pite_rows(&a, &b, kind, 0.6).unwrap();
            let ba = compute_pite_rows(&b, &a, kind, 0.6).unwrap();
            for (x, y) in ab.rows.iter().zip(&ba.rows) {
                assert!((x.point + y.point).abs() < 1e-14);
                assert!((x.lower + y.upper).abs() < 1e-12);
                assert!((x.upper + y.lower).abs() < 1e-12);
                assert!(x.lower <= x.point && x.point <= x.upper);
            }
        }
    }

    #[test]
    fn certain_one_in_treated_arm() {
        let c = random_draws(4, 30, 4);
        let mut t = c.clone();
        t.f1.iter_mut().for_each(|v| *v = f64::INFINITY);
        let r = compute_pite_rows(&t, &c, MetricKind::FullExpectation, 0.6).unwrap();
        for (i, row) in r.rows.iter().enumerate() {
            let base: f64 = (0..30)
                .map(|d| {
                    let (f1, f0, fb) = c.get(d, i);
                    expected_outcome(f1, f0, fb)
                })
                .sum::<f64>()
                / 30.0;
            assert!((row.point - (1.0 - base)).abs() < 1e-12);
        }
    }

    #[test]
    fn mismatches_rejected() {
        let a = random_draws(4, 10, 5);
        let b = random_draws(5, 10, 6);
        let c = random_draws(4, 11, 7);
        assert!(compute_pite_rows(&a, &b, MetricKind::FullExpectation, 0.6).is_err());
        assert!(compute_pite_rows(&a, &c, MetricKind::FullExpectation, 0.6).is_err());
        assert!(compute_pite_rows(&a, &a, MetricKind::FullExpectation, 1.0).is_err());
    }
}
