//! Closed-form integrated likelihoods used by the tree Metropolis-Hastings
//! step, and the Beta-function approximation they rest on.
//!
//! Everything is evaluated in log space from log-gamma primitives;
//! `kappa N + alpha_g` routinely exceeds the range of a raw gamma function.

use crate::dist::ln_gamma;
use crate::error::{HobzError, Result};
use crate::forest::{tree_log_prior, BetaStats, Hyperparams, KappaTerms, LeafSuffStats};
use crate::forest::{NodeId, ProbitStats, Tree};

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Log marginal likelihood of one probit leaf with `theta ~ N(0, sigma^2)`
/// integrated out against unit-variance residuals.
///
/// Uses `-sum r^2 / 2 + (sum r)^2 / (2 (N + tau))` for the quadratic part,
/// which equals `-SSE/2 - N tau Rbar^2 / (2 (N + tau))` without the
/// cancellation in `SSE`.
pub fn probit_leaf_log_marginal(stats: &ProbitStats, sigma_theta: f64) -> f64 {
    if stats.count == 0 {
        return 0.0;
    }
    let n = stats.count as f64;
    let tau = 1.0 / (sigma_theta * sigma_theta);
    -0.5 * n * LN_2PI + 0.5 * (tau / (tau + n)).ln() - 0.5 * stats.sum_sq
        + stats.sum * stats.sum / (2.0 * (n + tau))
}

/// Which normaliser to use for `1 / B(kappa lambda, kappa)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BetaFnMode {
    /// `Gamma(kappa lambda + kappa) / (Gamma(kappa lambda) Gamma(kappa))`
    Exact,
    /// `(kappa lambda)^kappa / Gamma(kappa)`
    Approx,
}

/// Both evaluations of `1 / B(kappa lambda, kappa)` side by side.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaApproxReport {
    pub lambda: f64,
    pub kappa: f64,
    pub log_exact_inv_b: f64,
    pub log_approx_inv_b: f64,
    /// May be `inf` when the log value exceeds the f64 range.
    pub exact_inv_b: f64,
    pub approx_inv_b: f64,
    /// `|exact - approx| / exact`, computed from the log difference.
    pub rel_error: f64,
}

impl BetaApproxReport {
    pub fn log_value(&self, mode: BetaFnMode) -> f64 {
        match mode {
            BetaFnMode::Exact => self.log_exact_inv_b,
            BetaFnMode::Approx => self.log_approx_inv_b,
        }
    }
}

/// `ln Gamma(a + k) - ln Gamma(a)`, summed directly for small integer `k`.
fn ln_rising(a: f64, k: f64) -> f64 {
    if k.fract() == 0.0 && k <= 32.0 {
        (0..k as u32).map(|j| (a + j as f64).ln()).sum()
    } else {
        ln_gamma(a + k) - ln_gamma(a)
    }
}

/// `ln(1 / B(kappa lambda, kappa))` under the chosen normaliser.
pub fn log_beta_inv(kappa: f64, lambda: f64, mode: BetaFnMode) -> f64 {
    let a = kappa * lambda;
    match mode {
        BetaFnMode::Exact => ln_rising(a, kappa) - ln_gamma(kappa),
        BetaFnMode::Approx => kappa * a.ln() - ln_gamma(kappa),
    }
}

pub fn beta_inv_fn(kappa: f64, lambda: f64) -> Result<BetaApproxReport> {
    if !(kappa > 0.0 && kappa.is_finite() && lambda > 0.0 && lambda.is_finite()) {
        return Err(HobzError::validation(format!(
            "kappa and lambda must be positive and finite, got kappa={kappa}, lambda={lambda}"
        )));
    }
    let le = log_beta_inv(kappa, lambda, BetaFnMode::Exact);
    let la = log_beta_inv(kappa, lambda, BetaFnMode::Approx);
    Ok(BetaApproxReport {
        lambda,
        kappa,
        log_exact_inv_b: le,
        log_approx_inv_b: la,
        exact_inv_b: le.exp(),
        approx_inv_b: la.exp(),
        rel_error: (la - le).exp_m1().abs(),
    })
}

/// Log integrated likelihood of a leaf's interior rows with the leaf
/// `lambda ~ Gamma(alpha_g, beta_g)` integrated out of the approximate Beta
/// likelihood. Zero for an empty leaf.
pub fn beta_leaf_log_marginal(stats: &BetaStats, kappa: f64, alpha_g: f64, beta_g: f64) -> f64 {
    if stats.count == 0 {
        return 0.0;
    }
    let shape = kappa * stats.count as f64 + alpha_g;
    let rate = beta_g - kappa * stats.weighted_log_y;
    debug_assert!(rate > 0.0);
    stats.row_term + alpha_g * beta_g.ln() - ln_gamma(alpha_g) + ln_gamma(shape)
        - shape * rate.ln()
}

/// [`beta_leaf_log_marginal`] from raw `(y, eta)` pairs.
pub fn beta_leaf_log_marginal_rows(
    rows: &[(f64, f64)],
    kappa: f64,
    alpha_g: f64,
    beta_g: f64,
) -> Result<f64> {
    let k = KappaTerms::new(kappa);
    let mut stats = BetaStats::default();
    for (i, &(y, eta)) in rows.iter().enumerate() {
        if !(y > 0.0 && y < 1.0) {
            return Err(HobzError::validation(format!(
                "row {i}: response {y} is not strictly inside (0, 1)"
            )));
        }
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(HobzError::validation(format!(
                "row {i}: eta must be positive, got {eta}"
            )));
        }
        stats.push(&k, eta.ln(), y.ln(), (-y).ln_1p());
    }
    Ok(beta_leaf_log_marginal(&stats, kappa, alpha_g, beta_g))
}

/// Sum of the three component marginals for one leaf.
pub fn leaf_log_marginal(stats: &LeafSuffStats, h: &Hyperparams, kappa: f64) -> f64 {
    probit_leaf_log_marginal(&stats.one, h.sigma_theta1)
        + probit_leaf_log_marginal(&stats.zero, h.sigma_theta0)
        + beta_leaf_log_marginal(&stats.beta, kappa, h.alpha_g, h.beta_g)
}

/// Tree prior plus every leaf's integrated likelihood, up to a constant
/// shared by all trees evaluated against the same partial fits.
pub fn tree_log_posterior(
    tree: &Tree,
    stats: &[(NodeId, LeafSuffStats)],
    h: &Hyperparams,
    kappa: f64,
) -> f64 {
    tree_log_prior(tree, h)
        + stats
            .iter()
            .map(|(_, s)| leaf_log_marginal(s, h, kappa))
            .sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Dataset, Matrix};
    use crate::forest::{leaf_sufficient_stats, LeafParams, SplitRule};
    use hobz_testkit::log_integrate;
    use proptest::prelude::*;

    fn probit_stats(r: &[f64]) -> ProbitStats {
        let mut s = ProbitStats::default();
        r.iter().for_each(|&v| s.push(v));
        s
    }

    /// `ln of the integral over theta of prod N(r_i | theta, 1) N(theta | 0, sigma^2)`.
    fn probit_oracle(r: &[f64], sigma: f64) -> f64 {
        let log_f = |th: f64| {
            let lik: f64 = r
                .iter()
                .map(|x| -0.5 * LN_2PI - 0.5 * (x - th).powi(2))
                .sum();
            lik - 0.5 * LN_2PI - sigma.ln() - 0.5 * (th / sigma).powi(2)
        };
        log_integrate(log_f, -60.0, 60.0, 1e-14)
    }

    /// Integral over lambda of the approximate Beta likelihood times the
    /// Gamma prior, on the log-lambda scale.
    fn beta_oracle(rows: &[(f64, f64)], kappa: f64, ag: f64, bg: f64) -> f64 {
        let log_f = |u: f64| {
            let lam = u.exp();
            let mut s = 0.0;
            for &(y, eta) in rows {
                let a = kappa * lam * eta;
                s += kappa * a.ln() - ln_gamma(kappa)
                    + (a - 1.0) * y.ln()
                    + (kappa - 1.0) * (1.0 - y).ln();
            }
            // Gamma(shape ag, rate bg) density times the Jacobian lam
            s + ag * bg.ln() - ln_gamma(ag) + (ag - 1.0) * u - bg * lam + u
        };
        log_integrate(log_f, -250.0, 12.0, 1e-13)
    }

    #[test]
    fn probit_empty_leaf_is_zero() {
        assert_eq!(probit_leaf_log_marginal(&ProbitStats::default(), 0.3), 0.0);
    }

    #[test]
    fn probit_single_zero_residual() {
        let v = probit_leaf_log_marginal(&probit_stats(&[0.0]), 1.0);
        let expect = -0.5 * (4.0 * std::f64::consts::PI).ln();
        assert!((v - expect).abs() < 1e-14);
        assert!((v + 1.2655).abs() < 1e-4);
        assert!((probit_oracle(&[0.0], 1.0) - expect).abs() < 1e-10);
    }

    #[test]
    fn probit_two_rows_match_quadrature() {
        let r = [0.5, -0.5];
        let v = probit_leaf_log_marginal(&probit_stats(&r), 1.0);
        let o = probit_oracle(&r, 1.0);
        assert!(((v - o) / o).abs() < 1e-10, "{v} vs {o}");
    }

    #[test]
    fn beta_fn_kappa_one_is_exact() {
        for &lam in &[0.1, 1.8, 7.0, 100.0] {
            let r = beta_inv_fn(1.0, lam).unwrap();
            assert_eq!(r.rel_error, 0.0);
            assert!((r.exact_inv_b - lam).abs() < 1e-10 * lam);
        }
    }

    #[test]
    fn beta_fn_kappa_two_reference() {
        let r = beta_inv_fn(2.0, 10.0).unwrap();
        assert!((r.exact_inv_b - 420.0).abs() < 1e-9);
        assert!((r.approx_inv_b - 400.0).abs() < 1e-9);
        assert!((r.rel_error - 1.0 / 21.0).abs() < 1e-12);
    }

    #[test]
    fn beta_fn_error_decays_like_inverse_lambda() {
        // at kappa = 2 the relative error is exactly 1 / (2 lambda + 1)
        for &lam in &[2.0, 4.0, 8.0, 16.0, 32.0] {
            let r = beta_inv_fn(2.0, lam).unwrap();
            assert!((r.rel_error - 1.0 / (2.0 * lam + 1.0)).abs() < 1e-12);
            assert!(r.rel_error * lam < 0.5);
        }
    }

    #[test]
    fn beta_fn_rejects_nonpositive() {
        assert!(beta_inv_fn(0.0, 1.0).is_err());
        assert!(beta_inv_fn(1.0, -1.0).is_err());
    }

    #[test]
    fn beta_leaf_reference_value() {
        let v = beta_leaf_log_marginal_rows(&[(0.5, 1.0)], 2.0, 0.5, 0.15).unwrap();
        let expect = 4f64.ln() + 0.5 * 0.15f64.ln() - ln_gamma(0.5) + ln_gamma(2.5)
            - 2.5 * (0.15 + 2.0 * 2f64.ln()).ln();
        assert!((v - expect).abs() < 1e-13);
        assert!((v + 0.9235).abs() < 1e-3);
        let o = beta_oracle(&[(0.5, 1.0)], 2.0, 0.5, 0.15);
        assert!(((v - o) / o).abs() < 1e-8, "{v} vs {o}");
    }

    #[test]
    fn beta_leaf_two_rows_match_quadrature() {
        let rows = [(0.5, 1.0), (0.25, 1.0)];
        let v = beta_leaf_log_marginal_rows(&rows, 2.0, 0.5, 0.15).unwrap();
        let o = beta_oracle(&rows, 2.0, 0.5, 0.15);
        assert!(((v - o) / o).abs() < 1e-8, "{v} vs {o}");
    }

    #[test]
    fn beta_leaf_empty_and_invalid() {
        assert_eq!(beta_leaf_log_marginal_rows(&[], 2.0, 0.5, 0.15).unwrap(), 0.0);
        assert!(beta_leaf_log_marginal_rows(&[(1.0, 1.0)], 2.0, 0.5, 0.15).is_err());
        assert!(beta_leaf_log_marginal_rows(&[(0.0, 1.0)], 2.0, 0.5, 0.15).is_err());
    }

    #[test]
    fn stump_on_empty_data_is_prior() {
        let h = Hyperparams::new(10);
        let d = Dataset::empty(2);
        let t = Tree::stump(LeafParams::default());
        let s = leaf_sufficient_stats(&t, &d, &[], &[], &[], 2.0);
        assert_eq!(tree_log_posterior(&t, &s, &h, 2.0), tree_log_prior(&t, &h));
    }

    #[test]
    fn separating_split_beats_stump() {
        let h = Hyperparams::new(1);
        let n = 10;
        let rows: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64]).collect();
        let y: Vec<f64> = (0..n).map(|i| if i < n / 2 { 1.0 } else { 0.0 }).collect();
        let d = Dataset::new(Matrix::from_rows(&rows).unwrap(), y.clone()).unwrap();
        let r1: Vec<f64> = y.iter().map(|&v| if v == 1.0 { 1.0 } else { -1.0 }).collect();
        let r0 = vec![1.0; n];
        let eta = vec![1.0; n];
        let stump = Tree::stump(LeafParams::default());
        let mut split = stump.clone();
        split.grow(
            0,
            SplitRule { var: 0, cut: 4.0 },
            LeafParams::default(),
            LeafParams::default(),
        );
        let score = |t: &Tree| {
            let s = leaf_sufficient_stats(t, &d, &r1, &r0, &eta, 2.0);
            tree_log_posterior(t, &s, &h, 2.0)
        };
        assert!(score(&split) > score(&stump));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]

        #[test]
        fn probit_matches_quadrature(
            r in prop::collection::vec(-3.0f64..3.0, 1..=20),
            sigma in 0.1f64..3.0,
        ) {
            let v = probit_leaf_log_marginal(&probit_stats(&r), sigma);
            let o = probit_oracle(&r, sigma);
            prop_assert!(((v - o) / o).abs() < 1e-8, "{} vs {}", v, o);
        }

        #[test]
        fn beta_matches_quadrature(
            rows in prop::collection::vec((0.02f64..0.98, 0.3f64..3.0), 1..=10),
            kappa in 0.5f64..8.0,
        ) {
            let v = beta_leaf_log_marginal_rows(&rows, kappa, 0.5, 0.15).unwrap();
            let o = beta_oracle(&rows, kappa, 0.5, 0.15);
            prop_assert!(((v - o) / o.abs().max(1.0)).abs() < 1e-6, "{} vs {}", v, o);
        }

        #[test]
        fn marginals_ignore_row_order(
            rows in prop::collection::vec((0.02f64..0.98, 0.3f64..3.0), 2..=10),
        ) {
            let a = beta_leaf_log_marginal_rows(&rows, 2.0, 0.5, 0.15).unwrap();
            let mut rev = rows.clone();
            rev.reverse();
            let b = beta_leaf_log_marginal_rows(&rev, 2.0, 0.5, 0.15).unwrap();
            prop_assert!((a - b).abs() < 1e-10 * a.abs().max(1.0));
        }
    }
}
