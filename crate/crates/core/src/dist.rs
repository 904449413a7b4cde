//! Scalar distribution helpers shared by the sampler, the generators and
//! the prediction code.

use rand::Rng;
use rand_distr::{Beta, Distribution, Exp, StandardNormal};
use statrs::function::erf::erfc;

pub use statrs::function::gamma::ln_gamma;

/// Standard normal CDF, accurate in both tails.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Draw `z ~ N(0, 1)` conditioned on `z > lower`.
///
/// Plain rejection when the bound sits at or below the mode, otherwise the
/// exponential-proposal rejection sampler of Robert (1995) with the optimal
/// rate, which stays efficient arbitrarily deep in the tail.
pub fn std_normal_above<R: Rng + ?Sized>(lower: f64, rng: &mut R) -> f64 {
    if lower <= 0.0 {
        loop {
            let z: f64 = rng.sample(StandardNormal);
            if z > lower {
                return z;
            }
        }
    }
    let rate = 0.5 * (lower + (lower * lower + 4.0).sqrt());
    let exp = Exp::new(rate).expect("rate is positive");
    loop {
        let z = lower + exp.sample(rng);
        let u: f64 = rng.random();
        let d = z - rate;
        if u.ln() <= -0.5 * d * d {
            return z;
        }
    }
}

/// Draw from `N(mean, 1)` restricted to `(0, inf)` when `positive`, else to `(-inf, 0)`.
pub fn truncated_unit_normal<R: Rng + ?Sized>(mean: f64, positive: bool, rng: &mut R) -> f64 {
    if positive {
        let x = mean + std_normal_above(-mean, rng);
        // mean + z can round to exactly 0 when |mean| dwarfs z
        if x > 0.0 {
            x
        } else {
            f64::MIN_POSITIVE
        }
    } else {
        let x = mean - std_normal_above(mean, rng);
        if x < 0.0 {
            x
        } else {
            -f64::MIN_POSITIVE
        }
    }
}

const MAX_BETA_REDRAWS: usize = 10_000;

/// Draw from `Beta(a, b)` restricted to the open interval.
///
/// Boundary values produced by floating-point underflow are redrawn; if the
/// parameters are so extreme that every redraw lands on a boundary, the draw
/// is nudged to the nearest representable interior value.
pub fn interior_beta<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> f64 {
    let beta = Beta::new(a, b).expect("beta shapes must be positive and finite");
    let mut last = 0.5;
    for _ in 0..MAX_BETA_REDRAWS {
        let v: f64 = beta.sample(rng);
        if v > 0.0 && v < 1.0 {
            return v;
        }
        last = v;
    }
    if last <= 0.0 {
        f64::MIN_POSITIVE
    } else {
        1.0 - f64::EPSILON / 2.0
    }
}

/// Log of the Beta function, `ln B(a, b)`.
pub fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// Log density of `Beta(a, b)` at `y`, given precomputed `ln y` and `ln(1 - y)`.
#[inline]
pub fn beta_log_density(a: f64, b: f64, log_y: f64, log1m_y: f64) -> f64 {
    (a - 1.0) * log_y + (b - 1.0) * log1m_y - ln_beta(a, b)
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation with the `n - 1` denominator.
pub fn sample_sd(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let ss: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
    (ss / (xs.len() - 1) as f64).sqrt()
}

/// Linear-interpolation quantile (Hyndman-Fan type 7) of unsorted data.
pub fn quantile(xs: &[f64], prob: f64) -> f64 {
    let mut sorted = xs.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    quantile_sorted(&sorted, prob)
}

pub fn quantile_sorted(sorted: &[f64], prob: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        n => {
            let h = (n - 1) as f64 * prob.clamp(0.0, 1.0);
            let lo = h.floor() as usize;
            let hi = (lo + 1).min(n - 1);
            sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn norm_cdf_reference_values() {
        assert!((norm_cdf(0.0) - 0.5).abs() < 1e-15);
        assert!((norm_cdf(1.959963984540054) - 0.975).abs() < 1e-10);
        // far tail keeps relative accuracy
        let t = norm_cdf(-10.0);
        assert!((t / 7.619853024160527e-24 - 1.0).abs() < 1e-9);
    }

    #[test]
    fn truncated_draws_respect_sign() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for &m in &[-10.0, -3.0, 0.0, 2.0, 10.0] {
            for _ in 0..2000 {
                assert!(truncated_unit_normal(m, true, &mut rng) > 0.0);
                assert!(truncated_unit_normal(m, false, &mut rng) < 0.0);
            }
        }
    }

    #[test]
    fn deep_tail_truncated_mean() {
        // E[z | z > a] = phi(a) / (1 - Phi(a))
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = 6.0;
        let n = 200_000;
        let m: f64 = (0..n).map(|_| std_normal_above(a, &mut rng)).sum::<f64>() / n as f64;
        let pdf = (-0.5 * a * a).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let expected = pdf / norm_cdf(-a);
        assert!((m - expected).abs() < 0.005, "{m} vs {expected}");
    }

    #[test]
    fn quantile_type7() {
        let xs = [4.0, 1.0, 3.0, 2.0];
        assert_eq!(quantile(&xs, 0.0), 1.0);
        assert_eq!(quantile(&xs, 1.0), 4.0);
        assert!((quantile(&xs, 0.5) - 2.5).abs() < 1e-15);
        assert!((quantile(&xs, 0.2) - 1.6).abs() < 1e-12);
    }

    #[test]
    fn interior_beta_never_hits_boundary() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let v = interior_beta(1e-3, 1e-3, &mut rng);
            assert!(v > 0.0 && v < 1.0);
        }
    }
}
