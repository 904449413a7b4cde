//! Reference numerics for tests: adaptive quadrature, Kolmogorov-Smirnov,
//! batch-means standard errors.
//!
//! Nothing here is shared with the library, so agreement between the two is
//! meaningful.

use statrs::distribution::{ChiSquared, ContinuousCDF};

// 7-point Gauss / 15-point Kronrod nodes and weights on [-1, 1].
const XK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WK[7] * fc;
    let mut g = WG[3] * fc;
    for j in 0..7 {
        let dx = h * XK[j];
        let s = f(c - dx) + f(c + dx);
        k += WK[j] * s;
        if j % 2 == 1 {
            g += WG[j / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

/// Globally adaptive Gauss-Kronrod integration of `f` over `[a, b]`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, rel_tol: f64) -> f64 {
    let (v, e) = gk15(&f, a, b);
    let mut pieces = vec![(a, b, v, e)];
    for _ in 0..5000 {
        let total: f64 = pieces.iter().map(|p| p.2).sum();
        let err: f64 = pieces.iter().map(|p| p.3).sum();
        if err <= rel_tol * total.abs() || err < 1e-300 {
            return total;
        }
        let (idx, _) = pieces
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .unwrap();
        let (lo, hi, _, _) = pieces.swap_remove(idx);
        let mid = 0.5 * (lo + hi);
        let (v1, e1) = gk15(&f, lo, mid);
        let (v2, e2) = gk15(&f, mid, hi);
        pieces.push((lo, mid, v1, e1));
        pieces.push((mid, hi, v2, e2));
    }
    pieces.iter().map(|p| p.2).sum()
}

/// `ln of the integral of exp(log_f)` over `[a, b]`.
///
/// The integrand is rescaled by its maximum on a dense grid so that values
/// far below `f64::MIN_POSITIVE` still integrate accurately.
pub fn log_integrate<F: Fn(f64) -> f64>(log_f: F, a: f64, b: f64, rel_tol: f64) -> f64 {
    let m = (0..=4000)
        .map(|k| log_f(a + (b - a) * k as f64 / 4000.0))
        .fold(f64::NEG_INFINITY, f64::max);
    m + integrate(|x| (log_f(x) - m).exp(), a, b, rel_tol).ln()
}

/// Two-sided one-sample Kolmogorov-Smirnov test. Returns `(D, p)`.
pub fn ks_test<F: Fn(f64) -> f64>(sample: &[f64], cdf: F) -> (f64, f64) {
    let mut xs = sample.to_vec();
    xs.sort_by(|a, b| a.total_cmp(b));
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    let sq = n.sqrt();
    let lam = (sq + 0.12 + 0.11 / sq) * d;
    (d, kolmogorov_q(lam))
}

fn kolmogorov_q(lam: f64) -> f64 {
    if lam < 1e-3 {
        return 1.0;
    }
    let mut s = 0.0;
    for j in 1..=200 {
        let j = j as f64;
        let term = 2.0 * (-1f64).powf(j - 1.0) * (-2.0 * j * j * lam * lam).exp();
        s += term;
        if term.abs() < 1e-16 {
            break;
        }
    }
    s.clamp(0.0, 1.0)
}

/// Mean and batch-means standard error of an autocorrelated series.
pub fn batch_means(xs: &[f64], batches: usize) -> (f64, f64) {
    let n = xs.len();
    let size = n / batches;
    assert!(size >= 1, "too few samples for {batches} batches");
    let means: Vec<f64> = (0..batches)
        .map(|b| xs[b * size..(b + 1) * size].iter().sum::<f64>() / size as f64)
        .collect();
    let m = xs.iter().sum::<f64>() / n as f64;
    let bm = means.iter().sum::<f64>() / batches as f64;
    let var = means.iter().map(|v| (v - bm).powi(2)).sum::<f64>() / (batches - 1) as f64;
    (m, (var / batches as f64).sqrt())
}

/// Upper-tail p-value of Pearson's chi-square for observed counts against
/// expected probabilities. Cells with expectation below 5 are pooled into
/// their neighbour.
pub fn chi_square_p(observed: &[usize], probs: &[f64]) -> f64 {
    let n: usize = observed.iter().sum();
    let mut cells: Vec<(f64, f64)> = Vec::new();
    let (mut o, mut e) = (0.0, 0.0);
    for (&ob, &p) in observed.iter().zip(probs) {
        o += ob as f64;
        e += p * n as f64;
        if e >= 5.0 {
            cells.push((o, e));
            o = 0.0;
            e = 0.0;
        }
    }
    if let Some(last) = cells.last_mut() {
        last.0 += o;
        last.1 += e;
    }
    let stat: f64 = cells.iter().map(|(o, e)| (o - e).powi(2) / e).sum();
    let df = (cells.len() - 1).max(1) as f64;
    1.0 - ChiSquared::new(df).unwrap().cdf(stat)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_integral() {
        let v = integrate(|x| (-x * x / 2.0).exp(), -40.0, 40.0, 1e-13);
        assert!((v / (2.0 * std::f64::consts::PI).sqrt() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn log_integral_of_tiny_function() {
        let v = log_integrate(|x| -1000.0 - x * x / 2.0, -30.0, 30.0, 1e-13);
        let expect = -1000.0 + 0.5 * (2.0 * std::f64::consts::PI).ln();
        assert!((v - expect).abs() < 1e-11);
    }

    #[test]
    fn ks_uniform_grid_passes() {
        let xs: Vec<f64> = (0..1000).map(|i| (i as f64 + 0.5) / 1000.0).collect();
        let (_, p) = ks_test(&xs, |x| x);
        assert!(p > 0.99);
    }
}
