use rand::Rng;
use rand_distr::{Distribution, Gamma};

use crate::data::Dataset;
use crate::dist::beta_log_density;

/// One univariate slice-sampling update with stepping out and shrinkage.
///
/// `width` is the initial bracket and `max_steps` caps the total number of
/// step-out expansions. `log_f(x0)` must be finite.
pub fn slice_sample<R, F>(x0: f64, log_f: F, width: f64, max_steps: usize, rng: &mut R) -> f64
where
    R: Rng + ?Sized,
    F: Fn(f64) -> f64,
{
    let f0 = log_f(x0);
    debug_assert!(f0.is_finite());
    let level = f0 + rng.random::<f64>().ln();
    let mut lo = x0 - width * rng.random::<f64>();
    let mut hi = lo + width;
    let mut left_steps = (max_steps as f64 * rng.random::<f64>()) as usize;
    let mut right_steps = max_steps.saturating_sub(1 + left_steps);
    while left_steps > 0 && log_f(lo) > level {
        lo -= width;
        left_steps -= 1;
    }
    while right_steps > 0 && log_f(hi) > level {
        hi += width;
        right_steps -= 1;
    }
    loop {
        let x1 = lo + rng.random::<f64>() * (hi - lo);
        if log_f(x1) > level {
            return x1;
        }
        if x1 < x0 {
            lo = x1;
        } else {
            hi = x1;
        }
        if hi - lo < 1e-12 * (1.0 + x0.abs()) {
            return x0;
        }
    }
}

pub(crate) const MAX_STEP_OUT: usize = 50;

/// Log full conditional of `u = ln kappa`, including the Jacobian, up to a
/// constant. Uses the exact Beta normaliser.
pub fn kappa_log_conditional(
    u: f64,
    data: &Dataset,
    log_fb: &[f64],
    alpha_kappa: f64,
    beta_kappa: f64,
) -> f64 {
    let kappa = u.exp();
    if !(kappa > 0.0 && kappa.is_finite()) {
        return f64::NEG_INFINITY;
    }
    let mut s = alpha_kappa * u - beta_kappa * kappa;
    for i in 0..data.n() {
        if data.is_interior(i) {
            let a = (u + log_fb[i]).exp();
            if !a.is_finite() || a <= 0.0 {
                return f64::NEG_INFINITY;
            }
            s += beta_log_density(a, kappa, data.log_y(i), data.log1m_y(i));
        }
    }
    if s.is_nan() {
        f64::NEG_INFINITY
    } else {
        s
    }
}

/// Draw `kappa` from its full conditional given the current `f_b`.
///
/// Falls back to the `Gamma(alpha_kappa, beta_kappa)` prior when there are no
/// interior rows. If the current value has zero density (only possible after
/// numeric overflow in `f_b`), `kappa` is returned unchanged.
pub fn draw_kappa<R: Rng + ?Sized>(
    kappa: f64,
    data: &Dataset,
    log_fb: &[f64],
    alpha_kappa: f64,
    beta_kappa: f64,
    width: f64,
    rng: &mut R,
) -> f64 {
    if data.count(crate::data::Category::Interior) == 0 {
        let g = Gamma::new(alpha_kappa, 1.0 / beta_kappa).expect("valid kappa prior");
        loop {
            let k: f64 = g.sample(rng);
            if k > 0.0 && k.is_finite() {
                return k;
            }
        }
    }
    let f = |u: f64| kappa_log_conditional(u, data, log_fb, alpha_kappa, beta_kappa);
    let u0 = kappa.ln();
    if !f(u0).is_finite() {
        return kappa;
    }
    slice_sample(u0, f, width, MAX_STEP_OUT, rng).exp()
}
