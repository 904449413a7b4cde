use nalgebra::{Cholesky, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Matrix};
use crate::dist::truncated_unit_normal;
use crate::error::{HobzError, Result};
use crate::forest::Hyperparams;
use crate::sampler::{draw_kappa, ChainDiagnostics, ChainMeta, ComponentDraws, PosteriorDraws, Schedule};

/// Priors and tuning for the linear baseline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearConfig {
    /// Prior SD of every regression coefficient.
    pub coef_sd: f64,
    pub alpha_kappa: f64,
    pub beta_kappa: f64,
    pub kappa_slice_width: f64,
    /// Initial random-walk step for the log-linear coefficients.
    pub initial_step: f64,
    /// Acceptance rate targeted while adapting steps during burn-in.
    pub target_acceptance: f64,
}

impl Default for LinearConfig {
    fn default() -> Self {
        let h = Hyperparams::new(1);
        LinearConfig {
            coef_sd: 10.0,
            alpha_kappa: h.alpha_kappa,
            beta_kappa: h.beta_kappa,
            kappa_slice_width: h.kappa_slice_width,
            initial_step: 0.1,
            target_acceptance: 0.44,
        }
    }
}

/// Kept draws of the linear baseline plus its coefficient chains.
///
/// Coefficient vectors start with the intercept; each field is draw-major
/// with `p + 1` entries per draw.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearHobzFit {
    pub draws: PosteriorDraws,
    pub dim: usize,
    pub beta_one: Vec<f64>,
    pub beta_zero: Vec<f64>,
    pub beta_mu: Vec<f64>,
}

impl LinearHobzFit {
    /// Posterior mean of a draw-major coefficient chain.
    pub fn mean_of(&self, chain: &[f64]) -> Vec<f64> {
        column_stats(chain, self.dim).0
    }

    /// Posterior SD of a draw-major coefficient chain.
    pub fn sd_of(&self, chain: &[f64]) -> Vec<f64> {
        column_stats(chain, self.dim).1
    }
}

fn column_stats(chain: &[f64], dim: usize) -> (Vec<f64>, Vec<f64>) {
    let l = chain.len() / dim.max(1);
    let mut m = vec![0.0; dim];
    let mut s = vec![0.0; dim];
    if l == 0 {
        return (m, s);
    }
    for row in chain.chunks(dim) {
        for j in 0..dim {
            m[j] += row[j];
        }
    }
    m.iter_mut().for_each(|v| *v /= l as f64);
    for row in chain.chunks(dim) {
        for j in 0..dim {
            s[j] += (row[j] - m[j]).powi(2);
        }
    }
    let denom = (l.max(2) - 1) as f64;
    s.iter_mut().for_each(|v| *v = (*v / denom).sqrt());
    (m, s)
}

fn design(x: &Matrix) -> DMatrix<f64> {
    DMatrix::from_fn(x.rows(), x.cols() + 1, |i, j| if j == 0 { 1.0 } else { x.get(i, j - 1) })
}

/// Gaussian regression of latent `z` on `z_design`, prior `N(0, s^2 I)`.
struct ConjugateNormal {
    design: DMatrix<f64>,
    chol: Cholesky<f64, nalgebra::Dyn>,
}

impl ConjugateNormal {
    fn new(design: DMatrix<f64>, coef_sd: f64) -> Result<Self> {
        let d = design.ncols();
        let precision = design.tr_mul(&design) + DMatrix::identity(d, d) / (coef_sd * coef_sd);
        let chol = Cholesky::new(precision)
            .ok_or_else(|| HobzError::numeric("coefficient precision is not positive definite"))?;
        Ok(ConjugateNormal { design, chol })
    }

    fn draw<R: Rng + ?Sized>(&self, z: &DVector<f64>, rng: &mut R) -> DVector<f64> {
        let mean = self.chol.solve(&self.design.tr_mul(z));
        let eps = DVector::from_fn(mean.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
        let noise = self
            .chol
            .l()
            .transpose()
            .solve_upper_triangular(&eps)
            .expect("Cholesky factor has a positive diagonal");
        mean + noise
    }
}

/// Linear-predictor analogue of the tree ensemble: probit regressions for
/// the two point masses and a log-linear model for the interior mean.
pub fn fit_linear_hobz(
    data: &Dataset,
    test_x: Option<&Matrix>,
    schedule: &Schedule,
    cfg: &LinearConfig,
) -> Result<LinearHobzFit> {
    schedule.validate()?;
    if !(cfg.coef_sd > 0.0 && cfg.initial_step > 0.0) {
        return Err(HobzError::validation("coefficient prior SD and step must be positive"));
    }
    if let Some(tx) = test_x {
        if tx.cols() != data.p() {
            return Err(HobzError::validation(format!(
                "test covariates have {} columns, training data has {}",
                tx.cols(),
                data.p()
            )));
        }
    }
    let n = data.n();
    let dim = data.p() + 1;
    let z_all = design(data.x());
    if n < dim {
        return Err(HobzError::validation(format!(
            "{n} rows cannot identify {dim} coefficients"
        )));
    }
    let sv = z_all.clone().svd(false, false).singular_values;
    let smax = sv.max();
    if sv.min() <= 1e-10 * smax.max(1.0) {
        return Err(HobzError::validation(
            "design matrix with intercept is rank deficient",
        ));
    }

    let below: Vec<usize> = (0..n).filter(|&i| !data.is_one(i)).collect();
    let interior: Vec<usize> = (0..n).filter(|&i| data.is_interior(i)).collect();
    let one_model = ConjugateNormal::new(z_all.clone(), cfg.coef_sd)?;
    let zero_model = ConjugateNormal::new(z_all.select_rows(below.iter()), cfg.coef_sd)?;
    let z_int = z_all.select_rows(interior.iter());
    let log_y_int: Vec<f64> = interior.iter().map(|&i| data.log_y(i)).collect();
    let data_int = data.subset(&interior);

    let mut rng = ChaCha8Rng::seed_from_u64(schedule.seed);
    let mut b1 = DVector::zeros(dim);
    let mut b0 = DVector::zeros(dim);
    let mut bm = DVector::zeros(dim);
    let mut kappa = 1.0;
    let mut eta_m = vec![0.0; interior.len()];
    let mut steps = vec![cfg.initial_step; dim];
    let mut accepted = vec![0usize; dim];
    let mut latent1 = DVector::zeros(n);
    let mut latent0 = DVector::zeros(below.len());
    const ADAPT_EVERY: usize = 25;

    let prior_var = cfg.coef_sd * cfg.coef_sd;
    let kappa_loglik = |eta: &[f64], kappa: f64| -> f64 {
        eta.iter()
            .zip(&log_y_int)
            .map(|(e, ly)| kappa * e + kappa * e.exp() * ly)
            .sum()
    };

    let n_test = test_x.map_or(0, |m| m.rows());
    let test_design = test_x.map(design);
    let kept = schedule.kept();
    let mut train = ComponentDraws::new(n);
    let mut test = ComponentDraws::new(n_test);
    let mut kappas = Vec::with_capacity(kept);
    let (mut c1, mut c0, mut cm) = (Vec::new(), Vec::new(), Vec::new());

    for it in 0..schedule.iterations {
        let f1 = &z_all * &b1;
        for i in 0..n {
            latent1[i] = truncated_unit_normal(f1[i], data.is_one(i), &mut rng);
        }
        b1 = one_model.draw(&latent1, &mut rng);

        let f0 = &zero_model.design * &b0;
        for (k, &i) in below.iter().enumerate() {
            latent0[k] = truncated_unit_normal(f0[k], data.is_zero(i), &mut rng);
        }
        b0 = zero_model.draw(&latent0, &mut rng);

        let mut cur = kappa_loglik(&eta_m, kappa);
        for j in 0..dim {
            let delta = steps[j] * rng.sample::<f64, _>(StandardNormal);
            let prop: Vec<f64> = eta_m
                .iter()
                .enumerate()
                .map(|(r, e)| e + delta * z_int[(r, j)])
                .collect();
            let new = kappa_loglik(&prop, kappa);
            let old_b = bm[j];
            let new_b = old_b + delta;
            let log_ratio = new - cur - (new_b * new_b - old_b * old_b) / (2.0 * prior_var);
            if rng.random::<f64>().ln() < log_ratio {
                bm[j] = new_b;
                eta_m = prop;
                cur = new;
                accepted[j] += 1;
            }
        }
        if it < schedule.burn_in && (it + 1) % ADAPT_EVERY == 0 {
            for j in 0..dim {
                let rate = accepted[j] as f64 / ADAPT_EVERY as f64;
                steps[j] *= if rate > cfg.target_acceptance { 1.2 } else { 1.0 / 1.2 };
                accepted[j] = 0;
            }
        }

        kappa = draw_kappa(
            kappa,
            &data_int,
            &eta_m,
            cfg.alpha_kappa,
            cfg.beta_kappa,
            cfg.kappa_slice_width,
            &mut rng,
        );

        if !schedule.keeps(it) {
            continue;
        }
        kappas.push(kappa);
        c1.extend(b1.iter());
        c0.extend(b0.iter());
        cm.extend(bm.iter());
        let tf1 = &z_all * &b1;
        let tf0 = &z_all * &b0;
        let tfb: Vec<f64> = (&z_all * &bm).iter().map(|e| e.exp()).collect();
        check_fb(&tfb, it)?;
        train.push_draw(tf1.as_slice(), tf0.as_slice(), &tfb);
        if let Some(td) = &test_design {
            let tf1 = td * &b1;
            let tf0 = td * &b0;
            let tfb: Vec<f64> = (td * &bm).iter().map(|e| e.exp()).collect();
            check_fb(&tfb, it)?;
            test.push_draw(tf1.as_slice(), tf0.as_slice(), &tfb);
        }
    }

    Ok(LinearHobzFit {
        draws: PosteriorDraws {
            meta: ChainMeta {
                seed: schedule.seed,
                iterations: schedule.iterations as u64,
                burn_in: schedule.burn_in as u64,
                thin: schedule.thin as u64,
                num_trees: 0,
                config_hash: 0,
            },
            kappa: kappas,
            train,
            test,
            diagnostics: ChainDiagnostics::default(),
        },
        dim,
        beta_one: c1,
        beta_zero: c0,
        beta_mu: cm,
    })
}

fn check_fb(fb: &[f64], it: usize) -> Result<()> {
    if fb.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(HobzError::numeric(format!(
            "linear f_b left the positive finite range at iteration {it}"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::{interior_beta, norm_cdf};

    fn linear_data(n: usize, b1: &[f64], b0: &[f64], bm: &[f64], kappa: f64, seed: u64) -> Dataset {
        let p = b1.len() - 1;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut xs = Vec::with_capacity(n * p);
        let mut y = Vec::with_capacity(n);
        for _ in 0..n {
            let x: Vec<f64> = (0..p).map(|_| rng.sample(StandardNormal)).collect();
            let lin = |b: &[f64]| b[0] + x.iter().zip(&b[1..]).map(|(a, c)| a * c).sum::<f64>();
            y.push(if rng.random::<f64>() < norm_cdf(lin(b1)) {
                1.0
            } else if rng.random::<f64>() < norm_cdf(lin(b0)) {
                0.0
            } else {
                interior_beta(kappa * lin(bm).exp(), kappa, &mut rng)
            });
            xs.extend(x);
        }
        Dataset::new(Matrix::new(xs, n, p).unwrap(), y).unwrap()
    }

    #[test]
    fn rejects_rank_deficiency() {
        let x = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0], vec![3.0, 6.0], vec![4.0, 8.0]]).unwrap();
        let d = Dataset::new(x, vec![0.0, 0.5, 1.0, 0.2]).unwrap();
        let err = fit_linear_hobz(&d, None, &Schedule::default(), &LinearConfig::default());
        assert!(matches!(err, Err(HobzError::Validation(_))));
        let c = Matrix::from_rows(&[vec![1.0], vec![1.0], vec![1.0]]).unwrap();
        let d = Dataset::new(c, vec![0.0, 0.5, 1.0]).unwrap();
        assert!(fit_linear_hobz(&d, None, &Schedule::default(), &LinearConfig::default()).is_err());
    }

    #[test]
    fn deterministic_and_shaped() {
        let d = linear_data(60, &[0.0, 0.5], &[0.0, -0.5], &[1.0, 0.3], 5.0, 1);
        let s = Schedule {
            iterations: 40,
            burn_in: 20,
            thin: 2,
            seed: 3,
        };
        let tx = Matrix::from_rows(&[vec![0.0], vec![1.0]]).unwrap();
        let a = fit_linear_hobz(&d, Some(&tx), &s, &LinearConfig::default()).unwrap();
        let b = fit_linear_hobz(&d, Some(&tx), &s, &LinearConfig::default()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.draws.num_draws(), 10);
        assert_eq!(a.beta_mu.len(), 20);
        a.draws.validate().unwrap();
        // train row values agree with the coefficients
        let (f1, _, fb) = a.draws.test.get(0, 1);
        assert!((f1 - (a.beta_one[0] + a.beta_one[1])).abs() < 1e-12);
        assert!((fb.ln() - (a.beta_mu[0] + a.beta_mu[1])).abs() < 1e-12);
    }

    #[test]
    fn recovers_generator_coefficients() {
        let b1 = [-0.3, 0.5, -0.4, 0.2];
        let b0 = [-0.2, 0.4, 0.3, -0.5];
        let bm = [1.5, 0.3, -0.3, 0.2];
        let d = linear_data(1000, &b1, &b0, &bm, 5.0, 7);
        let s = Schedule {
            iterations: 3000,
            burn_in: 1000,
            thin: 1,
            seed: 11,
        };
        let fit = fit_linear_hobz(&d, None, &s, &LinearConfig::default()).unwrap();
        for (chain, truth) in [(&fit.beta_one, &b1), (&fit.beta_zero, &b0), (&fit.beta_mu, &bm)] {
            let m = fit.mean_of(chain);
            for (a, b) in m.iter().zip(truth.iter()) {
                assert!((a - b).abs() < 0.15, "{m:?} vs {truth:?}");
            }
        }
        let km = fit.draws.kappa.iter().sum::<f64>() / fit.draws.kappa.len() as f64;
        assert!((km - 5.0).abs() < 1.0, "kappa {km}");
    }

    #[test]
    fn null_signal_concentrates_near_zero() {
        let zero = [0.0, 0.0, 0.0];
        let d = linear_data(600, &zero, &zero, &[1.5, 0.0, 0.0], 5.0, 9);
        let s = Schedule {
            iterations: 2000,
            burn_in: 500,
            thin: 1,
            seed: 4,
        };
        let fit = fit_linear_hobz(&d, None, &s, &LinearConfig::default()).unwrap();
        for chain in [&fit.beta_one, &fit.beta_zero, &fit.beta_mu] {
            let m = fit.mean_of(chain);
            let sd = fit.sd_of(chain);
            for j in 1..3 {
                assert!(m[j].abs() < 2.0 * sd[j], "{m:?} {sd:?}");
            }
        }
    }
}
