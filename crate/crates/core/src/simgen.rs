//! Synthetic data from the sequential hurdle with known truth.
//!
//! Covariates are drawn from `N(0, Sigma)`, mapped through a list of design
//! terms, and combined with three coefficient vectors into the mass-at-one
//! probability, the mass-at-zero probability and the interior Beta mean.
//! The emitted dataset carries only the base covariates; the design terms
//! stay hidden, so models must discover them.

use nalgebra::{Cholesky, DMatrix};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Matrix};
use crate::dist::{interior_beta, norm_cdf};
use crate::error::{HobzError, Result};

/// One column of the generating design, evaluated on a base covariate row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Term {
    /// Product of the listed base columns; a single index is a main effect.
    Product(Vec<usize>),
    Sine(usize),
}

impl Term {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Term::Product(idx) => idx.iter().map(|&j| x[j]).product(),
            Term::Sine(j) => x[*j].sin(),
        }
    }

    fn max_index(&self) -> usize {
        match self {
            Term::Product(idx) => idx.iter().copied().max().unwrap_or(0),
            Term::Sine(j) => *j,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Covariance {
    Identity,
    /// Row-major `p x p` positive-definite matrix.
    Dense(Vec<f64>),
}

/// Randomised two-arm assignment with additive effects on the three
/// linear predictors of the first arm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArmSpec {
    /// Probability that a row joins the first arm.
    pub share: f64,
    pub delta_one: f64,
    pub delta_zero: f64,
    /// Shift of `ln lambda`.
    pub delta_mu: f64,
}

impl ArmSpec {
    pub fn null(share: f64) -> Self {
        ArmSpec {
            share,
            delta_one: 0.0,
            delta_zero: 0.0,
            delta_mu: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub name: String,
    pub n: usize,
    pub p_base: usize,
    pub covariance: Covariance,
    pub terms: Vec<Term>,
    /// Intercept first, then one entry per term.
    pub beta_one: Vec<f64>,
    pub beta_zero: Vec<f64>,
    pub beta_mu: Vec<f64>,
    pub kappa_true: f64,
    pub arm: Option<ArmSpec>,
    pub seed: u64,
}

/// Hidden quantities of one generated row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RowTruth {
    pub theta1: f64,
    pub theta0: f64,
    pub lambda: f64,
}

impl RowTruth {
    /// `E[Y]` under the generating law.
    pub fn expected(&self) -> f64 {
        self.theta1 + (1.0 - self.theta1) * (1.0 - self.theta0) * self.interior_mean()
    }

    pub fn interior_mean(&self) -> f64 {
        self.lambda / (1.0 + self.lambda)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimTruth {
    pub rows: Vec<RowTruth>,
    pub d1: Vec<bool>,
    /// Second selection; false whenever `d1` is true.
    pub d2: Vec<bool>,
    pub y: Vec<f64>,
    pub arm: Option<Vec<bool>>,
}

impl SimConfig {
    pub fn design_dim(&self) -> usize {
        self.terms.len() + 1
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.design_dim();
        for (name, b) in [
            ("beta_one", &self.beta_one),
            ("beta_zero", &self.beta_zero),
            ("beta_mu", &self.beta_mu),
        ] {
            if b.len() != d {
                return Err(HobzError::validation(format!(
                    "{name} has {} entries, design has {d} columns",
                    b.len()
                )));
            }
            if b.iter().any(|v| !v.is_finite()) {
                return Err(HobzError::validation(format!("{name} must be finite")));
            }
        }
        if !(self.kappa_true > 0.0 && self.kappa_true.is_finite()) {
            return Err(HobzError::validation("kappa_true must be positive"));
        }
        if self.p_base == 0 {
            return Err(HobzError::validation("at least one base covariate is required"));
        }
        if self.terms.iter().any(|t| t.max_index() >= self.p_base) {
            return Err(HobzError::validation("design term refers to a missing covariate"));
        }
        if let Covariance::Dense(v) = &self.covariance {
            if v.len() != self.p_base * self.p_base {
                return Err(HobzError::validation("covariance must be p_base x p_base"));
            }
        }
        if let Some(a) = &self.arm {
            if !(a.share > 0.0 && a.share < 1.0) {
                return Err(HobzError::validation("arm share must lie in (0, 1)"));
            }
        }
        Ok(())
    }

    /// Truth for a base covariate row, optionally in the first arm.
    pub fn row_truth(&self, x: &[f64], first_arm: bool) -> RowTruth {
        let lin = |b: &[f64]| {
            b[0] + self
                .terms
                .iter()
                .zip(&b[1..])
                .map(|(t, c)| c * t.eval(x))
                .sum::<f64>()
        };
        let (mut e1, mut e0, mut em) = (lin(&self.beta_one), lin(&self.beta_zero), lin(&self.beta_mu));
        if let (true, Some(a)) = (first_arm, &self.arm) {
            e1 += a.delta_one;
            e0 += a.delta_zero;
            em += a.delta_mu;
        }
        RowTruth {
            theta1: norm_cdf(e1),
            theta0: norm_cdf(e0),
            lambda: em.exp(),
        }
    }

    /// Same scenario, different data seed.
    pub fn replicate(&self, seed: u64) -> SimConfig {
        SimConfig {
            seed,
            ..self.clone()
        }
    }
}

/// All `2^base_dim - 1` nonempty column subsets, by size then lexicographically.
pub fn interaction_terms(base_dim: usize) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = (1u32..(1 << base_dim))
        .map(|mask| (0..base_dim).filter(|j| mask & (1 << j) != 0).collect())
        .collect();
    out.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    out
}

/// Choose `select_k` interaction terms uniformly without replacement,
/// returned in canonical order.
pub fn select_interaction_terms<R: Rng + ?Sized>(
    base_dim: usize,
    select_k: usize,
    rng: &mut R,
) -> Result<Vec<Vec<usize>>> {
    let all = interaction_terms(base_dim);
    if select_k > all.len() {
        return Err(HobzError::validation(format!(
            "cannot select {select_k} of {} interaction terms",
            all.len()
        )));
    }
    let mut picked = sample(rng, all.len(), select_k).into_vec();
    picked.sort_unstable();
    Ok(picked.into_iter().map(|i| all[i].clone()).collect())
}

/// Intercept plus `select_k` randomly chosen products of the base columns.
pub fn build_interaction_expansion<R: Rng + ?Sized>(
    x_base: &Matrix,
    select_k: usize,
    rng: &mut R,
) -> Result<Matrix> {
    let terms = select_interaction_terms(x_base.cols(), select_k, rng)?;
    let mut data = Vec::with_capacity(x_base.rows() * (select_k + 1));
    for i in 0..x_base.rows() {
        let row = x_base.row(i);
        data.push(1.0);
        data.extend(terms.iter().map(|t| t.iter().map(|&j| row[j]).product::<f64>()));
    }
    Matrix::new(data, x_base.rows(), select_k + 1)
}

pub fn generate_dataset(cfg: &SimConfig) -> Result<(Dataset, SimTruth)> {
    cfg.validate()?;
    let p = cfg.p_base;
    let chol = match &cfg.covariance {
        Covariance::Identity => None,
        Covariance::Dense(v) => Some(
            Cholesky::new(DMatrix::from_row_slice(p, p, v))
                .ok_or_else(|| HobzError::validation("covariance is not positive definite"))?
                .l(),
        ),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut xs = Vec::with_capacity(cfg.n * p);
    let mut truth = SimTruth {
        rows: Vec::with_capacity(cfg.n),
        d1: Vec::with_capacity(cfg.n),
        d2: Vec::with_capacity(cfg.n),
        y: Vec::with_capacity(cfg.n),
        arm: cfg.arm.map(|_| Vec::with_capacity(cfg.n)),
    };
    let mut z = vec![0.0; p];
    for _ in 0..cfg.n {
        z.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
        let x: Vec<f64> = match &chol {
            None => z.clone(),
            Some(l) => (0..p).map(|r| (0..=r).map(|c| l[(r, c)] * z[c]).sum()).collect(),
        };
        let first = match (&cfg.arm, truth.arm.as_mut()) {
            (Some(a), Some(arms)) => {
                let f = rng.random::<f64>() < a.share;
                arms.push(f);
                f
            }
            _ => false,
        };
        let t = cfg.row_truth(&x, first);
        let d1 = rng.random::<f64>() < t.theta1;
        let d2 = !d1 && rng.random::<f64>() < t.theta0;
        let y = if d1 {
            1.0
        } else if d2 {
            0.0
        } else {
            interior_beta(cfg.kappa_true * t.lambda, cfg.kappa_true, &mut rng)
        };
        truth.rows.push(t);
        truth.d1.push(d1);
        truth.d2.push(d2);
        truth.y.push(y);
        xs.extend(x);
    }
    let data = Dataset::new(Matrix::new(xs, cfg.n, p)?, truth.y.clone())?;
    Ok((data, truth))
}

fn name_seed(name: &str) -> u64 {
    // FNV-1a
    name.bytes()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x100_0000_01b3))
}

const COEF_SD: f64 = 0.5;
const KAPPA_TRUE: f64 = 5.0;

fn scenario(name: String, n: usize, p_base: usize, terms: Vec<Term>, rng: &mut ChaCha8Rng) -> SimConfig {
    let d = terms.len() + 1;
    let normal = Normal::new(0.0, COEF_SD).expect("valid sd");
    let mut draw = || (0..d).map(|_| rng.sample(normal)).collect::<Vec<f64>>();
    let (beta_one, beta_zero, beta_mu) = (draw(), draw(), draw());
    let seed = name_seed(&name);
    SimConfig {
        name,
        n,
        p_base,
        covariance: Covariance::Identity,
        terms,
        beta_one,
        beta_zero,
        beta_mu,
        kappa_true: KAPPA_TRUE,
        arm: None,
        seed,
    }
}

fn preset_rng(name: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(name_seed(name) ^ 0x5eed)
}

fn linear_terms(p: usize) -> Vec<Term> {
    (0..p).map(|j| Term::Product(vec![j])).collect()
}

/// Sines of every column plus products of neighbouring columns.
fn nonlinear_terms(p: usize) -> Vec<Term> {
    (0..p)
        .map(Term::Sine)
        .chain((0..p).map(|j| Term::Product(vec![j, (j + 1) % p])))
        .collect()
}

pub fn interaction_preset(n: usize, select_k: usize) -> SimConfig {
    let name = format!("grid-n{n}-p{select_k}");
    let mut rng = preset_rng(&name);
    let terms = select_interaction_terms(6, select_k, &mut rng)
        .expect("select_k within range")
        .into_iter()
        .map(Term::Product)
        .collect();
    scenario(name, n, 6, terms, &mut rng)
}

/// The main 3 x 3 grid followed by the tree-count study scenarios.
pub fn scenario_presets() -> Vec<SimConfig> {
    let mut out = Vec::new();
    for n in [250, 500, 750] {
        for k in [5, 15, 45] {
            out.push(interaction_preset(n, k));
        }
    }
    for (name, n, p, nonlinear) in [
        ("table-s1", 100, 3, false),
        ("table-s2-linear", 500, 7, false),
        ("table-s2-nonlinear", 500, 7, true),
    ] {
        let mut rng = preset_rng(name);
        let terms = if nonlinear { nonlinear_terms(p) } else { linear_terms(p) };
        out.push(scenario(name.to_string(), n, p, terms, &mut rng));
    }
    out
}

/// Two-arm data with no signal anywhere.
pub fn null_preset() -> SimConfig {
    let p = 3;
    SimConfig {
        name: "null".into(),
        n: 200,
        p_base: p,
        covariance: Covariance::Identity,
        terms: linear_terms(p),
        beta_one: vec![0.0; p + 1],
        beta_zero: vec![0.0; p + 1],
        beta_mu: vec![0.0; p + 1],
        kappa_true: KAPPA_TRUE,
        arm: Some(ArmSpec::null(0.5)),
        seed: name_seed("null"),
    }
}

/// Look up a preset by name, including `null`.
pub fn find_preset(name: &str) -> Option<SimConfig> {
    if name == "null" {
        return Some(null_preset());
    }
    scenario_presets().into_iter().find(|c| c.name == name)
}

pub fn preset_names() -> Vec<String> {
    let mut v: Vec<String> = scenario_presets().into_iter().map(|c| c.name).collect();
    v.push("null".into());
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Category;

    fn flat(n: usize, kappa: f64, seed: u64) -> SimConfig {
        SimConfig {
            name: "flat".into(),
            n,
            p_base: 2,
            covariance: Covariance::Identity,
            terms: linear_terms(2),
            beta_one: vec![0.0; 3],
            beta_zero: vec![0.0; 3],
            beta_mu: vec![0.0; 3],
            kappa_true: kappa,
            arm: None,
            seed,
        }
    }

    #[test]
    fn expansion_sizes_and_order() {
        assert_eq!(interaction_terms(2), vec![vec![0], vec![1], vec![0, 1]]);
        let six = interaction_terms(6);
        assert_eq!(six.len(), 63);
        assert!(six.windows(2).all(|w| w[0].len() < w[1].len() || (w[0].len() == w[1].len() && w[0] < w[1])));
        assert_eq!(six[62], vec![0, 1, 2, 3, 4, 5]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(select_interaction_terms(6, 64, &mut rng).is_err());
    }

    #[test]
    fn expansion_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let xs: Vec<f64> = (0..60).map(|_| rng.sample(StandardNormal)).collect();
        let x = Matrix::new(xs, 10, 6).unwrap();
        let a = build_interaction_expansion(&x, 15, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = build_interaction_expansion(&x, 15, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
        assert_eq!((a.rows(), a.cols()), (10, 16));
        assert!(a.column(0).all(|v| v == 1.0));
        let c = build_interaction_expansion(&x, 63, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert!((c.get(4, 63) - x.row(4).iter().product::<f64>()).abs() < 1e-12);
    }

    #[test]
    fn flat_category_proportions() {
        let n = 100_000;
        let (d, _) = generate_dataset(&flat(n, 2.0, 1)).unwrap();
        let nf = n as f64;
        for (cat, p) in [(Category::One, 0.5), (Category::Zero, 0.25), (Category::Interior, 0.25)] {
            let got = d.count(cat) as f64 / nf;
            let sd = (p * (1.0 - p) / nf).sqrt();
            assert!((got - p).abs() < 3.0 * sd, "{cat:?}: {got}");
        }
    }

    #[test]
    fn flat_interior_moments() {
        let kappa = 2.0;
        let (d, _) = generate_dataset(&flat(200_000, kappa, 2)).unwrap();
        let v: Vec<f64> = d.y().iter().copied().filter(|&y| y > 0.0 && y < 1.0).collect();
        let m = v.iter().sum::<f64>() / v.len() as f64;
        let var = v.iter().map(|y| (y - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64;
        let true_var = 1.0 / (4.0 * (2.0 * kappa + 1.0));
        let nf = v.len() as f64;
        assert!((m - 0.5).abs() < 3.0 * (true_var / nf).sqrt(), "{m}");
        // Var of the sample variance for a symmetric Beta: (mu4 - var^2) / n
        let mu4 = 3.0 * true_var * true_var * (2.0 * kappa + 1.0) / (2.0 * kappa + 3.0);
        assert!((var - true_var).abs() < 3.0 * ((mu4 - true_var * true_var) / nf).sqrt(), "{var}");
    }

    #[test]
    fn same_seed_same_output() {
        let cfg = scenario_presets()[4].clone();
        assert_eq!(generate_dataset(&cfg).unwrap(), generate_dataset(&cfg).unwrap());
        assert_ne!(
            generate_dataset(&cfg).unwrap().1.y,
            generate_dataset(&cfg.replicate(cfg.seed + 1)).unwrap().1.y
        );
    }

    #[test]
    fn masks_agree_with_truth() {
        for cfg in scenario_presets().into_iter().chain([null_preset()]) {
            let (d, t) = generate_dataset(&cfg).unwrap();
            for i in 0..d.n() {
                assert_eq!(d.is_one(i), t.d1[i]);
                assert_eq!(d.is_zero(i), !t.d1[i] && t.d2[i]);
                assert!(!(t.d1[i] && t.d2[i]));
                if d.is_interior(i) {
                    assert!(d.y()[i] > 0.0 && d.y()[i] < 1.0);
                }
            }
            assert_eq!(t.arm.is_some(), cfg.arm.is_some());
        }
    }

    #[test]
    fn boundary_rates_track_truth() {
        let mut cfg = scenario_presets().into_iter().find(|c| c.name == "table-s2-linear").unwrap();
        cfg.n = 50_000;
        let (d, t) = generate_dataset(&cfg).unwrap();
        let nf = cfg.n as f64;
        let p1: f64 = t.rows.iter().map(|r| r.theta1).sum::<f64>() / nf;
        let v1: f64 = t.rows.iter().map(|r| r.theta1 * (1.0 - r.theta1)).sum::<f64>();
        let got1 = d.count(Category::One) as f64 / nf;
        assert!((got1 - p1).abs() < 3.0 * v1.sqrt() / nf);

        let below: Vec<usize> = (0..cfg.n).filter(|&i| !t.d1[i]).collect();
        let m = below.len() as f64;
        let p0: f64 = below.iter().map(|&i| t.rows[i].theta0).sum::<f64>() / m;
        let v0: f64 = below.iter().map(|&i| t.rows[i].theta0 * (1.0 - t.rows[i].theta0)).sum();
        let got0 = d.count(Category::Zero) as f64 / m;
        assert!((got0 - p0).abs() < 3.0 * v0.sqrt() / m);
    }

    #[test]
    fn preset_catalogue() {
        let all = scenario_presets();
        assert_eq!(all.iter().filter(|c| c.name.starts_with("grid-")).count(), 9);
        let s1 = find_preset("table-s1").unwrap();
        assert_eq!((s1.n, s1.p_base), (100, 3));
        for name in ["table-s2-linear", "table-s2-nonlinear"] {
            let c = find_preset(name).unwrap();
            assert_eq!((c.n, c.p_base), (500, 7));
        }
        for c in &all {
            c.validate().unwrap();
            assert_eq!(c.kappa_true, 5.0);
        }
        assert!(find_preset("nope").is_none());
        assert_eq!(preset_names().len(), all.len() + 1);
        assert_eq!(find_preset("grid-n500-p15").unwrap().terms.len(), 15);
    }

    #[test]
    fn correlated_covariates() {
        let mut cfg = flat(40_000, 2.0, 5);
        cfg.covariance = Covariance::Dense(vec![1.0, 0.6, 0.6, 1.0]);
        let (d, _) = generate_dataset(&cfg).unwrap();
        let x = d.x();
        let c: f64 = (0..d.n()).map(|i| x.get(i, 0) * x.get(i, 1)).sum::<f64>() / d.n() as f64;
        assert!((c - 0.6).abs() < 0.03, "{c}");
        cfg.covariance = Covariance::Dense(vec![1.0, 2.0, 2.0, 1.0]);
        assert!(generate_dataset(&cfg).is_err());
    }

    #[test]
    fn arm_effect_shifts_interior_mean() {
        let mut cfg = flat(10, 5.0, 1);
        cfg.arm = Some(ArmSpec {
            share: 0.5,
            delta_one: 0.0,
            delta_zero: 0.0,
            delta_mu: 1.0,
        });
        let t = cfg.row_truth(&[0.0, 0.0], true);
        let c = cfg.row_truth(&[0.0, 0.0], false);
        assert!((t.lambda - std::f64::consts::E).abs() < 1e-12);
        assert_eq!(c.lambda, 1.0);
        assert!((c.expected() - 0.625).abs() < 1e-15);
    }
}
