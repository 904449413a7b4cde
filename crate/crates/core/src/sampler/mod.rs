//! The MCMC engine: truncated-normal data augmentation, Metropolis-Hastings
//! tree moves against the combined integrated likelihood, conjugate leaf
//! draws, and a slice sampler for the Beta precision.
//!
//! Each tree is updated in backfitting order as a block: its structure from
//! the collapsed conditional, then `(theta1, theta0, lambda)` in every leaf,
//! then the latent probit variables given the refreshed fits. `kappa`
//! follows once all trees have been visited.

mod draws;
mod kappa;
mod latent;

pub use draws::{effective_sample_size, ChainDiagnostics, ChainMeta, ComponentDraws, PosteriorDraws};
pub use kappa::{draw_kappa, kappa_log_conditional, slice_sample};
pub use latent::sample_latent_phi;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Matrix};
use crate::error::{HobzError, Result};
use crate::forest::{
    propose_move, BetaStats, Forest, Hyperparams, KappaTerms, LeafParams, LeafSuffStats, NodeId, ProbitStats,
    Proposal, RulePool,
};
use crate::likelihood::leaf_log_marginal;

/// Length, burn-in, thinning and seed of one chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule {
            iterations: 5000,
            burn_in: 2500,
            thin: 1,
            seed: 1,
        }
    }
}

impl Schedule {
    pub fn validate(&self) -> Result<()> {
        if self.thin == 0 {
            return Err(HobzError::validation("thin must be at least 1"));
        }
        if self.burn_in > self.iterations {
            return Err(HobzError::validation(format!(
                "burn_in {} exceeds iterations {}",
                self.burn_in, self.iterations
            )));
        }
        Ok(())
    }

    /// Number of kept draws, `(iterations - burn_in) / thin`.
    pub fn kept(&self) -> usize {
        (self.iterations - self.burn_in) / self.thin
    }

    /// Whether 0-based iteration `it` is stored.
    pub fn keeps(&self, it: usize) -> bool {
        it >= self.burn_in && (it - self.burn_in + 1) % self.thin == 0
    }
}

/// Which rows a chain stores draws for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChainOptions {
    pub keep_train: bool,
}

impl Default for ChainOptions {
    fn default() -> Self {
        ChainOptions { keep_train: true }
    }
}

#[derive(Debug, Clone, Default)]
struct Scratch {
    part1: Vec<f64>,
    part0: Vec<f64>,
    part_b: Vec<f64>,
    r1: Vec<f64>,
    r0: Vec<f64>,
    log_eta: Vec<f64>,
    affected: Vec<usize>,
    moved_to: Vec<NodeId>,
    leaf_stats: Vec<LeafSuffStats>,
    old_stats: Vec<LeafSuffStats>,
    in_region: Vec<bool>,
}

/// Full chain state.
///
/// `f1`, `f0` and `log_fb` cache the forest fits on the training rows and
/// `leaf_of[t][i]` caches the leaf of row `i` in tree `t`; both are kept in
/// sync by every update.
#[derive(Debug, Clone)]
pub struct SamplerState {
    forest: Forest,
    phi1: Vec<f64>,
    /// Undefined (left at 0) on rows with `y = 1`.
    phi0: Vec<f64>,
    kappa: f64,
    f1: Vec<f64>,
    f0: Vec<f64>,
    log_fb: Vec<f64>,
    leaf_of: Vec<Vec<NodeId>>,
    iteration: u64,
    rng: ChaCha8Rng,
    diagnostics: ChainDiagnostics,
    scratch: Scratch,
}

fn draw_gamma<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> f64 {
    let g = Gamma::new(shape, 1.0 / rate).expect("gamma parameters are positive");
    loop {
        let v: f64 = g.sample(rng);
        if v > 0.0 && v.is_finite() {
            return v;
        }
    }
}

/// Mean and SD of a probit leaf's full conditional:
/// `N(N Rbar / (N + tau), 1 / (N + tau))` with `tau = sigma^-2`.
pub fn theta_posterior(stats: &ProbitStats, sigma_theta: f64) -> (f64, f64) {
    let prec = stats.count as f64 + 1.0 / (sigma_theta * sigma_theta);
    (stats.sum / prec, prec.sqrt().recip())
}

/// Shape and rate of a leaf `lambda`'s full conditional under the
/// approximate Beta likelihood: `Gamma(kappa N + alpha_g, beta_g - kappa S)`.
pub fn lambda_posterior(stats: &BetaStats, kappa: f64, alpha_g: f64, beta_g: f64) -> (f64, f64) {
    (
        kappa * stats.count as f64 + alpha_g,
        beta_g - kappa * stats.weighted_log_y,
    )
}

impl SamplerState {
    /// Stumps with `theta = 0` and `lambda = 1`, `kappa` from its prior and
    /// the latent variables from their truncated priors.
    pub fn new(data: &Dataset, h: &Hyperparams, seed: u64) -> Result<Self> {
        h.validate()?;
        let n = data.n();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let kappa = draw_gamma(h.alpha_kappa, h.beta_kappa, &mut rng);
        let f1 = vec![0.0; n];
        let f0 = vec![0.0; n];
        let mut phi1 = vec![0.0; n];
        let mut phi0 = vec![0.0; n];
        latent::draw_phi(data, &f1, &f0, &mut phi1, &mut phi0, &mut rng);
        Ok(SamplerState {
            forest: Forest::stumps(h.num_trees),
            phi1,
            phi0,
            kappa,
            f1,
            f0,
            log_fb: vec![0.0; n],
            leaf_of: vec![vec![0; n]; h.num_trees],
            iteration: 0,
            rng,
            diagnostics: ChainDiagnostics::default(),
            scratch: Scratch::default(),
        })
    }

    pub fn forest(&self) -> &Forest {
        &self.forest
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn set_kappa(&mut self, kappa: f64) {
        assert!(kappa > 0.0 && kappa.is_finite());
        self.kappa = kappa;
    }

    pub fn phi1(&self) -> &[f64] {
        &self.phi1
    }

    pub fn phi0(&self) -> &[f64] {
        &self.phi0
    }

    pub fn f1(&self) -> &[f64] {
        &self.f1
    }

    pub fn f0(&self) -> &[f64] {
        &self.f0
    }

    pub fn log_fb(&self) -> &[f64] {
        &self.log_fb
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    pub fn diagnostics(&self) -> &ChainDiagnostics {
        &self.diagnostics
    }

    pub fn rng_mut(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    /// Recompute every cache from the forest and compare.
    pub fn check_caches(&self, data: &Dataset, rel_tol: f64) -> std::result::Result<(), String> {
        let close = |a: f64, b: f64| (a - b).abs() <= rel_tol * a.abs().max(b.abs()).max(1.0);
        for i in 0..data.n() {
            let x = data.x().row(i);
            for (t, tree) in self.forest.trees().iter().enumerate() {
                if tree.assign_leaf(x) != self.leaf_of[t][i] {
                    return Err(format!("leaf cache of tree {t}, row {i} is stale"));
                }
            }
            let fits = self.forest.fits(x);
            if !close(fits.f1, self.f1[i]) || !close(fits.f0, self.f0[i]) {
                return Err(format!("probit fit cache stale at row {i}"));
            }
            if !close(fits.log_fb, self.log_fb[i]) {
                return Err(format!("f_b cache stale at row {i}"));
            }
        }
        for (t, tree) in self.forest.trees().iter().enumerate() {
            tree.check_invariants().map_err(|e| format!("tree {t}: {e}"))?;
        }
        Ok(())
    }

    /// Check that every latent variable sits on the side its category demands.
    pub fn check_phi_signs(&self, data: &Dataset) -> std::result::Result<(), String> {
        for i in 0..data.n() {
            if (self.phi1[i] > 0.0) != data.is_one(i) {
                return Err(format!("phi1 sign wrong at row {i}"));
            }
            if !data.is_one(i) && (self.phi0[i] > 0.0) != data.is_zero(i) {
                return Err(format!("phi0 sign wrong at row {i}"));
            }
        }
        Ok(())
    }

    fn prepare_partials(&mut self, t: usize, data: &Dataset) {
        let n = data.n();
        let s = &mut self.scratch;
        for v in [
            &mut s.part1,
            &mut s.part0,
            &mut s.part_b,
            &mut s.r1,
            &mut s.r0,
            &mut s.log_eta,
        ] {
            v.resize(n, 0.0);
        }
        let tree = self.forest.tree(t);
        let leaves = &self.leaf_of[t];
        for i in 0..n {
            let p = tree.params(leaves[i]);
            s.part1[i] = self.f1[i] - p.theta1();
            s.part0[i] = self.f0[i] - p.theta0();
            s.part_b[i] = self.log_fb[i] - p.mu();
            s.r1[i] = self.phi1[i] - s.part1[i];
            s.r0[i] = if data.is_one(i) {
                0.0
            } else {
                self.phi0[i] - s.part0[i]
            };
            s.log_eta[i] = s.part_b[i];
        }
    }

    /// Incremental log acceptance ratio of `prop` for tree `t`, touching only
    /// the rows under the changed node. `None` when a new leaf falls below
    /// the minimum size. Requires [`Self::prepare_partials`] for `t`.
    fn score_proposal(
        &mut self,
        t: usize,
        data: &Dataset,
        h: &Hyperparams,
        prop: &Proposal,
        k: &KappaTerms,
    ) -> Option<f64> {
        let tree = self.forest.tree(t);
        let s = &mut self.scratch;
        let mut old_leaves = Vec::new();
        tree.collect_leaves(prop.node, &mut old_leaves);
        s.in_region.clear();
        s.in_region.resize(tree.capacity(), false);
        for &l in &old_leaves {
            s.in_region[l] = true;
        }
        s.old_stats.clear();
        s.old_stats.resize(tree.capacity(), LeafSuffStats::default());
        s.leaf_stats.clear();
        s.leaf_stats.resize(prop.tree.capacity(), LeafSuffStats::default());
        s.affected.clear();
        s.moved_to.clear();
        let leaves = &self.leaf_of[t];
        for i in 0..data.n() {
            let l = leaves[i];
            if !s.in_region[l] {
                continue;
            }
            s.affected.push(i);
            let nl = prop.tree.descend_from(prop.node, data.x().row(i));
            s.moved_to.push(nl);
            s.old_stats[l].push_row(data, i, s.r1[i], s.r0[i], s.log_eta[i], k);
            s.leaf_stats[nl].push_row(data, i, s.r1[i], s.r0[i], s.log_eta[i], k);
        }
        let mut new_leaves = Vec::new();
        prop.tree.collect_leaves(prop.node, &mut new_leaves);
        if h.min_leaf_size > 0
            && new_leaves
                .iter()
                .any(|&l| s.leaf_stats[l].one.count < h.min_leaf_size)
        {
            return None;
        }
        let new_ll: f64 = new_leaves
            .iter()
            .map(|&l| leaf_log_marginal(&s.leaf_stats[l], h, k.kappa))
            .sum();
        let old_ll: f64 = old_leaves
            .iter()
            .map(|&l| leaf_log_marginal(&s.old_stats[l], h, k.kappa))
            .sum();
        Some(new_ll - old_ll + prop.log_prior_ratio + prop.log_proposal_ratio)
    }

    /// One Metropolis-Hastings structural move on tree `t`.
    fn update_structure(
        &mut self,
        t: usize,
        data: &Dataset,
        h: &Hyperparams,
        pool: &RulePool,
        k: &KappaTerms,
    ) {
        let Some(prop) = propose_move(self.forest.tree(t), pool, h, &mut self.rng) else {
            return;
        };
        let kind = prop.kind as usize;
        self.diagnostics.proposed[kind] += 1;
        let Some(log_ratio) = self.score_proposal(t, data, h, &prop, k) else {
            self.diagnostics.rejected_min_leaf += 1;
            return;
        };
        if self.rng.random::<f64>().ln() < log_ratio {
            self.diagnostics.accepted[kind] += 1;
            let s = &self.scratch;
            let leaves = &mut self.leaf_of[t];
            for (&i, &nl) in s.affected.iter().zip(&s.moved_to) {
                leaves[i] = nl;
            }
            *self.forest.tree_mut(t) = prop.tree;
        }
    }

    /// Conjugate draws of `(theta1, theta0, lambda)` in every leaf of tree
    /// `t`, then the cache refresh.
    fn update_leaves(&mut self, t: usize, data: &Dataset, h: &Hyperparams, k: &KappaTerms) {
        let s = &mut self.scratch;
        let tree = self.forest.tree(t);
        s.leaf_stats.clear();
        s.leaf_stats.resize(tree.capacity(), LeafSuffStats::default());
        let leaves = &self.leaf_of[t];
        for i in 0..data.n() {
            s.leaf_stats[leaves[i]].push_row(data, i, s.r1[i], s.r0[i], s.log_eta[i], k);
        }
        let tree = self.forest.tree_mut(t);
        for l in tree.leaves() {
            let st = &s.leaf_stats[l];
            let (m1, sd1) = theta_posterior(&st.one, h.sigma_theta1);
            let z1: f64 = self.rng.sample(StandardNormal);
            let (m0, sd0) = theta_posterior(&st.zero, h.sigma_theta0);
            let z0: f64 = self.rng.sample(StandardNormal);
            let (shape, rate) = lambda_posterior(&st.beta, k.kappa, h.alpha_g, h.beta_g);
            assert!(rate > 0.0, "lambda posterior rate must be positive");
            let lambda = draw_gamma(shape, rate, &mut self.rng);
            tree.set_params(l, LeafParams::new(m1 + sd1 * z1, m0 + sd0 * z0, lambda.ln()));
        }
        let tree = self.forest.tree(t);
        for i in 0..data.n() {
            let p = tree.params(leaves[i]);
            self.f1[i] = s.part1[i] + p.theta1();
            self.f0[i] = s.part0[i] + p.theta0();
            self.log_fb[i] = s.part_b[i] + p.mu();
        }
    }

    /// Backfitting update of tree `t`: structure, leaves, then latent variables.
    pub fn update_tree(&mut self, t: usize, data: &Dataset, h: &Hyperparams, pool: &RulePool) {
        let k = KappaTerms::new(self.kappa);
        self.prepare_partials(t, data);
        self.update_structure(t, data, h, pool, &k);
        self.update_leaves(t, data, h, &k);
        sample_latent_phi(self, data);
    }

    pub fn update_kappa(&mut self, data: &Dataset, h: &Hyperparams) {
        self.kappa = draw_kappa(
            self.kappa,
            data,
            &self.log_fb,
            h.alpha_kappa,
            h.beta_kappa,
            h.kappa_slice_width,
            &mut self.rng,
        );
    }

    /// The log acceptance ratio the sampler would use for `prop` on tree
    /// `t`, without applying it.
    pub fn move_log_ratio(
        &mut self,
        t: usize,
        data: &Dataset,
        h: &Hyperparams,
        prop: &Proposal,
    ) -> Option<f64> {
        let k = KappaTerms::new(self.kappa);
        self.prepare_partials(t, data);
        self.score_proposal(t, data, h, prop, &k)
    }

    /// Residuals and `eta` for tree `t` against the other trees, as used by
    /// its structural move: `(r1, r0, eta)`.
    pub fn partial_residuals(&mut self, t: usize, data: &Dataset) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        self.prepare_partials(t, data);
        let s = &self.scratch;
        (
            s.r1.clone(),
            s.r0.clone(),
            s.log_eta.iter().map(|v| v.exp()).collect(),
        )
    }
}

/// One full sweep: every tree in order, then `kappa`.
pub fn mcmc_iteration(state: &mut SamplerState, data: &Dataset, h: &Hyperparams, pool: &RulePool) {
    for t in 0..state.forest.len() {
        state.update_tree(t, data, h, pool);
    }
    state.update_kappa(data, h);
    state.iteration += 1;
}

fn fits_into(forest: &Forest, x: &Matrix, f1: &mut Vec<f64>, f0: &mut Vec<f64>, fb: &mut Vec<f64>) {
    f1.clear();
    f0.clear();
    fb.clear();
    for i in 0..x.rows() {
        let fits = forest.fits(x.row(i));
        f1.push(fits.f1);
        f0.push(fits.f0);
        fb.push(fits.fb());
    }
}

/// Run a chain from stumps and collect the kept draws.
pub fn run_chain(
    data: &Dataset,
    test_x: Option<&Matrix>,
    h: &Hyperparams,
    schedule: &Schedule,
) -> Result<PosteriorDraws> {
    run_chain_with(data, test_x, h, schedule, ChainOptions::default())
}

pub fn run_chain_with(
    data: &Dataset,
    test_x: Option<&Matrix>,
    h: &Hyperparams,
    schedule: &Schedule,
    opts: ChainOptions,
) -> Result<PosteriorDraws> {
    schedule.validate()?;
    h.validate()?;
    if let Some(tx) = test_x {
        if tx.cols() != data.p() {
            return Err(HobzError::validation(format!(
                "test covariates have {} columns, training data has {}",
                tx.cols(),
                data.p()
            )));
        }
    }
    let pool = RulePool::from_matrix(data.x());
    let mut state = SamplerState::new(data, h, schedule.seed)?;
    let n_test = test_x.map_or(0, |m| m.rows());
    let kept = schedule.kept();
    let mut train = ComponentDraws::new(if opts.keep_train { data.n() } else { 0 });
    let mut test = ComponentDraws::new(n_test);
    train.f1.reserve(kept * train.n_rows);
    test.f1.reserve(kept * n_test);
    let mut kappa = Vec::with_capacity(kept);
    let mut mean_leaves = Vec::with_capacity(kept);
    let (mut t1, mut t0, mut tb) = (Vec::new(), Vec::new(), Vec::new());
    for it in 0..schedule.iterations {
        mcmc_iteration(&mut state, data, h, &pool);
        if !schedule.keeps(it) {
            continue;
        }
        kappa.push(state.kappa);
        if opts.keep_train {
            let fb: Vec<f64> = state.log_fb.iter().map(|v| v.exp()).collect();
            if fb.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
                return Err(HobzError::numeric(format!(
                    "f_b left the positive finite range at iteration {it}"
                )));
            }
            train.push_draw(&state.f1, &state.f0, &fb);
        }
        if let Some(tx) = test_x {
            fits_into(&state.forest, tx, &mut t1, &mut t0, &mut tb);
            if tb.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
                return Err(HobzError::numeric(format!(
                    "test-row f_b left the positive finite range at iteration {it}"
                )));
            }
            test.push_draw(&t1, &t0, &tb);
        }
        let leaves: usize = state.forest.trees().iter().map(|t| t.num_leaves()).sum();
        mean_leaves.push(leaves as f64 / state.forest.len() as f64);
    }
    let mut diagnostics = state.diagnostics.clone();
    diagnostics.mean_leaves = mean_leaves;
    Ok(PosteriorDraws {
        meta: ChainMeta {
            seed: schedule.seed,
            iterations: schedule.iterations as u64,
            burn_in: schedule.burn_in as u64,
            thin: schedule.thin as u64,
            num_trees: h.num_trees as u64,
            config_hash: 0,
        },
        kappa,
        train,
        test,
        diagnostics,
    })
}
