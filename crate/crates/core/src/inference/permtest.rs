use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::predict::MetricKind;
use crate::data::Dataset;
use crate::dist::sample_sd;
use crate::error::{HobzError, Result};
use crate::forest::Hyperparams;
use crate::sampler::{run_chain_with, ChainOptions, ComponentDraws, PosteriorDraws, Schedule};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermTestResult {
    pub observed_pite_sd: f64,
    /// One entry per permutation, in permutation order.
    pub permuted_pite_sds: Vec<f64>,
    /// `(1 + #{permuted >= observed}) / (1 + n_perm)`.
    pub p_value: f64,
    /// `#{permuted >= observed} / n_perm`.
    pub raw_p_value: f64,
}

impl PermTestResult {
    pub fn n_perm(&self) -> usize {
        self.permuted_pite_sds.len()
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn mix(a: u64, b: u64) -> u64 {
    splitmix(a ^ splitmix(b))
}

/// Order-sensitive hash of a sorted row-index set.
fn index_set_hash(idx: &[usize]) -> u64 {
    idx.iter()
        .fold(splitmix(idx.len() as u64), |h, &i| mix(h, i as u64))
}

const PERM_TAG: u64 = 0x7065_726d;
const FIT_TAG: u64 = 0x0066_6974;

/// Fit one arm on the rows in `idx` and predict every row of `data`.
///
/// The chain seed depends on the row set and `label`, not on which arm the
/// rows belong to, so renaming the arms leaves every fit unchanged.
pub fn fit_arm(
    data: &Dataset,
    idx: &[usize],
    h: &Hyperparams,
    schedule: &Schedule,
    label: u64,
) -> Result<PosteriorDraws> {
    let seed = mix(mix(schedule.seed ^ FIT_TAG, label), index_set_hash(idx));
    let sub = data.subset(idx);
    run_chain_with(
        &sub,
        Some(data.x()),
        h,
        &Schedule { seed, ..*schedule },
        ChainOptions { keep_train: false },
    )
}

fn point_contrasts(t: &ComponentDraws, c: &ComponentDraws, kind: MetricKind) -> Vec<f64> {
    let l = t.num_draws().min(c.num_draws());
    (0..t.n_rows)
        .map(|i| {
            (0..l)
                .map(|d| {
                    let (a1, a0, ab) = t.get(d, i);
                    let (b1, b0, bb) = c.get(d, i);
                    kind.eval(a1, a0, ab) - kind.eval(b1, b0, bb)
                })
                .sum::<f64>()
                / l as f64
        })
        .collect()
}

fn split_arms(arms: &[bool]) -> (Vec<usize>, Vec<usize>) {
    (0..arms.len()).partition(|&i| arms[i])
}

fn pite_sd(
    data: &Dataset,
    arms: &[bool],
    h: &Hyperparams,
    schedule: &Schedule,
    kind: MetricKind,
    label: u64,
) -> Result<f64> {
    let (a, b) = split_arms(arms);
    let fa = fit_arm(data, &a, h, schedule, label)?;
    let fb = fit_arm(data, &b, h, schedule, label)?;
    Ok(sample_sd(&point_contrasts(&fa.test, &fb.test, kind)))
}

/// Heterogeneity test: is the spread of PITE point estimates larger under
/// the observed arm labels than under shuffled labels?
///
/// `arms[i]` marks row `i` as belonging to the first arm. Permutation fits
/// run in parallel; results are collected in permutation order.
pub fn permutation_test(
    data: &Dataset,
    arms: &[bool],
    h: &Hyperparams,
    schedule: &Schedule,
    kind: MetricKind,
    n_perm: usize,
) -> Result<PermTestResult> {
    if n_perm == 0 {
        return Err(HobzError::validation("n_perm must be at least 1"));
    }
    if arms.len() != data.n() {
        return Err(HobzError::validation(format!(
            "{} arm labels for {} rows",
            arms.len(),
            data.n()
        )));
    }
    let n_first = arms.iter().filter(|&&a| a).count();
    if n_first == 0 || n_first == arms.len() {
        return Err(HobzError::validation("permutation test needs two non-empty arms"));
    }
    schedule.validate()?;
    if schedule.kept() == 0 {
        return Err(HobzError::validation("schedule keeps no draws"));
    }

    let observed = pite_sd(data, arms, h, schedule, kind, 0)?;
    let permuted: Vec<f64> = (0..n_perm)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(mix(schedule.seed ^ PERM_TAG, k as u64));
            let mut order: Vec<usize> = (0..arms.len()).collect();
            order.shuffle(&mut rng);
            let shuffled: Vec<bool> = order.iter().map(|&j| arms[j]).collect();
            pite_sd(data, &shuffled, h, schedule, kind, k as u64 + 1)
        })
        .collect::<Result<_>>()?;

    let exceed = permuted.iter().filter(|&&s| s >= observed).count();
    Ok(PermTestResult {
        observed_pite_sd: observed,
        p_value: (1 + exceed) as f64 / (1 + n_perm) as f64,
        raw_p_value: exceed as f64 / n_perm as f64,
        permuted_pite_sds: permuted,
    })
}
