//! GROW / PRUNE / CHANGE proposals for the tree Metropolis-Hastings step.

use rand::Rng;

use super::prior::split_probability;
use super::{Hyperparams, NodeId, RulePool, Tree};
use crate::data::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MoveKind {
    Grow,
    Prune,
    Change,
}

/// A proposed tree plus everything the acceptance ratio needs besides the
/// likelihood.
#[derive(Debug, Clone)]
pub struct Proposal {
    pub kind: MoveKind,
    pub tree: Tree,
    /// Root of the only region whose leaves differ from the current tree.
    pub node: NodeId,
    /// `ln q(current | proposed) - ln q(proposed | current)`, rule draws excluded.
    pub log_proposal_ratio: f64,
    /// `ln pi(proposed) - ln pi(current)` for the tree-shape prior.
    pub log_prior_ratio: f64,
    /// Set when a new leaf holds fewer training rows than allowed.
    pub auto_rejected: bool,
}

impl Proposal {
    /// Mark the proposal rejected if any leaf under the changed region holds
    /// fewer than `min_leaf_size` rows of `x`.
    pub fn check_min_leaf(&mut self, x: &Matrix, min_leaf_size: usize) {
        if min_leaf_size == 0 {
            return;
        }
        let mut leaves = Vec::new();
        self.tree.collect_leaves(self.node, &mut leaves);
        let mut counts = vec![0usize; self.tree.capacity()];
        for i in 0..x.rows() {
            let leaf = self.tree.assign_leaf(x.row(i));
            counts[leaf] += 1;
        }
        self.auto_rejected = leaves.iter().any(|&l| counts[l] < min_leaf_size);
    }
}

fn grow_prob(tree: &Tree, h: &Hyperparams) -> f64 {
    if tree.is_stump() {
        1.0
    } else {
        h.moves.grow
    }
}

/// Log prior ratio for splitting a leaf at `depth` into two leaves.
fn grow_log_prior_ratio(depth: u32, h: &Hyperparams) -> f64 {
    let p = split_probability(depth, h);
    let pc = split_probability(depth + 1, h);
    p.ln() + 2.0 * (-pc).ln_1p() - (-p).ln_1p()
}

/// Draw one structural move.
///
/// A stump can only grow, so PRUNE and CHANGE degrade to GROW there.
/// Returns `None` when no move exists, i.e. a stump with nothing to split on.
/// New leaves inherit their parent's parameters as placeholders; the caller
/// redraws them from the full conditional.
pub fn propose_move<R: Rng + ?Sized>(
    tree: &Tree,
    pool: &RulePool,
    h: &Hyperparams,
    rng: &mut R,
) -> Option<Proposal> {
    let kind = if tree.is_stump() {
        MoveKind::Grow
    } else {
        let u: f64 = rng.random();
        if u < h.moves.grow {
            MoveKind::Grow
        } else if u < h.moves.grow + h.moves.prune {
            MoveKind::Prune
        } else {
            MoveKind::Change
        }
    };

    match kind {
        MoveKind::Grow => {
            let rule = pool.draw(rng)?;
            let leaves = tree.leaves();
            let node = leaves[rng.random_range(0..leaves.len())];
            let mut proposed = tree.clone();
            let params = *tree.params(node);
            proposed.grow(node, rule, params, params);
            let forward = grow_prob(tree, h).ln() - (leaves.len() as f64).ln();
            let reverse = h.moves.prune.ln() - (proposed.prunable_nodes().len() as f64).ln();
            Some(Proposal {
                kind,
                node,
                log_proposal_ratio: reverse - forward,
                log_prior_ratio: grow_log_prior_ratio(tree.depth(node), h),
                tree: proposed,
                auto_rejected: false,
            })
        }
        MoveKind::Prune => {
            let prunable = tree.prunable_nodes();
            let node = prunable[rng.random_range(0..prunable.len())];
            let (left, _) = tree.children(node).expect("prunable node has children");
            let mut proposed = tree.clone();
            proposed.prune(node, *tree.params(left));
            let forward = h.moves.prune.ln() - (prunable.len() as f64).ln();
            let reverse = grow_prob(&proposed, h).ln() - (proposed.num_leaves() as f64).ln();
            Some(Proposal {
                kind,
                node,
                log_proposal_ratio: reverse - forward,
                log_prior_ratio: -grow_log_prior_ratio(tree.depth(node), h),
                tree: proposed,
                auto_rejected: false,
            })
        }
        MoveKind::Change => {
            let internal = tree.internal_nodes();
            let node = internal[rng.random_range(0..internal.len())];
            let rule = pool.draw(rng)?;
            let mut proposed = tree.clone();
            proposed.set_rule(node, rule);
            Some(Proposal {
                kind,
                node,
                log_proposal_ratio: 0.0,
                log_prior_ratio: 0.0,
                tree: proposed,
                auto_rejected: false,
            })
        }
    }
}
