use rand::Rng;

use super::{Hyperparams, LeafParams, NodeId, RulePool, Tree};

/// Probability that a node at `depth` is internal: `alpha (1 + d)^-beta`.
#[inline]
pub fn split_probability(depth: u32, h: &Hyperparams) -> f64 {
    h.tree_alpha * (1.0 + depth as f64).powf(-h.tree_beta)
}

/// Log prior of the tree shape under the depth-dependent branching process.
///
/// Split-rule selection probabilities are left out; they cancel in every
/// Metropolis-Hastings ratio because rules are proposed from the same
/// uniform pool the prior draws from.
pub fn tree_log_prior(tree: &Tree, h: &Hyperparams) -> f64 {
    let mut lp = 0.0;
    let mut stack = vec![Tree::ROOT];
    while let Some(id) = stack.pop() {
        let p = split_probability(tree.depth(id), h);
        match tree.children(id) {
            Some((l, r)) => {
                lp += p.ln();
                stack.push(l);
                stack.push(r);
            }
            None => lp += (-p).ln_1p(),
        }
    }
    lp
}

/// Draw a tree shape from the prior, with rules drawn from `pool`.
///
/// Nodes deeper than `max_depth` are forced to be leaves. Leaf parameters
/// are left at their defaults.
pub fn sample_prior_tree<R: Rng + ?Sized>(
    pool: &RulePool,
    h: &Hyperparams,
    max_depth: u32,
    rng: &mut R,
) -> Tree {
    let mut tree = Tree::stump(LeafParams::default());
    let mut frontier: Vec<NodeId> = vec![Tree::ROOT];
    while let Some(id) = frontier.pop() {
        let depth = tree.depth(id);
        if depth >= max_depth || pool.is_empty() {
            continue;
        }
        if rng.random::<f64>() < split_probability(depth, h) {
            let rule = pool.draw(rng).expect("pool is non-empty");
            let (l, r) = tree.grow(id, rule, LeafParams::default(), LeafParams::default());
            frontier.push(r);
            frontier.push(l);
        }
    }
    tree
}
