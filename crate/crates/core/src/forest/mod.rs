//! Shared-forest data structures.
//!
//! Every tree carries, in each leaf, the three parameters of the hurdle
//! model: the probit contribution for the mass at one, the probit
//! contribution for the mass at zero (given `y < 1`), and the log-scale
//! contribution to the interior Beta mean.

mod hyper;
mod moves;
mod prior;
mod stats;

pub use hyper::{Hyperparams, MoveProbs};
pub use moves::{propose_move, MoveKind, Proposal};
pub use prior::{sample_prior_tree, split_probability, tree_log_prior};
pub use stats::{leaf_sufficient_stats, BetaStats, KappaTerms, LeafSuffStats, ProbitStats};

use rand::Rng;

use crate::data::Matrix;

pub type NodeId = usize;

/// `x[var] <= cut` goes left, everything else goes right.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitRule {
    pub var: usize,
    pub cut: f64,
}

impl SplitRule {
    #[inline]
    pub fn goes_left(&self, x: &[f64]) -> bool {
        x[self.var] <= self.cut
    }
}

/// Leaf contributions `(theta1, theta0, mu)` with `lambda = exp(mu)` kept in sync.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeafParams {
    theta1: f64,
    theta0: f64,
    mu: f64,
    lambda: f64,
}

impl LeafParams {
    pub fn new(theta1: f64, theta0: f64, mu: f64) -> Self {
        debug_assert!(theta1.is_finite() && theta0.is_finite() && mu.is_finite());
        LeafParams {
            theta1,
            theta0,
            mu,
            lambda: mu.exp(),
        }
    }

    pub fn theta1(&self) -> f64 {
        self.theta1
    }

    pub fn theta0(&self) -> f64 {
        self.theta0
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }
}

impl Default for LeafParams {
    fn default() -> Self {
        LeafParams::new(0.0, 0.0, 0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum NodeKind {
    Leaf(LeafParams),
    Split {
        rule: SplitRule,
        left: NodeId,
        right: NodeId,
    },
    Free,
}

#[derive(Debug, Clone, PartialEq)]
struct Node {
    parent: Option<NodeId>,
    depth: u32,
    kind: NodeKind,
}

/// Binary tree stored in an index arena. Node 0 is always the root.
///
/// Pruned slots go on a free list and are reused by later grows; trailing
/// free slots are dropped, so grow followed by prune of the same node
/// restores the original arena exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    nodes: Vec<Node>,
    free: Vec<NodeId>,
}

impl Tree {
    pub fn stump(params: LeafParams) -> Self {
        Tree {
            nodes: vec![Node {
                parent: None,
                depth: 0,
                kind: NodeKind::Leaf(params),
            }],
            free: Vec::new(),
        }
    }

    pub const ROOT: NodeId = 0;

    /// Size of the arena, including free slots. Node ids are below this.
    pub fn capacity(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_stump(&self) -> bool {
        self.is_leaf(Self::ROOT)
    }

    #[inline]
    pub fn is_leaf(&self, id: NodeId) -> bool {
        matches!(self.nodes[id].kind, NodeKind::Leaf(_))
    }

    pub fn is_live(&self, id: NodeId) -> bool {
        id < self.nodes.len() && !matches!(self.nodes[id].kind, NodeKind::Free)
    }

    #[inline]
    pub fn depth(&self, id: NodeId) -> u32 {
        self.nodes[id].depth
    }

    pub fn parent(&self, id: NodeId) -> Option<NodeId> {
        self.nodes[id].parent
    }

    pub fn rule(&self, id: NodeId) -> Option<SplitRule> {
        match self.nodes[id].kind {
            NodeKind::Split { rule, .. } => Some(rule),
            _ => None,
        }
    }

    pub fn children(&self, id: NodeId) -> Option<(NodeId, NodeId)> {
        match self.nodes[id].kind {
            NodeKind::Split { left, right, .. } => Some((left, right)),
            _ => None,
        }
    }

    /// Leaf parameters; panics on a non-leaf.
    #[inline]
    pub fn params(&self, id: NodeId) -> &LeafParams {
        match &self.nodes[id].kind {
            NodeKind::Leaf(p) => p,
            _ => panic!("node {id} is not a leaf"),
        }
    }

    pub fn set_params(&mut self, id: NodeId, params: LeafParams) {
        match &mut self.nodes[id].kind {
            NodeKind::Leaf(p) => *p = params,
            _ => panic!("node {id} is not a leaf"),
        }
    }

    /// Leaves in depth-first, left-first order.
    pub fn leaves(&self) -> Vec<NodeId> {
        let mut out = Vec::new();
        self.collect_leaves(Self::ROOT, &mut out);
        out
    }

    /// Leaves of the subtree rooted at `id`, depth-first.
    pub fn collect_leaves(&self, id: NodeId, out: &mut Vec<NodeId>) {
        let mut stack = vec![id];
        while let Some(v) = stack.pop() {
            match self.nodes[v].kind {
                NodeKind::Leaf(_) => out.push(v),
                NodeKind::Split { left, right, .. } => {
                    stack.push(right);
                    stack.push(left);
                }
                NodeKind::Free => unreachable!("free node reachable from root"),
            }
        }
    }

    pub fn internal_nodes(&self) -> Vec<NodeId> {
        (0..self.nodes.len())
            .filter(|&i| matches!(self.nodes[i].kind, NodeKind::Split { .. }))
            .collect()
    }

    /// Internal nodes whose children are both leaves (the prunable ones).
    pub fn prunable_nodes(&self) -> Vec<NodeId> {
        (0..self.nodes.len())
            .filter(|&i| match self.nodes[i].kind {
                NodeKind::Split { left, right, .. } => self.is_leaf(left) && self.is_leaf(right),
                _ => false,
            })
            .collect()
    }

    pub fn num_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n.kind, NodeKind::Leaf(_)))
            .count()
    }

    pub fn max_depth(&self) -> u32 {
        self.nodes
            .iter()
            .filter(|n| matches!(n.kind, NodeKind::Leaf(_)))
            .map(|n| n.depth)
            .max()
            .unwrap_or(0)
    }

    /// The unique leaf whose region contains `x`.
    #[inline]
    pub fn assign_leaf(&self, x: &[f64]) -> NodeId {
        self.descend_from(Self::ROOT, x)
    }

    #[inline]
    pub fn descend_from(&self, mut id: NodeId, x: &[f64]) -> NodeId {
        loop {
            match self.nodes[id].kind {
                NodeKind::Leaf(_) => return id,
                NodeKind::Split { rule, left, right } => {
                    id = if rule.goes_left(x) { left } else { right };
                }
                NodeKind::Free => unreachable!("descended into a free node"),
            }
        }
    }

    /// True when `id` lies in the subtree rooted at `ancestor`.
    pub fn in_subtree(&self, mut id: NodeId, ancestor: NodeId) -> bool {
        loop {
            if id == ancestor {
                return true;
            }
            match self.nodes[id].parent {
                Some(p) => id = p,
                None => return false,
            }
        }
    }

    fn alloc(&mut self, node: Node) -> NodeId {
        // lowest free slot first so allocation order is reproducible
        if let Some(pos) = self
            .free
            .iter()
            .enumerate()
            .min_by_key(|(_, &id)| id)
            .map(|(k, _)| k)
        {
            let id = self.free.swap_remove(pos);
            self.nodes[id] = node;
            id
        } else {
            self.nodes.push(node);
            self.nodes.len() - 1
        }
    }

    /// Turn leaf `id` into a split with two fresh leaves. Returns `(left, right)`.
    pub fn grow(
        &mut self,
        id: NodeId,
        rule: SplitRule,
        left_params: LeafParams,
        right_params: LeafParams,
    ) -> (NodeId, NodeId) {
        assert!(self.is_leaf(id), "grow on non-leaf node {id}");
        let depth = self.nodes[id].depth + 1;
        let left = self.alloc(Node {
            parent: Some(id),
            depth,
            kind: NodeKind::Leaf(left_params),
        });
        let right = self.alloc(Node {
            parent: Some(id),
            depth,
            kind: NodeKind::Leaf(right_params),
        });
        self.nodes[id].kind = NodeKind::Split { rule, left, right };
        (left, right)
    }

    /// Collapse a split whose children are both leaves into a single leaf.
    pub fn prune(&mut self, id: NodeId, params: LeafParams) {
        let (left, right) = self.children(id).expect("prune on a leaf");
        assert!(
            self.is_leaf(left) && self.is_leaf(right),
            "prune on node {id} with non-leaf children"
        );
        for c in [left, right] {
            self.nodes[c].kind = NodeKind::Free;
            self.nodes[c].parent = None;
            self.free.push(c);
        }
        self.nodes[id].kind = NodeKind::Leaf(params);
        while matches!(self.nodes.last().map(|n| &n.kind), Some(NodeKind::Free)) {
            let last = self.nodes.len() - 1;
            self.nodes.pop();
            self.free.retain(|&f| f != last);
        }
    }

    /// Replace the rule at an internal node, keeping its subtree shape.
    pub fn set_rule(&mut self, id: NodeId, new_rule: SplitRule) {
        match &mut self.nodes[id].kind {
            NodeKind::Split { rule, .. } => *rule = new_rule,
            _ => panic!("set_rule on leaf {id}"),
        }
    }

    /// Structural equality that ignores arena slot numbering.
    pub fn same_shape(&self, other: &Tree) -> bool {
        fn walk(a: &Tree, ia: NodeId, b: &Tree, ib: NodeId) -> bool {
            match (&a.nodes[ia].kind, &b.nodes[ib].kind) {
                (NodeKind::Leaf(_), NodeKind::Leaf(_)) => true,
                (
                    NodeKind::Split {
                        rule: ra,
                        left: la,
                        right: rra,
                    },
                    NodeKind::Split {
                        rule: rb,
                        left: lb,
                        right: rrb,
                    },
                ) => ra == rb && walk(a, *la, b, *lb) && walk(a, *rra, b, *rrb),
                _ => false,
            }
        }
        walk(self, Self::ROOT, other, Self::ROOT)
    }

    /// Check arena bookkeeping: parent links, depths, child counts.
    pub fn check_invariants(&self) -> Result<(), String> {
        let mut seen = vec![false; self.nodes.len()];
        let mut stack = vec![(Self::ROOT, None::<NodeId>, 0u32)];
        while let Some((id, parent, depth)) = stack.pop() {
            if seen[id] {
                return Err(format!("node {id} reachable twice"));
            }
            seen[id] = true;
            let node = &self.nodes[id];
            if node.parent != parent {
                return Err(format!("node {id} has wrong parent link"));
            }
            if node.depth != depth {
                return Err(format!("node {id} has depth {} not {depth}", node.depth));
            }
            match node.kind {
                NodeKind::Leaf(p) => {
                    if !(p.theta1.is_finite() && p.theta0.is_finite() && p.mu.is_finite()) {
                        return Err(format!("leaf {id} has non-finite parameters"));
                    }
                    if p.lambda != p.mu.exp() || p.lambda <= 0.0 {
                        return Err(format!("leaf {id} lambda out of sync with mu"));
                    }
                }
                NodeKind::Split { left, right, .. } => {
                    stack.push((left, Some(id), depth + 1));
                    stack.push((right, Some(id), depth + 1));
                }
                NodeKind::Free => return Err(format!("free node {id} reachable")),
            }
        }
        for (id, s) in seen.iter().enumerate() {
            let is_free = matches!(self.nodes[id].kind, NodeKind::Free);
            if *s == is_free {
                return Err(format!("node {id} free-list state inconsistent"));
            }
        }
        Ok(())
    }
}

/// Candidate cutpoints per covariate: the distinct observed training values,
/// excluding each column's maximum (which would leave the right child empty).
#[derive(Debug, Clone, PartialEq)]
pub struct RulePool {
    cuts: Vec<Vec<f64>>,
    splittable: Vec<usize>,
}

impl RulePool {
    pub fn from_matrix(x: &Matrix) -> Self {
        let cuts: Vec<Vec<f64>> = (0..x.cols())
            .map(|j| {
                let mut vals: Vec<f64> = x.column(j).collect();
                vals.sort_by(|a, b| a.total_cmp(b));
                vals.dedup();
                vals.pop();
                vals
            })
            .collect();
        let splittable = (0..cuts.len()).filter(|&j| !cuts[j].is_empty()).collect();
        RulePool { cuts, splittable }
    }

    pub fn is_empty(&self) -> bool {
        self.splittable.is_empty()
    }

    pub fn cuts(&self, var: usize) -> &[f64] {
        &self.cuts[var]
    }

    /// Uniform covariate among the splittable ones, then a uniform cutpoint.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<SplitRule> {
        if self.splittable.is_empty() {
            return None;
        }
        let var = self.splittable[rng.random_range(0..self.splittable.len())];
        let cuts = &self.cuts[var];
        let cut = cuts[rng.random_range(0..cuts.len())];
        Some(SplitRule { var, cut })
    }

    /// Log probability that [`RulePool::draw`] returns `rule`.
    pub fn log_prob(&self, rule: &SplitRule) -> f64 {
        match self.cuts.get(rule.var) {
            Some(c) if c.contains(&rule.cut) => {
                -(self.splittable.len() as f64).ln() - (c.len() as f64).ln()
            }
            _ => f64::NEG_INFINITY,
        }
    }
}

/// The ensemble, in backfitting order.
#[derive(Debug, Clone, PartialEq)]
pub struct Forest {
    trees: Vec<Tree>,
}

/// The three component fits at one covariate row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fits {
    pub f1: f64,
    pub f0: f64,
    pub log_fb: f64,
}

impl Fits {
    pub fn fb(&self) -> f64 {
        self.log_fb.exp()
    }
}

impl Forest {
    pub fn stumps(num_trees: usize) -> Self {
        Forest {
            trees: vec![Tree::stump(LeafParams::default()); num_trees],
        }
    }

    pub fn from_trees(trees: Vec<Tree>) -> Self {
        Forest { trees }
    }

    pub fn len(&self) -> usize {
        self.trees.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trees.is_empty()
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn tree(&self, t: usize) -> &Tree {
        &self.trees[t]
    }

    pub fn tree_mut(&mut self, t: usize) -> &mut Tree {
        &mut self.trees[t]
    }

    /// `f1 = sum theta1`, `f0 = sum theta0`, `log f_b = sum mu`.
    pub fn fits(&self, x: &[f64]) -> Fits {
        let mut out = Fits {
            f1: 0.0,
            f0: 0.0,
            log_fb: 0.0,
        };
        for tree in &self.trees {
            let p = tree.params(tree.assign_leaf(x));
            out.f1 += p.theta1;
            out.f0 += p.theta0;
            out.log_fb += p.mu;
        }
        out
    }

    /// `f_b` as the product of leaf `lambda`s.
    pub fn fb_product(&self, x: &[f64]) -> f64 {
        self.trees
            .iter()
            .map(|t| t.params(t.assign_leaf(x)).lambda)
            .product()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn leaf(v: f64) -> LeafParams {
        LeafParams::new(v, -v, v / 2.0)
    }

    #[test]
    fn stump_assigns_root() {
        let t = Tree::stump(leaf(0.0));
        assert_eq!(t.assign_leaf(&[3.0, -1.0]), Tree::ROOT);
        assert_eq!(t.leaves(), vec![Tree::ROOT]);
    }

    #[test]
    fn single_split_routes_by_rule() {
        let mut t = Tree::stump(leaf(0.0));
        let (l, r) = t.grow(0, SplitRule { var: 0, cut: 0.5 }, leaf(1.0), leaf(2.0));
        assert_eq!(t.assign_leaf(&[0.3, 9.0]), l);
        assert_eq!(t.assign_leaf(&[0.5, 9.0]), l);
        assert_eq!(t.assign_leaf(&[0.7, 9.0]), r);
        t.check_invariants().unwrap();
    }

    #[test]
    fn grow_then_prune_restores_stump() {
        let stump = Tree::stump(leaf(0.25));
        let mut t = stump.clone();
        t.grow(0, SplitRule { var: 1, cut: 0.0 }, leaf(1.0), leaf(2.0));
        t.prune(0, leaf(0.25));
        assert_eq!(t, stump);
    }

    #[test]
    fn free_slots_are_reused() {
        let mut t = Tree::stump(leaf(0.0));
        let (l, _r) = t.grow(0, SplitRule { var: 0, cut: 0.0 }, leaf(0.0), leaf(0.0));
        let (ll, lr) = t.grow(l, SplitRule { var: 0, cut: -1.0 }, leaf(0.0), leaf(0.0));
        t.prune(l, leaf(0.0));
        assert_eq!(t.capacity(), 3);
        let (a, b) = t.grow(l, SplitRule { var: 0, cut: -2.0 }, leaf(0.0), leaf(0.0));
        assert_eq!((a, b), (ll, lr));
        t.check_invariants().unwrap();
    }

    /// Naive recursive oracle: walk the rules from the root by explicit recursion.
    fn oracle_leaf(t: &Tree, id: NodeId, x: &[f64]) -> NodeId {
        match t.children(id) {
            None => id,
            Some((l, r)) => {
                let rule = t.rule(id).unwrap();
                if x[rule.var] <= rule.cut {
                    oracle_leaf(t, l, x)
                } else {
                    oracle_leaf(t, r, x)
                }
            }
        }
    }

    #[test]
    fn random_tree_matches_recursive_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let rows: Vec<Vec<f64>> = (0..100)
            .map(|_| (0..3).map(|_| rng.random::<f64>()).collect())
            .collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let pool = RulePool::from_matrix(&x);
        let mut t = Tree::stump(leaf(0.0));
        for _ in 0..5 {
            let leaves = t.leaves();
            let target = leaves[rng.random_range(0..leaves.len())];
            let rule = pool.draw(&mut rng).unwrap();
            t.grow(target, rule, leaf(0.0), leaf(0.0));
        }
        assert_eq!(t.num_leaves(), 6);
        for i in 0..x.rows() {
            assert_eq!(t.assign_leaf(x.row(i)), oracle_leaf(&t, 0, x.row(i)));
        }
    }

    #[test]
    fn rule_pool_excludes_column_max() {
        let x = Matrix::from_rows(&[vec![1.0, 5.0], vec![2.0, 5.0], vec![2.0, 5.0], vec![3.0, 5.0]])
            .unwrap();
        let pool = RulePool::from_matrix(&x);
        assert_eq!(pool.cuts(0), &[1.0, 2.0]);
        assert!(pool.cuts(1).is_empty());
        let rule = SplitRule { var: 0, cut: 2.0 };
        assert!((pool.log_prob(&rule) - (0.5f64).ln()).abs() < 1e-15);
    }

    #[test]
    fn forest_fb_is_product_of_lambdas() {
        let mut f = Forest::stumps(3);
        f.tree_mut(0).set_params(0, LeafParams::new(0.1, 0.2, 0.3));
        f.tree_mut(2).set_params(0, LeafParams::new(-0.1, 0.0, -1.1));
        let fits = f.fits(&[0.0]);
        assert!((fits.fb() - f.fb_product(&[0.0])).abs() < 1e-14);
        assert!((fits.f1 - 0.0).abs() < 1e-15);
        assert!(fits.fb() > 0.0);
    }
}
