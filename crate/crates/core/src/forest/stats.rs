//! Per-leaf sufficient statistics for the three hurdle components.

use super::{NodeId, Tree};
use crate::data::{Category, Dataset};
use crate::dist::ln_gamma;

/// Count, sum and sum of squares of the probit residuals in one leaf.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ProbitStats {
    pub count: usize,
    pub sum: f64,
    pub sum_sq: f64,
}

impl ProbitStats {
    #[inline]
    pub fn push(&mut self, r: f64) {
        self.count += 1;
        self.sum += r;
        self.sum_sq += r * r;
    }

    pub fn merge(&mut self, other: &ProbitStats) {
        self.count += other.count;
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
    }

    /// Residual mean; 0 for an empty leaf.
    pub fn mean(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.sum / self.count as f64
        }
    }

    /// Residual sum of squares about the mean, clamped at 0.
    pub fn sse(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            (self.sum_sq - self.sum * self.sum / self.count as f64).max(0.0)
        }
    }
}

/// Interior-row statistics for the Beta component.
///
/// `row_term` accumulates the parts of the integrated likelihood that do not
/// involve the leaf `lambda`:
/// `kappa ln(kappa eta) + (kappa - 1) ln(1 - y) - ln y - ln Gamma(kappa)`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BetaStats {
    pub count: usize,
    /// `S = sum eta_i ln y_i`, never positive.
    pub weighted_log_y: f64,
    pub row_term: f64,
}

/// Per-`kappa` constants shared by every interior row.
#[derive(Debug, Clone, Copy)]
pub struct KappaTerms {
    pub kappa: f64,
    /// `kappa ln kappa - ln Gamma(kappa)`
    pub offset: f64,
}

impl KappaTerms {
    pub fn new(kappa: f64) -> Self {
        KappaTerms {
            kappa,
            offset: kappa * kappa.ln() - ln_gamma(kappa),
        }
    }
}

impl BetaStats {
    #[inline]
    pub fn push(&mut self, k: &KappaTerms, log_eta: f64, log_y: f64, log1m_y: f64) {
        self.count += 1;
        self.weighted_log_y += log_eta.exp() * log_y;
        self.row_term += k.offset + k.kappa * log_eta + (k.kappa - 1.0) * log1m_y - log_y;
    }

    pub fn merge(&mut self, other: &BetaStats) {
        self.count += other.count;
        self.weighted_log_y += other.weighted_log_y;
        self.row_term += other.row_term;
    }
}

/// All three components' statistics for one leaf.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LeafSuffStats {
    /// Mass-at-one residuals, every row.
    pub one: ProbitStats,
    /// Mass-at-zero residuals, rows with `y < 1`.
    pub zero: ProbitStats,
    /// Interior rows.
    pub beta: BetaStats,
}

impl LeafSuffStats {
    /// Add row `i` of `data` given its residuals and `ln eta`.
    ///
    /// `r0` and `log_eta` are ignored on rows where they are undefined.
    #[inline]
    pub fn push_row(
        &mut self,
        data: &Dataset,
        i: usize,
        r1: f64,
        r0: f64,
        log_eta: f64,
        k: &KappaTerms,
    ) {
        self.one.push(r1);
        match data.category(i) {
            Category::One => {}
            Category::Zero => self.zero.push(r0),
            Category::Interior => {
                self.zero.push(r0);
                self.beta.push(k, log_eta, data.log_y(i), data.log1m_y(i));
            }
        }
    }

    pub fn merge(&mut self, other: &LeafSuffStats) {
        self.one.merge(&other.one);
        self.zero.merge(&other.zero);
        self.beta.merge(&other.beta);
    }
}

/// Statistics for every leaf of `tree`, in [`Tree::leaves`] order.
///
/// `resid1` covers every row. `resid0` is read only on rows with `y < 1` and
/// `eta` (the product of the other trees' `lambda`) only on interior rows.
pub fn leaf_sufficient_stats(
    tree: &Tree,
    data: &Dataset,
    resid1: &[f64],
    resid0: &[f64],
    eta: &[f64],
    kappa: f64,
) -> Vec<(NodeId, LeafSuffStats)> {
    let n = data.n();
    assert!(resid1.len() == n && resid0.len() == n && eta.len() == n);
    let k = KappaTerms::new(kappa);
    let mut slots = vec![LeafSuffStats::default(); tree.capacity()];
    for i in 0..n {
        let leaf = tree.assign_leaf(data.x().row(i));
        let log_eta = if data.is_interior(i) { eta[i].ln() } else { 0.0 };
        slots[leaf].push_row(data, i, resid1[i], resid0[i], log_eta, &k);
    }
    tree.leaves().into_iter().map(|l| (l, slots[l])).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Matrix;
    use crate::forest::{LeafParams, SplitRule};

    fn four_rows() -> Dataset {
        let x = Matrix::from_rows(&[vec![0.0], vec![1.0], vec![2.0], vec![3.0]]).unwrap();
        Dataset::new(x, vec![1.0, 0.0, 0.5, 0.25]).unwrap()
    }

    #[test]
    fn stump_counts_follow_exclusions() {
        let d = four_rows();
        let t = Tree::stump(LeafParams::default());
        let eta = [9.0, 9.0, 0.7, 1.3];
        let s = leaf_sufficient_stats(&t, &d, &[0.1; 4], &[0.2; 4], &eta, 2.0);
        assert_eq!(s.len(), 1);
        let st = s[0].1;
        assert_eq!(st.one.count, 4);
        assert_eq!(st.zero.count, 3);
        assert_eq!(st.beta.count, 2);
        let expect = 0.7 * 0.5f64.ln() + 1.3 * 0.25f64.ln();
        assert!((st.beta.weighted_log_y - expect).abs() < 1e-14);
        assert!(st.beta.weighted_log_y <= 0.0);
    }

    #[test]
    fn empty_leaf_is_zero() {
        let d = four_rows();
        let mut t = Tree::stump(LeafParams::default());
        let (l, r) = t.grow(
            0,
            SplitRule { var: 0, cut: 10.0 },
            LeafParams::default(),
            LeafParams::default(),
        );
        let s = leaf_sufficient_stats(&t, &d, &[1.0; 4], &[1.0; 4], &[1.0; 4], 1.0);
        let right = s.iter().find(|(id, _)| *id == r).unwrap().1;
        assert_eq!(right, LeafSuffStats::default());
        assert_eq!(right.one.sse(), 0.0);
        let left = s.iter().find(|(id, _)| *id == l).unwrap().1;
        assert_eq!(left.one.count, 4);
    }

    #[test]
    fn partition_totals() {
        let d = four_rows();
        let mut t = Tree::stump(LeafParams::default());
        let (l, _) = t.grow(
            0,
            SplitRule { var: 0, cut: 1.0 },
            LeafParams::default(),
            LeafParams::default(),
        );
        t.grow(
            l,
            SplitRule { var: 0, cut: 0.0 },
            LeafParams::default(),
            LeafParams::default(),
        );
        let s = leaf_sufficient_stats(&t, &d, &[0.0; 4], &[0.0; 4], &[1.0; 4], 3.0);
        let tot: usize = s.iter().map(|(_, st)| st.one.count).sum();
        let tot0: usize = s.iter().map(|(_, st)| st.zero.count).sum();
        let totb: usize = s.iter().map(|(_, st)| st.beta.count).sum();
        assert_eq!((tot, tot0, totb), (4, 3, 2));
    }

    #[test]
    fn sse_matches_two_pass() {
        let mut s = ProbitStats::default();
        let r = [0.3, -1.2, 2.5, 0.0, 0.7];
        r.iter().for_each(|&v| s.push(v));
        let m = r.iter().sum::<f64>() / 5.0;
        let sse: f64 = r.iter().map(|v| (v - m).powi(2)).sum();
        assert!((s.sse() - sse).abs() < 1e-12);
        assert!((s.mean() - m).abs() < 1e-15);
    }
}
