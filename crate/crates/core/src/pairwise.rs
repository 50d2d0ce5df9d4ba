//! Anchor-based pairwise supervision blocks.
//!
//! A block holds the p×n similarity matrix between a set of anchor rows
//! and every training item, together with the relevance scale used to
//! turn bit counts into regression targets.

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rng::Rng;

/// Per-item label sets. Single-label data is the special case where every
/// set is a singleton.
#[derive(Debug, Clone)]
pub struct LabelData {
    labels: Vec<Vec<u32>>,
}

impl LabelData {
    /// Builds label data; every item must carry at least one label.
    /// Duplicate labels within an item are collapsed.
    pub fn new(labels: Vec<Vec<u32>>) -> Result<LabelData> {
        if labels.iter().any(|set| set.is_empty()) {
            return Err(Error::InvalidArgument(
                "every item needs at least one label".into(),
            ));
        }
        let labels = labels
            .into_iter()
            .map(|mut set| {
                set.sort_unstable();
                set.dedup();
                set
            })
            .collect();
        Ok(LabelData { labels })
    }

    pub fn from_single(classes: &[u32]) -> LabelData {
        LabelData {
            labels: classes.iter().map(|&c| vec![c]).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn is_single_label(&self) -> bool {
        self.labels.iter().all(|set| set.len() == 1)
    }

    /// Sorted label set of one item.
    pub fn item(&self, i: usize) -> &[u32] {
        &self.labels[i]
    }

    /// Number of labels shared by items i and j.
    pub fn common_labels(&self, i: usize, j: usize) -> usize {
        common_count(&self.labels[i], &self.labels[j])
    }

    /// Number of labels shared by two sorted label sets, possibly from
    /// different datasets.
    pub fn common_labels_between(a: &[u32], b: &[u32]) -> usize {
        common_count(a, b)
    }

    /// True when items i and j share at least one label.
    pub fn share_label(&self, i: usize, j: usize) -> bool {
        self.common_labels(i, j) > 0
    }
}

fn common_count(a: &[u32], b: &[u32]) -> usize {
    let mut i = 0;
    let mut j = 0;
    let mut count = 0;
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                count += 1;
                i += 1;
                j += 1;
            }
        }
    }
    count
}

/// Anchor-vs-training similarity block with its relevance scale.
#[derive(Debug, Clone)]
pub struct PairwiseBlock {
    /// p×n similarity entries.
    pub block: Matrix,
    /// Training-row index of each anchor.
    pub anchor_idx: Vec<usize>,
    /// Maximum relevance among supervised pairs (self pairs included).
    pub r_max: f64,
    /// Weight assigned to dissimilar pairs; negative.
    pub alpha: f64,
    /// Target scale m / r_max; set once the bit count is known.
    pub lambda: Option<f64>,
}

impl PairwiseBlock {
    pub fn anchors(&self) -> usize {
        self.block.rows()
    }

    pub fn items(&self) -> usize {
        self.block.cols()
    }
}

/// Draws p distinct training indices, uniform without replacement,
/// deterministic for a seed.
pub fn sample_anchors(n: usize, p: usize, seed: u64) -> Result<Vec<usize>> {
    if p == 0 || p > n {
        return Err(Error::InvalidArgument(format!(
            "anchor count must satisfy 1 <= p <= n, got p={p}, n={n}"
        )));
    }
    let mut rng = Rng::new(seed);
    Ok(rng.sample_distinct(n, p))
}

/// Single-label block: +1 when the anchor and the item share the label,
/// −1 otherwise. r_max = 1 and alpha = −1 by convention.
pub fn build_single_label(labels: &LabelData, anchors: &[usize]) -> Result<PairwiseBlock> {
    if labels.is_empty() {
        return Err(Error::InvalidArgument("empty label set".into()));
    }
    check_anchors(labels.len(), anchors)?;
    let n = labels.len();
    let p = anchors.len();
    let mut data = vec![0.0f64; p * n];
    for (row, &a) in anchors.iter().enumerate() {
        for j in 0..n {
            data[row * n + j] = if labels.share_label(a, j) { 1.0 } else { -1.0 };
        }
    }
    Ok(PairwiseBlock {
        block: Matrix::from_vec(p, n, data)?,
        anchor_idx: anchors.to_vec(),
        r_max: 1.0,
        alpha: -1.0,
        lambda: None,
    })
}

/// Multi-label block: the common-label count r for similar pairs, alpha
/// for dissimilar ones. r_max is the maximum over all positive entries of
/// the block (self pairs included) and alpha = −r_max/2.
pub fn build_multi_label(labels: &LabelData, anchors: &[usize]) -> Result<PairwiseBlock> {
    if labels.is_empty() {
        return Err(Error::InvalidArgument("empty label set".into()));
    }
    check_anchors(labels.len(), anchors)?;
    let n = labels.len();
    let p = anchors.len();
    let mut counts = vec![0usize; p * n];
    let mut r_max = 0usize;
    for (row, &a) in anchors.iter().enumerate() {
        for j in 0..n {
            let r = labels.common_labels(a, j);
            counts[row * n + j] = r;
            r_max = r_max.max(r);
        }
    }
    // Every anchor shares all its labels with itself, so r_max >= 1.
    let r_max = r_max as f64;
    let alpha = -r_max / 2.0;
    let data: Vec<f64> = counts
        .iter()
        .map(|&r| if r > 0 { r as f64 } else { alpha })
        .collect();
    Ok(PairwiseBlock {
        block: Matrix::from_vec(p, n, data)?,
        anchor_idx: anchors.to_vec(),
        r_max,
        alpha,
        lambda: None,
    })
}

/// Returns the block with lambda = m / r_max; nothing else changes.
pub fn set_lambda(block: &PairwiseBlock, m: usize) -> PairwiseBlock {
    let mut out = block.clone();
    out.lambda = Some(m as f64 / block.r_max);
    out
}

fn check_anchors(n: usize, anchors: &[usize]) -> Result<()> {
    if anchors.is_empty() {
        return Err(Error::InvalidArgument("anchor list is empty".into()));
    }
    if let Some(&bad) = anchors.iter().find(|&&a| a >= n) {
        return Err(Error::InvalidArgument(format!(
            "anchor index {bad} out of range for {n} items"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    #[test]
    fn sample_anchors_full_permutation() {
        let idx = sample_anchors(5, 5, 1).unwrap();
        let mut sorted = idx.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn sample_anchors_deterministic() {
        let a = sample_anchors(100, 10, 42).unwrap();
        let b = sample_anchors(100, 10, 42).unwrap();
        assert_eq!(a, b);
        let c = sample_anchors(100, 10, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn sample_anchors_large_distinct() {
        let idx = sample_anchors(10_000, 1000, 7).unwrap();
        assert_eq!(idx.len(), 1000);
        let mut sorted = idx.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), 1000);
    }

    #[test]
    fn sample_anchors_rejects_oversized() {
        assert!(sample_anchors(5, 6, 0).is_err());
        assert!(sample_anchors(5, 0, 0).is_err());
    }

    #[test]
    fn single_label_direct_case() {
        let labels = LabelData::from_single(&[0, 0, 1]);
        let s = build_single_label(&labels, &[0, 2]).unwrap();
        assert_eq!(s.block.row(0), &[1.0, 1.0, -1.0]);
        assert_eq!(s.block.row(1), &[-1.0, -1.0, 1.0]);
        assert_eq!(s.r_max, 1.0);
        assert_eq!(s.alpha, -1.0);
    }

    #[test]
    fn single_label_all_same() {
        let labels = LabelData::from_single(&[3, 3, 3, 3]);
        let s = build_single_label(&labels, &[1, 2]).unwrap();
        assert!(s.block.values().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn single_label_distinct_diagonal() {
        let labels = LabelData::from_single(&[0, 1, 2]);
        let s = build_single_label(&labels, &[0, 1, 2]).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 1.0 } else { -1.0 };
                assert_eq!(s.block.get(i, j), expect);
            }
        }
    }

    #[test]
    fn multi_label_direct_case() {
        let labels = LabelData::new(vec![vec![1, 2], vec![2, 3], vec![4]]).unwrap();
        let s = build_multi_label(&labels, &[0, 1, 2]).unwrap();
        assert_eq!(s.r_max, 2.0);
        assert_eq!(s.alpha, -1.0);
        assert_eq!(s.block.row(0), &[2.0, 1.0, -1.0]);
        assert_eq!(s.block.row(1), &[1.0, 2.0, -1.0]);
        assert_eq!(s.block.row(2), &[-1.0, -1.0, 1.0]);
    }

    #[test]
    fn multi_label_disjoint_off_diagonal() {
        let labels = LabelData::new(vec![vec![0], vec![1], vec![2]]).unwrap();
        let s = build_multi_label(&labels, &[0, 1, 2]).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                if i == j {
                    assert!(s.block.get(i, j) > 0.0);
                } else {
                    assert_eq!(s.block.get(i, j), s.alpha);
                }
            }
        }
    }

    #[test]
    fn multi_label_matches_double_loop_oracle() {
        let mut rng = Rng::new(20);
        let n = 20;
        let labels: Vec<Vec<u32>> = (0..n)
            .map(|_| {
                let k = 1 + rng.below(4);
                (0..k).map(|_| rng.below(6) as u32).collect()
            })
            .collect();
        let labels = LabelData::new(labels).unwrap();
        let anchors = sample_anchors(n, 8, 3).unwrap();
        let s = build_multi_label(&labels, &anchors).unwrap();

        // Direct double-loop recomputation of every entry and r_max.
        let mut r_max = 0usize;
        for &a in &anchors {
            for j in 0..n {
                let mut r = 0;
                for la in labels.item(a) {
                    if labels.item(j).contains(la) {
                        r += 1;
                    }
                }
                r_max = r_max.max(r);
            }
        }
        assert_eq!(s.r_max, r_max as f64);
        for (row, &a) in anchors.iter().enumerate() {
            for j in 0..n {
                let mut r = 0;
                for la in labels.item(a) {
                    if labels.item(j).contains(la) {
                        r += 1;
                    }
                }
                let expect = if r > 0 { r as f64 } else { -(r_max as f64) / 2.0 };
                assert_eq!(s.block.get(row, j), expect);
            }
        }
    }

    #[test]
    fn set_lambda_cases() {
        let labels = LabelData::from_single(&[0, 1]);
        let s = build_single_label(&labels, &[0]).unwrap();
        assert_eq!(set_lambda(&s, 16).lambda, Some(16.0));

        let mut s2 = s.clone();
        s2.r_max = 2.0;
        assert_eq!(set_lambda(&s2, 16).lambda, Some(8.0));
        let mut s4 = s.clone();
        s4.r_max = 4.0;
        assert_eq!(set_lambda(&s4, 8).lambda, Some(2.0));
    }

    #[test]
    fn scaled_targets_stay_within_code_range() {
        // |lambda * s_ij| <= m for every entry.
        let mut rng = Rng::new(77);
        let n = 30;
        let labels: Vec<Vec<u32>> = (0..n)
            .map(|_| {
                let k = 1 + rng.below(3);
                (0..k).map(|_| rng.below(5) as u32).collect()
            })
            .collect();
        let labels = LabelData::new(labels).unwrap();
        let anchors = sample_anchors(n, 10, 5).unwrap();
        let m = 16;
        let s = set_lambda(&build_multi_label(&labels, &anchors).unwrap(), m);
        let lambda = s.lambda.unwrap();
        for &v in s.block.values() {
            assert!((lambda * v).abs() <= m as f64 + 1e-12);
        }
    }

    #[test]
    fn anchor_sub_block_symmetry() {
        let mut rng = Rng::new(9);
        let n = 25;
        let labels: Vec<Vec<u32>> = (0..n)
            .map(|_| {
                let k = 1 + rng.below(3);
                (0..k).map(|_| rng.below(4) as u32).collect()
            })
            .collect();
        let labels = LabelData::new(labels).unwrap();
        let anchors = sample_anchors(n, 9, 2).unwrap();
        for builder in [build_single_label, build_multi_label] {
            let s = builder(&labels, &anchors).unwrap();
            for i in 0..anchors.len() {
                for j in 0..anchors.len() {
                    assert_eq!(s.block.get(i, anchors[j]), s.block.get(j, anchors[i]));
                }
            }
        }
    }

    #[test]
    fn single_label_agrees_with_multi_label_on_singletons() {
        let classes = [0u32, 1, 0, 2, 1, 0];
        let labels = LabelData::from_single(&classes);
        let anchors = vec![0, 3, 4];
        let single = build_single_label(&labels, &anchors).unwrap();
        let multi = build_multi_label(&labels, &anchors).unwrap();
        // Same similar/dissimilar pattern; conventions differ only in scale.
        assert_eq!(multi.r_max, 1.0);
        assert_eq!(multi.alpha, -0.5);
        for i in 0..anchors.len() {
            for j in 0..classes.len() {
                let a = single.block.get(i, j);
                let b = multi.block.get(i, j);
                assert_eq!(a > 0.0, b > 0.0);
                if a > 0.0 {
                    assert_eq!(a, b);
                }
            }
        }
    }

    #[test]
    fn empty_labels_rejected() {
        assert!(LabelData::new(vec![vec![1], vec![]]).is_err());
        let empty = LabelData { labels: vec![] };
        assert!(build_single_label(&empty, &[0]).is_err());
        assert!(build_multi_label(&empty, &[0]).is_err());
    }
}
