//! Clustering and alignment quality measures: accuracy under the best
//! label bijection, normalized mutual information, pairwise F-score, and
//! permutation-recovery rate.

use crate::linalg::optimal_assignment;
use crate::{Error, Mat, Result};

/// Metrics of one clustering run.
#[derive(Debug, Clone)]
pub struct EvaluationReport {
    pub acc: f64,
    pub nmi: f64,
    pub fscore: f64,
    /// Fraction of unaligned samples whose estimated correspondence
    /// matches the ground truth, one entry per view.
    pub perm_recovery: Vec<f64>,
    pub wall_time_seconds: f64,
}

fn check_lengths(truth: &[usize], pred: &[usize]) -> Result<()> {
    if truth.len() != pred.len() {
        return Err(Error::InvalidArgument(format!(
            "label vectors differ in length: {} vs {}",
            truth.len(),
            pred.len()
        )));
    }
    if truth.is_empty() {
        return Err(Error::InvalidArgument("label vectors are empty".into()));
    }
    Ok(())
}

/// Maps arbitrary cluster ids to dense indices 0..k.
fn dense_ids(labels: &[usize]) -> (Vec<usize>, usize) {
    let mut seen: Vec<usize> = labels.to_vec();
    seen.sort_unstable();
    seen.dedup();
    let mapped = labels
        .iter()
        .map(|l| seen.binary_search(l).expect("id present"))
        .collect();
    (mapped, seen.len())
}

fn contingency(truth: &[usize], pred: &[usize]) -> (Vec<Vec<usize>>, usize, usize) {
    let (t, kt) = dense_ids(truth);
    let (p, kp) = dense_ids(pred);
    let mut table = vec![vec![0usize; kp]; kt];
    for (a, b) in t.iter().zip(&p) {
        table[*a][*b] += 1;
    }
    (table, kt, kp)
}

/// Clustering accuracy: the best fraction of agreeing samples over all
/// bijections between truth and predicted cluster ids, found by optimal
/// assignment on the (zero-padded) contingency table.
pub fn accuracy(truth: &[usize], pred: &[usize]) -> Result<f64> {
    check_lengths(truth, pred)?;
    let (table, kt, kp) = contingency(truth, pred);
    let k = kt.max(kp);
    let cost = Mat::from_fn(k, k, |i, j| {
        if i < kt && j < kp {
            -(table[i][j] as f64)
        } else {
            0.0
        }
    });
    let assignment = optimal_assignment(&cost)?;
    let matched: usize = assignment
        .iter()
        .enumerate()
        .filter(|(i, &j)| *i < kt && j < kp)
        .map(|(i, &j)| table[i][j])
        .sum();
    Ok(matched as f64 / truth.len() as f64)
}

fn entropy(counts: impl Iterator<Item = usize>, n: f64) -> f64 {
    counts
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Normalized mutual information with geometric-mean normalization:
/// `I(truth; pred) / sqrt(H(truth) * H(pred))`, with 0/0 defined as 0.
pub fn nmi(truth: &[usize], pred: &[usize]) -> Result<f64> {
    check_lengths(truth, pred)?;
    let (table, kt, kp) = contingency(truth, pred);
    let n = truth.len() as f64;
    let row_sums: Vec<usize> = table.iter().map(|r| r.iter().sum()).collect();
    let col_sums: Vec<usize> = (0..kp).map(|j| table.iter().map(|r| r[j]).sum()).collect();
    let h_truth = entropy(row_sums.iter().copied(), n);
    let h_pred = entropy(col_sums.iter().copied(), n);

    let mut mi = 0.0;
    for i in 0..kt {
        for j in 0..kp {
            let c = table[i][j];
            if c == 0 {
                continue;
            }
            let p_joint = c as f64 / n;
            let p_i = row_sums[i] as f64 / n;
            let p_j = col_sums[j] as f64 / n;
            mi += p_joint * (p_joint / (p_i * p_j)).ln();
        }
    }
    let denom = (h_truth * h_pred).sqrt();
    if denom <= 0.0 {
        return Ok(0.0);
    }
    Ok((mi / denom).clamp(0.0, 1.0))
}

fn pairs(c: usize) -> usize {
    c * (c.saturating_sub(1)) / 2
}

/// Pairwise F-score: precision and recall over unordered same-cluster
/// pairs; `F = 2PR/(P+R)`, 0 when `P + R = 0`.
pub fn pairwise_fscore(truth: &[usize], pred: &[usize]) -> Result<f64> {
    check_lengths(truth, pred)?;
    if truth.len() < 2 {
        return Err(Error::InvalidArgument(
            "pairwise F-score needs at least two samples".into(),
        ));
    }
    let (table, kt, kp) = contingency(truth, pred);
    let tp: usize = table.iter().flatten().map(|&c| pairs(c)).sum();
    let pred_pairs: usize = (0..kp)
        .map(|j| pairs(table.iter().map(|r| r[j]).sum()))
        .sum();
    let truth_pairs: usize = (0..kt).map(|i| pairs(table[i].iter().sum())).sum();
    if pred_pairs == 0 && truth_pairs == 0 {
        // Both partitions are all singletons and therefore identical.
        return Ok(1.0);
    }
    let precision = if pred_pairs == 0 {
        0.0
    } else {
        tp as f64 / pred_pairs as f64
    };
    let recall = if truth_pairs == 0 {
        0.0
    } else {
        tp as f64 / truth_pairs as f64
    };
    if precision + recall == 0.0 {
        return Ok(0.0);
    }
    Ok(2.0 * precision * recall / (precision + recall))
}

fn check_bijection(perm: &[usize], what: &str) -> Result<()> {
    let mut seen = vec![false; perm.len()];
    for &p in perm {
        if p >= perm.len() || seen[p] {
            return Err(Error::InvalidArgument(format!(
                "{what} is not a bijection on 0..{}",
                perm.len()
            )));
        }
        seen[p] = true;
    }
    Ok(())
}

/// Fraction of unaligned indices (those at or beyond `aligned_count`)
/// where the estimated correspondence agrees with the ground truth.
/// Returns 1 when the unaligned set is empty.
pub fn permutation_recovery(est: &[usize], truth: &[usize], aligned_count: usize) -> Result<f64> {
    if est.len() != truth.len() {
        return Err(Error::InvalidArgument(format!(
            "permutations differ in length: {} vs {}",
            est.len(),
            truth.len()
        )));
    }
    check_bijection(est, "estimated permutation")?;
    check_bijection(truth, "ground-truth permutation")?;
    if aligned_count > est.len() {
        return Err(Error::InvalidArgument(format!(
            "aligned count {aligned_count} exceeds length {}",
            est.len()
        )));
    }
    let unaligned = est.len() - aligned_count;
    if unaligned == 0 {
        return Ok(1.0);
    }
    let hits = (aligned_count..est.len())
        .filter(|&j| est[j] == truth[j])
        .count();
    Ok(hits as f64 / unaligned as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Brute-force accuracy: maximum agreement over every bijection
    /// between the two (padded) label-id sets.
    fn accuracy_oracle(truth: &[usize], pred: &[usize]) -> f64 {
        let (table, kt, kp) = contingency(truth, pred);
        let k = kt.max(kp);
        let mut ids: Vec<usize> = (0..k).collect();
        let mut best = 0usize;
        permute(&mut ids, 0, &mut |perm| {
            let matched: usize = (0..kt)
                .map(|i| if perm[i] < kp { table[i][perm[i]] } else { 0 })
                .sum();
            best = best.max(matched);
        });
        best as f64 / truth.len() as f64
    }

    fn permute(items: &mut Vec<usize>, start: usize, visit: &mut impl FnMut(&[usize])) {
        if start == items.len() {
            visit(items);
            return;
        }
        for i in start..items.len() {
            items.swap(start, i);
            permute(items, start + 1, visit);
            items.swap(start, i);
        }
    }

    #[test]
    fn accuracy_examples() {
        assert_eq!(accuracy(&[1, 1, 2, 2], &[1, 1, 2, 2]).unwrap(), 1.0);
        assert_eq!(accuracy(&[1, 1, 2, 2], &[7, 7, 3, 3]).unwrap(), 1.0);
        assert_eq!(accuracy(&[1, 1, 2, 2], &[1, 2, 2, 2]).unwrap(), 0.75);
    }

    #[test]
    fn accuracy_rejects_length_mismatch() {
        assert!(accuracy(&[1, 2], &[1]).is_err());
    }

    #[test]
    fn accuracy_handles_rectangular_tables() {
        let acc = accuracy(&[0, 0, 0, 0], &[0, 1, 2, 3]).unwrap();
        assert!((acc - 0.25).abs() < 1e-12);
        let acc = accuracy(&[0, 1, 2, 3], &[0, 0, 0, 0]).unwrap();
        assert!((acc - 0.25).abs() < 1e-12);
    }

    #[test]
    fn nmi_examples() {
        assert!((nmi(&[1, 1, 2, 2], &[1, 1, 2, 2]).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(nmi(&[1, 1, 2, 2], &[1, 2, 1, 2]).unwrap(), 0.0);
        let v = nmi(&[1, 1, 2, 2], &[1, 1, 1, 2]).unwrap();
        assert!((v - 0.3455920299442113).abs() < 1e-12);
    }

    #[test]
    fn nmi_degenerate_partitions() {
        // Single cluster on both sides: zero entropies, defined as 0.
        assert_eq!(nmi(&[1, 1, 1], &[2, 2, 2]).unwrap(), 0.0);
    }

    #[test]
    fn fscore_examples() {
        assert_eq!(pairwise_fscore(&[1, 1, 2, 2], &[1, 1, 2, 2]).unwrap(), 1.0);
        assert_eq!(pairwise_fscore(&[1, 1, 2, 2], &[1, 2, 3, 4]).unwrap(), 0.0);
        let f = pairwise_fscore(&[1, 1, 2, 2], &[1, 1, 1, 2]).unwrap();
        assert!((f - 0.4).abs() < 1e-12);
    }

    #[test]
    fn recovery_examples() {
        assert_eq!(permutation_recovery(&[2, 0, 1], &[2, 0, 1], 0).unwrap(), 1.0);
        assert_eq!(
            permutation_recovery(&[0, 1, 2, 3], &[0, 1, 3, 2], 2).unwrap(),
            0.0
        );
        // n = 6, two coincidences among four unaligned entries.
        let est = [0, 1, 3, 2, 4, 5];
        let truth = [0, 1, 3, 2, 5, 4];
        assert_eq!(permutation_recovery(&est, &truth, 2).unwrap(), 0.5);
        assert_eq!(permutation_recovery(&est, &truth, 6).unwrap(), 1.0);
    }

    #[test]
    fn recovery_rejects_non_bijection() {
        assert!(permutation_recovery(&[0, 0, 1], &[0, 1, 2], 0).is_err());
        assert!(permutation_recovery(&[0, 1, 2], &[0, 1, 5], 0).is_err());
    }

    proptest! {
        #[test]
        fn accuracy_matches_brute_force(
            labels in proptest::collection::vec((0usize..4, 0usize..4), 2..20)
        ) {
            let truth: Vec<usize> = labels.iter().map(|(t, _)| *t).collect();
            let pred: Vec<usize> = labels.iter().map(|(_, p)| *p).collect();
            let fast = accuracy(&truth, &pred).unwrap();
            let slow = accuracy_oracle(&truth, &pred);
            prop_assert!((fast - slow).abs() < 1e-12);
        }

        #[test]
        fn accuracy_invariant_under_relabeling(
            pred in proptest::collection::vec(0usize..4, 4..20),
            shift in 1usize..5
        ) {
            let truth: Vec<usize> = (0..pred.len()).map(|i| i % 3).collect();
            let renamed: Vec<usize> = pred.iter().map(|p| (p + shift) % 4 + 10).collect();
            let a = accuracy(&truth, &pred).unwrap();
            let b = accuracy(&truth, &renamed).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
        }

        #[test]
        fn nmi_symmetric_and_bounded(
            labels in proptest::collection::vec((0usize..3, 0usize..3), 2..20)
        ) {
            let a: Vec<usize> = labels.iter().map(|(t, _)| *t).collect();
            let b: Vec<usize> = labels.iter().map(|(_, p)| *p).collect();
            let ab = nmi(&a, &b).unwrap();
            let ba = nmi(&b, &a).unwrap();
            prop_assert!((ab - ba).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&ab));
        }

        #[test]
        fn fscore_relabeling_and_identity(
            pred in proptest::collection::vec(0usize..3, 2..20)
        ) {
            let renamed: Vec<usize> = pred.iter().map(|p| 5 - p).collect();
            let truth: Vec<usize> = (0..pred.len()).map(|i| i % 2).collect();
            let a = pairwise_fscore(&truth, &pred).unwrap();
            let b = pairwise_fscore(&truth, &renamed).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
            prop_assert!((pairwise_fscore(&pred, &pred).unwrap() - 1.0).abs() < 1e-12);
        }
    }
}
