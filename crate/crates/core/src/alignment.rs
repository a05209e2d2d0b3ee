//! Permutation derivation for unaligned views: variance-based initial-state
//! probabilities, 2-step Markov transition scores between graph columns,
//! greedy masked matching against the template graph, and adaptive template
//! selection.
//!
//! Treating anchors as intermediate states, the weight column of a sample
//! gives its transition probabilities into the anchor set, so the score of
//! pairing a source sample with a template sample is the probability of a
//! two-hop walk between them.

use crate::Mat;

/// Probability of each sample being the walk's initial state, derived
/// from per-column feature variance.
#[derive(Debug, Clone)]
pub struct InitialStateProbs {
    probs: Vec<f64>,
}

impl InitialStateProbs {
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }
}

/// Initial-state probabilities of the columns of `x`: the population
/// variance of each feature column, normalized to sum 1. Falls back to
/// the uniform distribution when every column variance is at most
/// `eps_guard`.
pub fn initial_state_probs(x: &Mat, eps_guard: f64) -> InitialStateProbs {
    let (d, n) = (x.nrows(), x.ncols());
    assert!(n >= 1, "need at least one column");
    let mut vars = Vec::with_capacity(n);
    for j in 0..n {
        let col = x.column(j);
        let mean = col.sum() / d as f64;
        let var = col.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        vars.push(var);
    }
    let probs = if vars.iter().all(|&v| v <= eps_guard) {
        vec![1.0 / n as f64; n]
    } else {
        let total: f64 = vars.iter().sum();
        vars.iter().map(|&v| v / total).collect()
    };
    debug_assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    InitialStateProbs { probs }
}

/// Probability of the 2-step walk from a source sample to a template
/// sample through the shared anchors: `p0 * sum_h g_i[h] * g_t[h]`,
/// accumulated path by path.
pub fn two_step_score(g_i_col: &[f64], g_t_col: &[f64], p0: f64) -> f64 {
    assert_eq!(g_i_col.len(), g_t_col.len(), "columns must share the anchor count");
    let mut total = 0.0;
    for h in 0..g_i_col.len() {
        total += p0 * g_i_col[h] * g_t_col[h];
    }
    total
}

/// Processing order for one view's unaligned columns: descending
/// initial-state probability (ties broken by the lower column index), with
/// the unaligned template columns as the candidate pool.
#[derive(Debug, Clone)]
pub struct AlignmentPlan {
    pub view: usize,
    pub order: Vec<usize>,
    pub candidates: Vec<usize>,
}

impl AlignmentPlan {
    pub fn new(view: usize, probs: &InitialStateProbs, aligned_count: usize) -> Self {
        let n = probs.len();
        let mut order: Vec<usize> = (aligned_count..n).collect();
        order.sort_by(|&x, &y| {
            probs.probs()[y]
                .partial_cmp(&probs.probs()[x])
                .unwrap()
                .then(x.cmp(&y))
        });
        AlignmentPlan {
            view,
            order,
            candidates: (aligned_count..n).collect(),
        }
    }
}

/// Derives the permutation aligning `g_i` to the template `g_t`.
///
/// The leading `aligned_count` positions are fixed. Unaligned source
/// columns are processed in descending initial-state probability; each is
/// matched to the unmatched template column with the highest 2-step score
/// and that column is masked from later picks, so the result is a
/// bijection. Entry `s` of the returned vector holds the source column
/// placed at template position `s` (column-reindexing form of the
/// permutation matrix).
pub fn derive_permutation(
    g_i: &Mat,
    g_t: &Mat,
    probs: &InitialStateProbs,
    aligned_count: usize,
) -> Vec<usize> {
    let n = g_i.ncols();
    assert_eq!(g_t.ncols(), n, "graphs must share the sample count");
    assert_eq!(g_t.nrows(), g_i.nrows(), "graphs must share the anchor count");
    assert_eq!(probs.len(), n, "one probability per column");
    assert!(aligned_count <= n);

    let mut pi: Vec<usize> = (0..n).collect();
    let unaligned = n - aligned_count;
    if unaligned == 0 {
        return pi;
    }

    // One block product gives every pairwise score: entry (j, s) is the
    // two-hop weight between source column a+j and template column a+s.
    // The initial-state factor is constant per source column, so it never
    // moves the argmax; the plan order is where it enters.
    let scores = g_i.columns(aligned_count, unaligned).transpose()
        * g_t.columns(aligned_count, unaligned);

    let plan = AlignmentPlan::new(0, probs, aligned_count);
    let mut taken = vec![false; unaligned];
    for &col in &plan.order {
        let j = col - aligned_count;
        let mut best_s = usize::MAX;
        let mut best = f64::NEG_INFINITY;
        for s in 0..unaligned {
            if !taken[s] && scores[(j, s)] > best {
                best = scores[(j, s)];
                best_s = s;
            }
        }
        taken[best_s] = true;
        pi[aligned_count + best_s] = col;
    }
    pi
}

/// Total pairing score of a permutation: `sum_s g_i[:, pi[s]] . g_t[:, s]`.
/// Used to compare candidate permutations.
pub fn permutation_score(g_i: &Mat, g_t: &Mat, pi: &[usize]) -> f64 {
    (0..g_t.ncols())
        .map(|s| g_i.column(pi[s]).dot(&g_t.column(s)))
        .sum()
}

/// Index of the largest view weight, smallest index on ties.
pub fn select_template(phi: &[f64]) -> usize {
    assert!(!phi.is_empty(), "need at least one view weight");
    let mut best = 0;
    for (i, &w) in phi.iter().enumerate().skip(1) {
        if w > phi[best] {
            best = i;
        }
    }
    best
}
