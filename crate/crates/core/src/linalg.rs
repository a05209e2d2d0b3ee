//! Dense numerical kernels used by the solver: thin/truncated SVD, the
//! orthogonal-Procrustes maximizer, Euclidean simplex projection, seeded
//! k-means, and an optimal-assignment solver.
//!
//! All functions are pure; none of them mutates its inputs.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::{Error, Mat, Result};

/// Lloyd iteration cap for [`kmeans`].
const KMEANS_MAX_ITERS: usize = 100;
/// Number of k-means++ restarts; the restart with the lowest
/// within-cluster sum of squares wins, earliest restart on ties.
const KMEANS_RESTARTS: usize = 10;

/// Thin SVD factors: `left * diag(singular) * right^T` reconstructs the
/// input. Both factor matrices have orthonormal columns and the singular
/// values are sorted non-increasing.
#[derive(Debug, Clone)]
pub struct SvdFactors {
    pub left: Mat,
    pub singular: Vec<f64>,
    pub right: Mat,
}

impl SvdFactors {
    /// Multiplies the factors back together.
    pub fn reconstruct(&self) -> Mat {
        let s = DVector::from_vec(self.singular.clone());
        &self.left * Mat::from_diagonal(&s) * self.right.transpose()
    }

    /// Number of singular triplets held.
    pub fn rank(&self) -> usize {
        self.singular.len()
    }
}

fn check_finite(x: &Mat, what: &str) -> Result<()> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!("{what} has non-finite entries")));
    }
    Ok(())
}

fn check_nonempty(x: &Mat, what: &str) -> Result<()> {
    if x.nrows() == 0 || x.ncols() == 0 {
        return Err(Error::InvalidInput(format!(
            "{what} must have at least one row and one column"
        )));
    }
    Ok(())
}

/// Thin singular value decomposition with a deterministic sign convention:
/// each left singular vector is flipped so its largest-magnitude entry is
/// positive (the paired right vector is flipped with it).
pub fn thin_svd(x: &Mat) -> Result<SvdFactors> {
    check_nonempty(x, "svd input")?;
    check_finite(x, "svd input")?;

    let svd = x.clone().svd(true, true);
    let u = svd.u.expect("u requested");
    let v_t = svd.v_t.expect("v_t requested");
    let mut left = u;
    let mut right = v_t.transpose();
    let mut singular: Vec<f64> = svd.singular_values.iter().copied().collect();

    // nalgebra returns sorted values, but the contract must not depend on it.
    let mut order: Vec<usize> = (0..singular.len()).collect();
    if singular.windows(2).any(|w| w[0] < w[1]) {
        order.sort_by(|&a, &b| singular[b].partial_cmp(&singular[a]).unwrap());
        left = left.select_columns(order.iter());
        right = right.select_columns(order.iter());
        singular = order.iter().map(|&j| singular[j]).collect();
    }

    for j in 0..singular.len() {
        let col = left.column(j);
        let mut pivot = 0;
        for i in 1..col.len() {
            if col[i].abs() > col[pivot].abs() {
                pivot = i;
            }
        }
        if col[pivot] < 0.0 {
            left.column_mut(j).neg_mut();
            right.column_mut(j).neg_mut();
        }
    }

    Ok(SvdFactors { left, singular, right })
}

/// Top-`k` singular triplets of `x`.
pub fn truncated_svd(x: &Mat, k: usize) -> Result<SvdFactors> {
    let max_rank = x.nrows().min(x.ncols());
    if k == 0 || k > max_rank {
        return Err(Error::InvalidArgument(format!(
            "truncation rank {k} out of range 1..={max_rank}"
        )));
    }
    let full = thin_svd(x)?;
    Ok(SvdFactors {
        left: full.left.columns(0, k).into_owned(),
        singular: full.singular[..k].to_vec(),
        right: full.right.columns(0, k).into_owned(),
    })
}

/// Maximizer of `Tr(Y^T b)` over p×q matrices with orthonormal columns:
/// `Y = U V^T` from the thin SVD of `b`. Requires p ≥ q.
pub fn procrustes_maximizer(b: &Mat) -> Result<Mat> {
    if b.nrows() < b.ncols() {
        return Err(Error::InvalidShape(format!(
            "procrustes input must have rows >= cols, got {}x{}",
            b.nrows(),
            b.ncols()
        )));
    }
    let svd = thin_svd(b)?;
    Ok(&svd.left * svd.right.transpose())
}

/// Euclidean projection onto the probability simplex `{g >= 0, sum g = 1}`.
///
/// When the uniform shift `eta = (1 - sum h)/m` leaves every entry
/// non-negative the projection is exactly `h + eta`, the KKT closed form;
/// otherwise the exact sort-based projection clips the negative entries.
pub fn simplex_project(h: &[f64]) -> Result<Vec<f64>> {
    if h.is_empty() {
        return Err(Error::InvalidArgument("cannot project an empty vector".into()));
    }
    if h.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("projection input has non-finite entries".into()));
    }
    let m = h.len() as f64;
    let eta = (1.0 - h.iter().sum::<f64>()) / m;
    if h.iter().all(|&v| v + eta >= 0.0) {
        return Ok(h.iter().map(|&v| v + eta).collect());
    }

    let mut sorted = h.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut cumulative = 0.0;
    let mut threshold = 0.0;
    for (i, &v) in sorted.iter().enumerate() {
        cumulative += v;
        let t = (cumulative - 1.0) / (i + 1) as f64;
        if v - t > 0.0 {
            threshold = t;
        }
    }
    Ok(h.iter().map(|&v| (v - threshold).max(0.0)).collect())
}

/// Seeded k-means on the rows of `points`: k-means++ seeding, Lloyd
/// iterations, multiple restarts, best objective kept. Labels are
/// 0-based cluster ids.
pub fn kmeans(points: &Mat, k: usize, seed: u64) -> Result<Vec<usize>> {
    kmeans_detailed(points, k, seed).map(|(labels, _)| labels)
}

/// As [`kmeans`] but also returns the winning restart's within-cluster
/// sum of squares after every Lloyd assignment step.
pub(crate) fn kmeans_detailed(points: &Mat, k: usize, seed: u64) -> Result<(Vec<usize>, Vec<f64>)> {
    let n = points.nrows();
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!(
            "cluster count {k} out of range 1..={n}"
        )));
    }
    check_finite(points, "k-means input")?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(f64, Vec<usize>, Vec<f64>)> = None;
    for _ in 0..KMEANS_RESTARTS {
        let centers = plus_plus_centers(points, k, &mut rng);
        let (labels, trace) = lloyd(points, centers);
        let objective = *trace.last().expect("at least one assignment");
        if best.as_ref().is_none_or(|(b, _, _)| objective < *b) {
            best = Some((objective, labels, trace));
        }
    }
    let (_, labels, trace) = best.expect("at least one restart");
    Ok((labels, trace))
}

fn dist2(points: &Mat, i: usize, centers: &Mat, c: usize) -> f64 {
    let mut acc = 0.0;
    for d in 0..points.ncols() {
        let diff = points[(i, d)] - centers[(c, d)];
        acc += diff * diff;
    }
    acc
}

/// k-means++ seeding: first center uniform, the rest sampled with
/// probability proportional to squared distance from the chosen set.
fn plus_plus_centers(points: &Mat, k: usize, rng: &mut ChaCha8Rng) -> Mat {
    let n = points.nrows();
    let mut chosen = Vec::with_capacity(k);
    chosen.push(rng.random_range(0..n));
    let mut d2: Vec<f64> = (0..n)
        .map(|i| dist2(points, i, &points.rows(chosen[0], 1).into_owned(), 0))
        .collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut r = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if r < w {
                    pick = i;
                    break;
                }
                r -= w;
            }
            pick
        } else {
            // All points coincide with chosen centers; take the first unused.
            (0..n).find(|i| !chosen.contains(i)).unwrap_or(0)
        };
        chosen.push(next);
        let row = points.rows(next, 1).into_owned();
        for i in 0..n {
            let d = dist2(points, i, &row, 0);
            if d < d2[i] {
                d2[i] = d;
            }
        }
    }
    Mat::from_fn(k, points.ncols(), |c, d| points[(chosen[c], d)])
}

/// Lloyd iterations until assignments stabilize; returns the labels and
/// the objective after each assignment step (non-increasing).
fn lloyd(points: &Mat, mut centers: Mat) -> (Vec<usize>, Vec<f64>) {
    let n = points.nrows();
    let k = centers.nrows();
    let dims = points.ncols();
    let mut labels = vec![0usize; n];
    let mut trace = Vec::new();
    for _ in 0..KMEANS_MAX_ITERS {
        let mut changed = false;
        let mut objective = 0.0;
        for i in 0..n {
            let mut best_c = 0;
            let mut best_d = dist2(points, i, &centers, 0);
            for c in 1..k {
                let d = dist2(points, i, &centers, c);
                if d < best_d {
                    best_d = d;
                    best_c = c;
                }
            }
            if labels[i] != best_c {
                labels[i] = best_c;
                changed = true;
            }
            objective += best_d;
        }
        trace.push(objective);
        if !changed && trace.len() > 1 {
            break;
        }

        let mut counts = vec![0usize; k];
        for &l in &labels {
            counts[l] += 1;
        }
        // Re-seat empty clusters at the point farthest from its center.
        for c in 0..k {
            if counts[c] > 0 {
                continue;
            }
            let far = (0..n)
                .max_by(|&a, &b| {
                    dist2(points, a, &centers, labels[a])
                        .partial_cmp(&dist2(points, b, &centers, labels[b]))
                        .unwrap()
                })
                .expect("non-empty point set");
            counts[labels[far]] -= 1;
            labels[far] = c;
            counts[c] = 1;
            changed = true;
        }

        centers.fill(0.0);
        for i in 0..n {
            for d in 0..dims {
                centers[(labels[i], d)] += points[(i, d)];
            }
        }
        for c in 0..k {
            let count = counts[c].max(1) as f64;
            for d in 0..dims {
                centers[(c, d)] /= count;
            }
        }
        if !changed {
            break;
        }
    }
    (labels, trace)
}

/// Minimum-cost assignment on a square cost matrix (Hungarian algorithm
/// with potentials, O(n^3)). Returns `perm` with `perm[row] = column`.
pub fn optimal_assignment(cost: &Mat) -> Result<Vec<usize>> {
    if cost.nrows() != cost.ncols() {
        return Err(Error::InvalidShape(format!(
            "assignment cost must be square, got {}x{}",
            cost.nrows(),
            cost.ncols()
        )));
    }
    check_nonempty(cost, "assignment cost")?;
    check_finite(cost, "assignment cost")?;

    let n = cost.nrows();
    // 1-indexed with column 0 as the virtual start of augmenting paths.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut matched_row = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        matched_row[0] = i;
        let mut j0 = 0usize;
        let mut min_slack = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = matched_row[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let slack = cost[(i0 - 1, j - 1)] - u[i0] - v[j];
                if slack < min_slack[j] {
                    min_slack[j] = slack;
                    way[j] = j0;
                }
                if min_slack[j] < delta {
                    delta = min_slack[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[matched_row[j]] += delta;
                    v[j] -= delta;
                } else {
                    min_slack[j] -= delta;
                }
            }
            j0 = j1;
            if matched_row[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            matched_row[j0] = matched_row[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut perm = vec![0usize; n];
    for j in 1..=n {
        perm[matched_row[j] - 1] = j - 1;
    }
    Ok(perm)
}

/// Orthonormalizes a seeded Gaussian matrix by thin QR. Requires
/// `rows >= cols`; the result has orthonormal columns.
pub fn random_orthonormal(rows: usize, cols: usize, rng: &mut impl Rng) -> Mat {
    assert!(rows >= cols, "orthonormal columns need rows >= cols");
    let g = Mat::from_fn(rows, cols, |_, _| StandardNormal.sample(rng));
    g.qr().q()
}
