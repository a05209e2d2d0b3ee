//! The alternating outer loop: block updates in a fixed order, permutation
//! re-derivation with a descent safeguard, adaptive template re-selection,
//! convergence detection, graph fusion, spectral embedding, and the final
//! cluster assignment.
//!
//! Update order per iteration: projections, anchors, graphs (non-template
//! views first, then the template), reweights, permutations, view weights,
//! template re-selection. The loop stops when the relative objective
//! decrease `(obj(j-1) - obj(j)) / obj(j)` falls below the configured
//! tolerance or the iteration cap is reached; a zero objective declares
//! convergence outright.

use std::time::Instant;

use crate::alignment::{
    derive_permutation, initial_state_probs, permutation_score, select_template,
    InitialStateProbs,
};
use crate::data::MultiViewDataset;
use crate::linalg::{kmeans, truncated_svd};
use crate::model::{
    reconstruction_surrogate,
    alignment_penalty, init_state, objective, update_anchors, update_graph, update_projection,
    update_reweights, update_template_graph, update_view_weights, ModelState, SolverConfig,
};
use crate::{Error, Mat, Result};

/// One row of the convergence trace.
#[derive(Debug, Clone)]
pub struct IterationRecord {
    /// 1-based outer iteration index.
    pub iteration: usize,
    pub objective: f64,
    /// Per-view l2,1 reconstruction errors at the end of the iteration.
    pub view_errors: Vec<f64>,
    /// View weights at the end of the iteration.
    pub weights: Vec<f64>,
    /// Template view in effect when the objective was recorded.
    pub template: usize,
    /// Wall time of this iteration in seconds.
    pub seconds: f64,
}

/// Convergence trace of one run.
#[derive(Debug, Clone, Default)]
pub struct IterationTrace {
    pub records: Vec<IterationRecord>,
}

impl IterationTrace {
    pub fn objectives(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.objective).collect()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Output of a full run: the fused graph, its spectral embedding, hard
/// cluster assignments in first-view column order, the final model state,
/// and the convergence trace.
#[derive(Debug, Clone)]
pub struct ClusteringResult {
    pub fused_graph: Mat,
    pub embedding: Mat,
    pub labels: Vec<usize>,
    pub state: ModelState,
    pub trace: IterationTrace,
}

/// Outcome of one outer iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepStatus {
    Continue,
    Converged,
}

/// Stepping interface around the alternating updates, so callers can
/// inspect the state between iterations.
pub struct Solver {
    /// Working copy of the dataset; views are rescaled when the
    /// configuration asks for normalization.
    data: MultiViewDataset,
    config: SolverConfig,
    state: ModelState,
    probs: Vec<InitialStateProbs>,
    aligned: usize,
    iteration: usize,
    previous_objective: Option<f64>,
    trace: Vec<IterationRecord>,
}

impl Solver {
    pub fn new(dataset: &MultiViewDataset, config: SolverConfig) -> Result<Self> {
        // Initial-state probabilities are scale-invariant (a common factor
        // cancels in the normalization), so the raw views serve directly.
        let probs = dataset
            .views()
            .iter()
            .map(|x| initial_state_probs(x, config.eps_guard))
            .collect();
        let data = if config.normalize {
            normalize_views(dataset)?
        } else {
            dataset.clone()
        };
        let state = init_state(&data, &config)?;
        Ok(Solver {
            aligned: data.aligned_count(),
            data,
            config,
            state,
            probs,
            iteration: 0,
            previous_objective: None,
            trace: Vec::new(),
        })
    }

    pub fn state(&self) -> &ModelState {
        &self.state
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    pub fn trace(&self) -> &[IterationRecord] {
        &self.trace
    }

    /// Runs one full outer iteration and records the objective.
    pub fn step(&mut self) -> Result<StepStatus> {
        let started = Instant::now();
        self.iteration += 1;
        let v = self.data.v();
        let t = self.state.template;

        // The projection step maximizes a linearized trace; with a latent
        // dimension below the view dimension the dropped quadratic term is
        // not constant, so the candidate is adopted only when the exact
        // reweighted surrogate does not get worse.
        for i in 0..v {
            let candidate = update_projection(&self.state, &self.data, i)?;
            let before = reconstruction_surrogate(&self.state, &self.data, i);
            let previous = std::mem::replace(&mut self.state.projections[i], candidate);
            if reconstruction_surrogate(&self.state, &self.data, i) > before {
                self.state.projections[i] = previous;
            }
        }
        self.state.anchors = update_anchors(&self.state, &self.data, &self.config)?;
        for i in 0..v {
            if i != t {
                self.state.graphs[i] = update_graph(&self.state, &self.data, &self.config, i)?;
            }
        }
        self.state.graphs[t] = update_template_graph(&self.state, &self.data, &self.config)?;
        for i in 0..v {
            self.state.reweights[i] = update_reweights(&self.state, &self.data, &self.config, i);
        }

        if self.config.align {
            self.update_permutations();
        }

        let (weights, view_errors) = update_view_weights(&self.state, &self.data, &self.config);
        self.state.weights = weights;

        if self.config.align && v > 1 {
            self.reselect_template();
        }

        let objective = objective(&self.state, &self.data, &self.config);
        if !objective.is_finite() {
            return Err(Error::Numerical {
                iteration: self.iteration,
                reason: "objective is not finite".into(),
            });
        }
        self.trace.push(IterationRecord {
            iteration: self.iteration,
            objective,
            view_errors,
            weights: self.state.weights.clone(),
            template: self.state.template,
            seconds: started.elapsed().as_secs_f64(),
        });

        let status = match self.previous_objective {
            Some(previous) => {
                if objective == 0.0 || (previous - objective) / objective < self.config.rel_tol {
                    StepStatus::Converged
                } else {
                    StepStatus::Continue
                }
            }
            None => StepStatus::Continue,
        };
        self.previous_objective = Some(objective);
        Ok(status)
    }

    /// Re-derives each non-template permutation, keeping the previous one
    /// when it scores at least as well. The greedy search is not guaranteed
    /// to beat an earlier matching, and the safeguard is what the monotone
    /// descent of the alignment term rests on.
    fn update_permutations(&mut self) {
        let t = self.state.template;
        for i in 0..self.data.v() {
            if i == t {
                continue;
            }
            let candidate = derive_permutation(
                &self.state.graphs[i],
                &self.state.graphs[t],
                &self.probs[i],
                self.aligned,
            );
            let current_score =
                permutation_score(&self.state.graphs[i], &self.state.graphs[t], &self.state.perms[i]);
            let candidate_score =
                permutation_score(&self.state.graphs[i], &self.state.graphs[t], &candidate);
            if candidate_score > current_score {
                self.state.perms[i] = candidate;
            }
        }
    }

    /// Moves the template to the view with the largest weight, re-deriving
    /// every permutation against the new template. The switch is kept only
    /// if it does not increase the alignment penalty, so the recorded
    /// objective stays non-increasing.
    fn reselect_template(&mut self) {
        let candidate_t = select_template(&self.state.weights);
        if candidate_t == self.state.template {
            return;
        }
        let n = self.data.n();
        let mut candidate_perms: Vec<Vec<usize>> = Vec::with_capacity(self.data.v());
        for i in 0..self.data.v() {
            if i == candidate_t {
                candidate_perms.push((0..n).collect());
            } else {
                candidate_perms.push(derive_permutation(
                    &self.state.graphs[i],
                    &self.state.graphs[candidate_t],
                    &self.probs[i],
                    self.aligned,
                ));
            }
        }
        let current_penalty = alignment_penalty(&self.state);
        let mut candidate_state = self.state.clone();
        candidate_state.template = candidate_t;
        candidate_state.perms = candidate_perms;
        if alignment_penalty(&candidate_state) <= current_penalty {
            self.state = candidate_state;
        }
    }

    /// Iterates until convergence or the iteration cap; returns whether the
    /// tolerance was reached.
    pub fn run(&mut self) -> Result<bool> {
        while self.iteration < self.config.max_iter {
            if self.step()? == StepStatus::Converged {
                return Ok(true);
            }
        }
        Ok(false)
    }

    /// Fuses the graphs, embeds, clusters, and hands the results back.
    pub fn finish(self) -> Result<ClusteringResult> {
        let fused = fuse_graphs(&self.state);
        let (embedding, template_labels) =
            embed_and_cluster(&fused, self.config.clusters, self.config.seed)?;
        // The clustering labels template positions; report them in
        // first-view column order through the estimated correspondence.
        let n = self.data.n();
        let mut labels = vec![0usize; n];
        for s in 0..n {
            labels[self.state.perms[0][s]] = template_labels[s];
        }
        Ok(ClusteringResult {
            fused_graph: fused,
            embedding,
            labels,
            state: self.state,
            trace: IterationTrace { records: self.trace },
        })
    }
}

/// Runs the whole pipeline: initialization, alternating updates until
/// convergence, fusion, spectral embedding, and k-means.
pub fn fit(dataset: &MultiViewDataset, config: &SolverConfig) -> Result<ClusteringResult> {
    let mut solver = Solver::new(dataset, config.clone())?;
    solver.run()?;
    solver.finish()
}

/// Rescales every view to unit mean column norm. Constant-zero views are
/// left untouched.
fn normalize_views(dataset: &MultiViewDataset) -> Result<MultiViewDataset> {
    let views = dataset
        .views()
        .iter()
        .map(|x| {
            let mean_norm =
                (0..x.ncols()).map(|j| x.column(j).norm()).sum::<f64>() / x.ncols() as f64;
            if mean_norm > 0.0 {
                x / mean_norm
            } else {
                x.clone()
            }
        })
        .collect();
    MultiViewDataset::new(
        views,
        dataset.labels().map(|l| l.to_vec()),
        dataset.rho(),
        dataset.truth_perms().to_vec(),
    )
}

/// Average of the permutation-aligned graphs; every column still sums
/// to 1.
pub fn fuse_graphs(state: &ModelState) -> Mat {
    let v = state.graphs.len();
    let m = state.graphs[0].nrows();
    let n = state.graphs[0].ncols();
    let mut fused = Mat::zeros(m, n);
    for i in 0..v {
        for s in 0..n {
            let col = state.permuted_graph_column(i, s);
            for h in 0..m {
                fused[(h, s)] += col[h];
            }
        }
    }
    fused /= v as f64;
    fused
}

/// Rank-`k` truncated SVD of the fused graph; the sample-side singular
/// vectors (one row per sample) are clustered with seeded k-means.
pub fn embed_and_cluster(fused: &Mat, k: usize, seed: u64) -> Result<(Mat, Vec<usize>)> {
    let max_rank = fused.nrows().min(fused.ncols());
    if k == 0 || k > max_rank {
        return Err(Error::InvalidArgument(format!(
            "cluster count {k} out of range 1..={max_rank} for spectral embedding"
        )));
    }
    let svd = truncated_svd(fused, k)?;
    let embedding = svd.right;
    let labels = kmeans(&embedding, k, seed)?;
    Ok((embedding, labels))
}

/// Estimated first-view correspondence of every view: view `i` column `j`
/// is claimed to describe the sample that ground truth assigns to the
/// template column holding `j`. Used to score permutation recovery against
/// the dataset's recorded shuffles.
pub fn estimated_correspondences(
    state: &ModelState,
    dataset: &MultiViewDataset,
) -> Vec<Vec<usize>> {
    let template_truth = &dataset.truth_perms()[state.template];
    (0..dataset.v())
        .map(|i| {
            let inverse = state.inverse_perm(i);
            (0..dataset.n())
                .map(|j| template_truth[inverse[j]])
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{make_blobs, synthesize_unaligned};
    use crate::metrics::{accuracy, permutation_recovery};

    fn blob_config(k: usize, m: usize, d_l: usize, seed: u64) -> SolverConfig {
        let mut config = SolverConfig::for_clusters(k);
        config.anchors = m;
        config.latent_dim = d_l;
        config.seed = seed;
        config
    }

    #[test]
    fn fit_on_aligned_blobs_is_monotone_and_accurate() {
        let ds = make_blobs(120, 3, 2, &[6, 6], 20.0, 1).unwrap();
        let config = blob_config(3, 3, 3, 7);
        let result = fit(&ds, &config).unwrap();
        let objectives = result.trace.objectives();
        assert!(!objectives.is_empty());
        for w in objectives.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-9), "objective rose: {w:?}");
        }
        let acc = accuracy(ds.labels().unwrap(), &result.labels).unwrap();
        assert!(acc >= 0.95, "accuracy {acc}");
        // Fully aligned data: every permutation stays the identity.
        for perm in &result.state.perms {
            assert!(perm.iter().enumerate().all(|(s, &p)| p == s));
        }
    }

    #[test]
    fn fit_zero_iterations_returns_initial_clustering() {
        let ds = make_blobs(30, 2, 2, &[4, 4], 8.0, 2).unwrap();
        let mut config = blob_config(2, 3, 4, 3);
        config.max_iter = 0;
        let result = fit(&ds, &config).unwrap();
        assert!(result.trace.is_empty());
        assert_eq!(result.labels.len(), 30);
        result.state.check_invariants(&ds).unwrap();
    }

    #[test]
    fn fit_is_deterministic() {
        let ds = make_blobs(60, 2, 2, &[5, 5], 10.0, 4).unwrap();
        let shuffled = synthesize_unaligned(&ds, 0.5, 11).unwrap();
        let config = blob_config(2, 4, 5, 9);
        let a = fit(&shuffled, &config).unwrap();
        let b = fit(&shuffled, &config).unwrap();
        assert_eq!(a.labels, b.labels);
        assert_eq!(a.trace.objectives(), b.trace.objectives());
        assert_eq!(a.state.perms, b.state.perms);
    }

    #[test]
    fn duplicated_view_recovers_permutation() {
        // Sample-level matching needs one anchor per few samples, so the
        // views are high-dimensional and the anchor count matches.
        let base = make_blobs(120, 2, 1, &[40], 6.0, 5).unwrap();
        let view = base.view(0).clone();
        let labels = base.labels().map(|l| l.to_vec());
        let doubled =
            MultiViewDataset::aligned(vec![view.clone(), view], labels).unwrap();
        let shuffled = synthesize_unaligned(&doubled, 0.0, 21).unwrap();
        let mut config = blob_config(2, 40, 40, 13);
        config.mu = 0.05;
        let result = fit(&shuffled, &config).unwrap();
        let est = estimated_correspondences(&result.state, &shuffled);
        // The template view matches itself trivially; score the other one.
        let i = 1 - result.state.template;
        let recovery =
            permutation_recovery(&est[i], &shuffled.truth_perms()[i], 0).unwrap();
        assert!(recovery >= 0.95, "recovery {recovery}");
    }

    #[test]
    fn stepping_keeps_invariants_every_iteration() {
        let ds = make_blobs(50, 2, 3, &[5, 4, 6], 6.0, 6).unwrap();
        let shuffled = synthesize_unaligned(&ds, 0.3, 17).unwrap();
        let config = blob_config(2, 3, 4, 19);
        let mut solver = Solver::new(&shuffled, config).unwrap();
        solver.state().check_invariants(&shuffled).unwrap();
        for _ in 0..10 {
            if solver.step().unwrap() == StepStatus::Converged {
                break;
            }
            solver.state().check_invariants(&shuffled).unwrap();
        }
    }

    #[test]
    fn fuse_single_view_returns_the_graph() {
        let ds = make_blobs(20, 2, 1, &[4], 5.0, 7).unwrap();
        let config = blob_config(2, 3, 4, 23);
        let solver = Solver::new(&ds, config).unwrap();
        let fused = fuse_graphs(solver.state());
        assert!((fused - &solver.state().graphs[0]).norm() < 1e-15);
    }

    #[test]
    fn fuse_averages_identical_graphs() {
        let ds = make_blobs(20, 2, 2, &[4, 4], 5.0, 8).unwrap();
        let config = blob_config(2, 3, 4, 29);
        let mut solver = Solver::new(&ds, config).unwrap();
        solver.state.graphs[1] = solver.state.graphs[0].clone();
        let fused = fuse_graphs(solver.state());
        assert!((fused - &solver.state().graphs[0]).norm() < 1e-12);
    }

    #[test]
    fn fuse_applies_permutations_entrywise() {
        let g0 = Mat::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let g1 = Mat::from_row_slice(2, 2, &[0.2, 0.6, 0.8, 0.4]);
        let state = ModelState {
            projections: vec![Mat::identity(2, 2); 2],
            anchors: Mat::identity(2, 2),
            graphs: vec![g0, g1],
            reweights: vec![vec![1.0; 2]; 2],
            perms: vec![vec![0, 1], vec![1, 0]],
            weights: vec![0.5, 0.5],
            template: 0,
        };
        let fused = fuse_graphs(&state);
        // Column 0 pairs g0[:,0] with g1[:,1]; column 1 pairs g0[:,1] with g1[:,0].
        assert!((fused[(0, 0)] - 0.8).abs() < 1e-15);
        assert!((fused[(1, 0)] - 0.2).abs() < 1e-15);
        assert!((fused[(0, 1)] - 0.1).abs() < 1e-15);
        assert!((fused[(1, 1)] - 0.9).abs() < 1e-15);
        // Fused columns stay on the simplex.
        for j in 0..2 {
            assert!((fused.column(j).sum() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn embed_and_cluster_recovers_block_structure() {
        // Two blocks of identical simplex columns.
        let mut fused = Mat::zeros(3, 8);
        for j in 0..8 {
            if j < 4 {
                fused[(0, j)] = 0.9;
                fused[(1, j)] = 0.1;
            } else {
                fused[(1, j)] = 0.2;
                fused[(2, j)] = 0.8;
            }
        }
        let (embedding, labels) = embed_and_cluster(&fused, 2, 0).unwrap();
        assert_eq!(embedding.ncols(), 2);
        assert_eq!(embedding.nrows(), 8);
        for j in 1..4 {
            assert_eq!(labels[j], labels[0]);
        }
        for j in 5..8 {
            assert_eq!(labels[j], labels[4]);
        }
        assert_ne!(labels[0], labels[4]);
    }

    #[test]
    fn embed_and_cluster_single_cluster() {
        let fused = Mat::from_element(2, 5, 0.5);
        let (_, labels) = embed_and_cluster(&fused, 1, 0).unwrap();
        assert!(labels.iter().all(|&l| l == labels[0]));
    }

    #[test]
    fn embed_rejects_out_of_range_rank() {
        let fused = Mat::from_element(2, 5, 0.5);
        assert!(embed_and_cluster(&fused, 3, 0).is_err());
        assert!(embed_and_cluster(&fused, 0, 0).is_err());
    }

    #[test]
    fn embedding_spans_a_rank_k_fused_graph() {
        // Rank-2 fused graph: the rank-2 embedding must reconstruct it.
        let base = Mat::from_row_slice(3, 2, &[0.9, 0.1, 0.05, 0.7, 0.05, 0.2]);
        let mixer = Mat::from_row_slice(2, 6, &[1.0, 0.0, 0.5, 0.25, 0.75, 0.5,
                                                0.0, 1.0, 0.5, 0.75, 0.25, 0.5]);
        let fused = base * mixer;
        let svd = truncated_svd(&fused, 2).unwrap();
        let reconstructed = svd.reconstruct();
        assert!((reconstructed - &fused).norm() < 1e-8);
    }

    use crate::data::MultiViewDataset;
}
