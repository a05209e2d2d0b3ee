//! Optimization state and the closed-form block updates: per-view
//! orthonormal projections, shared anchors, per-view anchor graphs, the
//! robust-loss reweighting diagonal, and the view weights, plus evaluation
//! of the full objective.
//!
//! The objective being minimized is
//!
//! ```text
//! sum_i w_i^alpha * l21(P_i X_i - A G_i)  +  mu * sum_{i != t} fro2(G_i Pi_i - G_t)
//! ```
//!
//! subject to orthonormal `P_i` rows, orthonormal `A` columns, simplex
//! columns in every `G_i`, permutations `Pi_i`, and weights `w` on the
//! simplex. Permutations are stored vectorized: entry `s` of a view's
//! permutation holds the source column placed at template position `s`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::MultiViewDataset;
use crate::linalg::{procrustes_maximizer, random_orthonormal, simplex_project};
use crate::{Error, Mat, Result};

/// Solver hyperparameters and controls.
#[derive(Debug, Clone)]
pub struct SolverConfig {
    /// Weight-distribution control; must exceed 1.
    pub alpha: f64,
    /// Trade-off between reconstruction and graph alignment; positive.
    pub mu: f64,
    /// Number of anchors (m).
    pub anchors: usize,
    /// Latent space dimension (d_l).
    pub latent_dim: usize,
    /// Number of clusters (k).
    pub clusters: usize,
    /// Outer iteration cap.
    pub max_iter: usize,
    /// Relative objective-decrease threshold declaring convergence.
    pub rel_tol: f64,
    /// Denominator guard for vanishing residuals.
    pub eps_guard: f64,
    /// Seed driving initialization and the final clustering.
    pub seed: u64,
    /// When false the permutation step is skipped and every view keeps the
    /// identity correspondence (ablation/diagnostics).
    pub align: bool,
    /// Scale each view to unit mean column norm before solving. The anchor
    /// reconstruction `A g` of a simplex column has norm at most 1, so the
    /// latent points must live on a comparable scale for the graph columns
    /// to stay informative.
    pub normalize: bool,
}

impl SolverConfig {
    /// Defaults for `k` clusters: `alpha = 1.5`, `mu = 1e-2`, `m = k`,
    /// `d_l = m`, 60 iterations, relative tolerance `1e-7`.
    pub fn for_clusters(k: usize) -> Self {
        SolverConfig {
            alpha: 1.5,
            mu: 1e-2,
            anchors: k,
            latent_dim: k,
            clusters: k,
            max_iter: 60,
            rel_tol: 1e-7,
            eps_guard: 1e-8,
            seed: 0,
            align: true,
            normalize: true,
        }
    }

    /// Checks the parameter ranges and the dimension chain
    /// `k <= m <= d_l <= min_i d_i` against a dataset.
    pub fn validate(&self, dataset: &MultiViewDataset) -> Result<()> {
        if self.alpha <= 1.0 {
            return Err(Error::Config("alpha must exceed 1".into()));
        }
        if self.mu <= 0.0 || !self.mu.is_finite() {
            return Err(Error::Config("mu must be positive and finite".into()));
        }
        if self.eps_guard <= 0.0 {
            return Err(Error::Config("eps_guard must be positive".into()));
        }
        if self.rel_tol < 0.0 {
            return Err(Error::Config("rel_tol must be non-negative".into()));
        }
        if self.clusters == 0 {
            return Err(Error::Config("cluster count must be positive".into()));
        }
        if self.clusters > self.anchors {
            return Err(Error::Config(format!(
                "cluster count {} exceeds anchor count {}",
                self.clusters, self.anchors
            )));
        }
        if self.anchors > self.latent_dim {
            return Err(Error::Config(format!(
                "anchor count {} exceeds latent dimension {} (anchors must be orthonormal)",
                self.anchors, self.latent_dim
            )));
        }
        let min_dim = dataset.dims().into_iter().min().expect("at least one view");
        if self.latent_dim > min_dim {
            return Err(Error::Config(format!(
                "latent dimension {} exceeds the smallest view dimension {min_dim}",
                self.latent_dim
            )));
        }
        if self.clusters > dataset.n() {
            return Err(Error::Config(format!(
                "cluster count {} exceeds sample count {}",
                self.clusters,
                dataset.n()
            )));
        }
        Ok(())
    }
}

/// All optimization variables of one run.
#[derive(Debug, Clone)]
pub struct ModelState {
    /// Per-view projections into the latent space, `d_l x d_i`, orthonormal rows.
    pub projections: Vec<Mat>,
    /// Shared anchor matrix, `d_l x m`, orthonormal columns.
    pub anchors: Mat,
    /// Per-view anchor graphs, `m x n`, each column on the simplex.
    pub graphs: Vec<Mat>,
    /// Per-view diagonal of the robust-loss reweighting, all entries positive.
    pub reweights: Vec<Vec<f64>>,
    /// Per-view vectorized permutations; entry `s` holds the source column
    /// placed at template position `s`. Identity for the template view.
    pub perms: Vec<Vec<usize>>,
    /// View weights on the simplex.
    pub weights: Vec<f64>,
    /// Index of the template view.
    pub template: usize,
}

impl ModelState {
    /// Column `s` of `G_i Pi_i` without materializing the permutation.
    pub fn permuted_graph_column(&self, i: usize, s: usize) -> nalgebra::DVectorView<'_, f64> {
        self.graphs[i].column(self.perms[i][s])
    }

    /// Inverse of view `i`'s permutation: maps a source column to its
    /// template position.
    pub fn inverse_perm(&self, i: usize) -> Vec<usize> {
        let mut inv = vec![0usize; self.perms[i].len()];
        for (s, &j) in self.perms[i].iter().enumerate() {
            inv[j] = s;
        }
        inv
    }

    /// Verifies every structural invariant; returns a description of the
    /// first violation found.
    pub fn check_invariants(
        &self,
        dataset: &MultiViewDataset,
    ) -> std::result::Result<(), String> {
        let v = dataset.v();
        let aligned = dataset.aligned_count();
        for i in 0..v {
            let q = &self.projections[i];
            let gram = q * q.transpose();
            let eye = Mat::identity(q.nrows(), q.nrows());
            if (gram - eye).abs().max() > 1e-8 {
                return Err(format!("projection {i} rows are not orthonormal"));
            }
        }
        let gram = self.anchors.transpose() * &self.anchors;
        let eye = Mat::identity(self.anchors.ncols(), self.anchors.ncols());
        if (gram - eye).abs().max() > 1e-8 {
            return Err("anchor columns are not orthonormal".into());
        }
        for (i, g) in self.graphs.iter().enumerate() {
            for j in 0..g.ncols() {
                let col = g.column(j);
                if col.iter().any(|&x| x < 0.0) {
                    return Err(format!("graph {i} column {j} has a negative entry"));
                }
                if (col.sum() - 1.0).abs() > 1e-10 {
                    return Err(format!("graph {i} column {j} does not sum to 1"));
                }
            }
        }
        for (i, lam) in self.reweights.iter().enumerate() {
            if lam.iter().any(|&x| x <= 0.0) {
                return Err(format!("reweight vector {i} has a non-positive entry"));
            }
        }
        for (i, pi) in self.perms.iter().enumerate() {
            let mut seen = vec![false; pi.len()];
            for &p in pi {
                if p >= pi.len() || seen[p] {
                    return Err(format!("permutation {i} is not a bijection"));
                }
                seen[p] = true;
            }
            for s in 0..aligned {
                if pi[s] != s {
                    return Err(format!("permutation {i} moves aligned column {s}"));
                }
            }
        }
        if self.perms[self.template].iter().enumerate().any(|(s, &p)| p != s) {
            return Err("template permutation is not the identity".into());
        }
        if self.weights.iter().any(|&w| w < 0.0) {
            return Err("a view weight is negative".into());
        }
        if (self.weights.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err("view weights do not sum to 1".into());
        }
        Ok(())
    }
}

/// Seeded initialization: orthonormalized Gaussian anchors, spectral
/// projections (each view's top left singular vectors), graphs set to the
/// simplex-projected latent embeddings, unit reweights, identity
/// permutations, equal view weights, first view as template.
///
/// The spectral projections matter for permutation recovery: column
/// shuffling leaves a view's left singular vectors untouched, so shuffled
/// copies of the same view start in the same latent frame and their graph
/// columns are comparable from the first iteration. Randomly initialized
/// projections seed each view with an arbitrary anchor-role gauge that the
/// alignment term then entrenches before the first permutation derivation
/// can see any signal.
pub fn init_state(dataset: &MultiViewDataset, config: &SolverConfig) -> Result<ModelState> {
    config.validate(dataset)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n = dataset.n();
    let v = dataset.v();

    let anchors = random_orthonormal(config.latent_dim, config.anchors, &mut rng);
    let projections: Vec<Mat> = dataset
        .views()
        .iter()
        .map(|x| {
            if x.nrows().min(x.ncols()) >= config.latent_dim {
                let svd = crate::linalg::thin_svd(x)?;
                Ok(svd.left.columns(0, config.latent_dim).transpose().into_owned())
            } else {
                // Too few samples for a spectral basis; any orthonormal rows do.
                Ok(random_orthonormal(x.nrows(), config.latent_dim, &mut rng).transpose())
            }
        })
        .collect::<Result<_>>()?;
    let graphs: Vec<Mat> = (0..v)
        .map(|i| {
            let embedded = anchors.transpose() * &projections[i] * dataset.view(i);
            let mut g = Mat::zeros(config.anchors, n);
            for j in 0..n {
                let column: Vec<f64> = embedded.column(j).iter().copied().collect();
                let projected = simplex_project(&column)?;
                for h in 0..config.anchors {
                    g[(h, j)] = projected[h];
                }
            }
            Ok(g)
        })
        .collect::<Result<_>>()?;

    Ok(ModelState {
        projections,
        anchors,
        graphs,
        reweights: vec![vec![1.0; n]; v],
        perms: vec![(0..n).collect(); v],
        weights: vec![1.0 / v as f64; v],
        template: 0,
    })
}

/// `x` with column `j` scaled by `weights[j]`.
fn scale_columns(x: &Mat, weights: &[f64]) -> Mat {
    let mut out = x.clone();
    for (j, &w) in weights.iter().enumerate() {
        out.column_mut(j).scale_mut(w);
    }
    out
}

/// Residual `P_i X_i - A G_i` of one view.
pub fn residual(state: &ModelState, dataset: &MultiViewDataset, i: usize) -> Mat {
    &state.projections[i] * dataset.view(i) - &state.anchors * &state.graphs[i]
}

/// Column norms of one view's residual.
fn residual_column_norms(state: &ModelState, dataset: &MultiViewDataset, i: usize) -> Vec<f64> {
    let e = residual(state, dataset, i);
    (0..e.ncols()).map(|j| e.column(j).norm()).collect()
}

/// Per-view l2,1 reconstruction errors.
pub fn view_errors(state: &ModelState, dataset: &MultiViewDataset) -> Vec<f64> {
    (0..dataset.v())
        .map(|i| residual_column_norms(state, dataset, i).iter().sum())
        .collect()
}

/// Reweighted surrogate `sum_j lam_j ||e_j||^2` of one view; the quantity
/// each projection/anchor/graph step actually minimizes.
pub(crate) fn reconstruction_surrogate(
    state: &ModelState,
    dataset: &MultiViewDataset,
    i: usize,
) -> f64 {
    let e = residual(state, dataset, i);
    (0..e.ncols())
        .map(|j| state.reweights[i][j] * e.column(j).norm_squared())
        .sum()
}

/// New projection for view `i`: the transposed Procrustes maximizer of
/// `X_i Lam_i G_i^T A^T`, keeping the projected data closest to the
/// anchor reconstruction under the current reweighting.
pub fn update_projection(
    state: &ModelState,
    dataset: &MultiViewDataset,
    i: usize,
) -> Result<Mat> {
    let weighted = scale_columns(dataset.view(i), &state.reweights[i]);
    let b = weighted * state.graphs[i].transpose() * state.anchors.transpose();
    Ok(procrustes_maximizer(&b)?.transpose())
}

/// New anchor matrix: Procrustes maximizer of the weight-pooled
/// cross-view statistic, with orthonormal columns.
pub fn update_anchors(
    state: &ModelState,
    dataset: &MultiViewDataset,
    config: &SolverConfig,
) -> Result<Mat> {
    let mut pooled = Mat::zeros(config.latent_dim, config.anchors);
    for i in 0..dataset.v() {
        let w = state.weights[i].powf(config.alpha);
        let projected = scale_columns(&(&state.projections[i] * dataset.view(i)), &state.reweights[i]);
        pooled += w * projected * state.graphs[i].transpose();
    }
    procrustes_maximizer(&pooled)
}

/// New graph for a non-template view `i`: each column is the simplex
/// projection of a convex blend of the latent embedding and the template
/// column currently paired with it.
pub fn update_graph(
    state: &ModelState,
    dataset: &MultiViewDataset,
    config: &SolverConfig,
    i: usize,
) -> Result<Mat> {
    assert_ne!(i, state.template, "template view has its own update");
    let embedded = state.anchors.transpose() * &state.projections[i] * dataset.view(i);
    let w = state.weights[i].powf(config.alpha);
    let inv = state.inverse_perm(i);
    let template = &state.graphs[state.template];
    let m = config.anchors;
    let n = dataset.n();
    let mut out = Mat::zeros(m, n);
    let mut column = vec![0.0; m];
    for j in 0..n {
        let gamma = w * state.reweights[i][j];
        let target = template.column(inv[j]);
        let denom = gamma + config.mu;
        for h in 0..m {
            column[h] = (gamma * embedded[(h, j)] + config.mu * target[h]) / denom;
        }
        let projected = simplex_project(&column)?;
        for h in 0..m {
            out[(h, j)] = projected[h];
        }
    }
    Ok(out)
}

/// New template graph: each column blends the template's own latent
/// embedding with the sum of the currently-aligned non-template columns.
pub fn update_template_graph(
    state: &ModelState,
    dataset: &MultiViewDataset,
    config: &SolverConfig,
) -> Result<Mat> {
    let t = state.template;
    let embedded = state.anchors.transpose() * &state.projections[t] * dataset.view(t);
    let w = state.weights[t].powf(config.alpha);
    let m = config.anchors;
    let n = dataset.n();
    let v = dataset.v();
    let mut out = Mat::zeros(m, n);
    let mut column = vec![0.0; m];
    for j in 0..n {
        let gamma = w * state.reweights[t][j];
        let denom = gamma + config.mu * (v as f64 - 1.0);
        for h in 0..m {
            column[h] = gamma * embedded[(h, j)];
        }
        for i in 0..v {
            if i != t {
                let aligned = state.permuted_graph_column(i, j);
                for h in 0..m {
                    column[h] += config.mu * aligned[h];
                }
            }
        }
        for value in column.iter_mut() {
            *value /= denom;
        }
        let projected = simplex_project(&column)?;
        for h in 0..m {
            out[(h, j)] = projected[h];
        }
    }
    Ok(out)
}

/// New reweighting diagonal for view `i`: half the reciprocal of each
/// residual column norm, guarded away from zero.
pub fn update_reweights(
    state: &ModelState,
    dataset: &MultiViewDataset,
    config: &SolverConfig,
    i: usize,
) -> Vec<f64> {
    residual_column_norms(state, dataset, i)
        .into_iter()
        .map(|norm| 1.0 / (2.0 * norm.max(config.eps_guard)))
        .collect()
}

/// New view weights and the l2,1 errors they were derived from. Weights
/// follow the closed form `w_i = e_i^{1/(1-alpha)} / sum_h e_h^{1/(1-alpha)}`;
/// views with a vanishing error split the full weight equally.
pub fn update_view_weights(
    state: &ModelState,
    dataset: &MultiViewDataset,
    config: &SolverConfig,
) -> (Vec<f64>, Vec<f64>) {
    let errors = view_errors(state, dataset);
    let v = errors.len();
    let vanishing: Vec<usize> = (0..v).filter(|&i| errors[i] <= config.eps_guard).collect();
    let weights = if !vanishing.is_empty() {
        let share = 1.0 / vanishing.len() as f64;
        (0..v)
            .map(|i| if vanishing.contains(&i) { share } else { 0.0 })
            .collect()
    } else {
        let exponent = 1.0 / (1.0 - config.alpha);
        let raw: Vec<f64> = errors.iter().map(|&e| e.powf(exponent)).collect();
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|r| r / total).collect()
    };
    (weights, errors)
}

/// Alignment penalty `sum_{i != t} fro2(G_i Pi_i - G_t)`, computed by
/// column reindexing.
pub fn alignment_penalty(state: &ModelState) -> f64 {
    let t = state.template;
    let template = &state.graphs[t];
    let mut total = 0.0;
    for i in 0..state.graphs.len() {
        if i == t {
            continue;
        }
        for s in 0..template.ncols() {
            let diff = state.permuted_graph_column(i, s) - template.column(s);
            total += diff.norm_squared();
        }
    }
    total
}

/// Full objective value.
pub fn objective(state: &ModelState, dataset: &MultiViewDataset, config: &SolverConfig) -> f64 {
    let errors = view_errors(state, dataset);
    let reconstruction: f64 = errors
        .iter()
        .zip(&state.weights)
        .map(|(&e, &w)| w.powf(config.alpha) * e)
        .sum();
    reconstruction + config.mu * alignment_penalty(state)
}
