//! Dataset representation, the on-disk directory format, and synthesis of
//! view-unaligned datasets with recorded ground-truth correspondences.
//!
//! A dataset directory contains `manifest.txt` (flat `key=value` lines),
//! one `view_<i>.txt` per view (one matrix row per line, space-separated,
//! 17 significant digits), an optional `labels.txt` (one 1-based class id
//! per line, in first-view sample order), and optional `perm_<i>.txt`
//! files (line `j` holds the 1-based first-view index of view-`i`
//! column `j`).

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::{Error, Mat, Result};

/// A multi-view dataset: `v` feature matrices of shape `d_i x n`
/// (features by samples), optional class labels in first-view sample
/// order, the alignment ratio, and the ground-truth correspondence of
/// each view's column order to first-view order.
#[derive(Debug, Clone)]
pub struct MultiViewDataset {
    views: Vec<Mat>,
    labels: Option<Vec<usize>>,
    rho: f64,
    truth_perms: Vec<Vec<usize>>,
}

impl MultiViewDataset {
    pub fn new(
        views: Vec<Mat>,
        labels: Option<Vec<usize>>,
        rho: f64,
        truth_perms: Vec<Vec<usize>>,
    ) -> Result<Self> {
        if views.is_empty() {
            return Err(Error::InvalidArgument("a dataset needs at least one view".into()));
        }
        let n = views[0].ncols();
        if n == 0 {
            return Err(Error::InvalidArgument("a dataset needs at least one sample".into()));
        }
        for (i, view) in views.iter().enumerate() {
            if view.ncols() != n {
                return Err(Error::InvalidArgument(format!(
                    "view {} has {} samples, expected {n}",
                    i + 1,
                    view.ncols()
                )));
            }
            if view.nrows() == 0 {
                return Err(Error::InvalidArgument(format!("view {} has no features", i + 1)));
            }
            if view.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "view {} contains non-finite entries",
                    i + 1
                )));
            }
        }
        if !(0.0..=1.0).contains(&rho) {
            return Err(Error::InvalidArgument(format!(
                "alignment ratio must lie in [0, 1], got {rho}"
            )));
        }
        if truth_perms.len() != views.len() {
            return Err(Error::InvalidArgument(format!(
                "expected {} truth permutations, got {}",
                views.len(),
                truth_perms.len()
            )));
        }
        let aligned = aligned_count(rho, n);
        for (i, perm) in truth_perms.iter().enumerate() {
            validate_permutation(perm, n, aligned).map_err(|reason| {
                Error::InvalidArgument(format!("truth permutation for view {}: {reason}", i + 1))
            })?;
        }
        if let Some(ref labels) = labels {
            if labels.len() != n {
                return Err(Error::InvalidArgument(format!(
                    "labels length {} does not match sample count {n}",
                    labels.len()
                )));
            }
        }
        Ok(Self { views, labels, rho, truth_perms })
    }

    /// A fully aligned dataset: `rho = 1`, identity correspondences.
    pub fn aligned(views: Vec<Mat>, labels: Option<Vec<usize>>) -> Result<Self> {
        let n = views.first().map(|v| v.ncols()).unwrap_or(0);
        let identity: Vec<usize> = (0..n).collect();
        let perms = vec![identity; views.len()];
        Self::new(views, labels, 1.0, perms)
    }

    pub fn views(&self) -> &[Mat] {
        &self.views
    }

    pub fn view(&self, i: usize) -> &Mat {
        &self.views[i]
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn truth_perms(&self) -> &[Vec<usize>] {
        &self.truth_perms
    }

    /// Number of samples.
    pub fn n(&self) -> usize {
        self.views[0].ncols()
    }

    /// Number of views.
    pub fn v(&self) -> usize {
        self.views.len()
    }

    /// Per-view feature dimensions.
    pub fn dims(&self) -> Vec<usize> {
        self.views.iter().map(|v| v.nrows()).collect()
    }

    /// Number of leading columns with known cross-view correspondence.
    pub fn aligned_count(&self) -> usize {
        aligned_count(self.rho, self.n())
    }

    fn is_fully_aligned(&self) -> bool {
        self.truth_perms
            .iter()
            .all(|p| p.iter().enumerate().all(|(j, &v)| v == j))
    }
}

/// `ceil(rho * n)` with a tolerance for decimal ratios that are not
/// exactly representable (0.1 * 300 must give 30, not 31).
pub fn aligned_count(rho: f64, n: usize) -> usize {
    let raw = rho * n as f64;
    let count = if (raw - raw.round()).abs() < 1e-9 {
        raw.round()
    } else {
        raw.ceil()
    };
    (count as usize).min(n)
}

fn validate_permutation(
    perm: &[usize],
    n: usize,
    aligned: usize,
) -> std::result::Result<(), String> {
    if perm.len() != n {
        return Err(format!("length {} does not match sample count {n}", perm.len()));
    }
    let mut seen = vec![false; n];
    for &p in perm {
        if p >= n || seen[p] {
            return Err("not a bijection".into());
        }
        seen[p] = true;
    }
    for (j, &p) in perm.iter().take(aligned).enumerate() {
        if p != j {
            return Err(format!("aligned block entry {} is not fixed", j + 1));
        }
    }
    Ok(())
}

/// Metadata stored in `manifest.txt`.
#[derive(Debug, Clone)]
pub struct DatasetManifest {
    pub n: usize,
    pub v: usize,
    pub k: usize,
    pub rho: f64,
    pub seed: u64,
    pub view_files: Vec<String>,
    pub view_rows: Vec<usize>,
}

impl DatasetManifest {
    /// Reads and parses `manifest.txt` from a dataset directory.
    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join("manifest.txt");
        let text = fs::read_to_string(&path)
            .map_err(|e| Error::load(path.display().to_string(), e.to_string()))?;
        let mut pairs = std::collections::HashMap::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::load(path.display().to_string(), format!("malformed line `{line}`"))
            })?;
            pairs.insert(key.trim().to_string(), value.trim().to_string());
        }
        let get = |key: &str| -> Result<String> {
            pairs.get(key).cloned().ok_or_else(|| {
                Error::load(path.display().to_string(), format!("missing key `{key}`"))
            })
        };
        let parse_usize = |key: &str| -> Result<usize> {
            get(key)?.parse().map_err(|_| {
                Error::load(path.display().to_string(), format!("key `{key}` is not a count"))
            })
        };
        let n = parse_usize("n")?;
        let v = parse_usize("v")?;
        let k = parse_usize("k")?;
        let rho: f64 = get("rho")?.parse().map_err(|_| {
            Error::load(path.display().to_string(), "key `rho` is not a number".to_string())
        })?;
        let seed: u64 = get("seed")?.parse().map_err(|_| {
            Error::load(path.display().to_string(), "key `seed` is not an integer".to_string())
        })?;
        let mut view_files = Vec::with_capacity(v);
        let mut view_rows = Vec::with_capacity(v);
        for i in 1..=v {
            view_files.push(get(&format!("view_{i}_file"))?);
            view_rows.push(parse_usize(&format!("view_{i}_rows"))?);
        }
        Ok(Self { n, v, k, rho, seed, view_files, view_rows })
    }

    fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "n={}", self.n);
        let _ = writeln!(out, "v={}", self.v);
        let _ = writeln!(out, "k={}", self.k);
        let _ = writeln!(out, "rho={}", self.rho);
        let _ = writeln!(out, "seed={}", self.seed);
        for i in 0..self.v {
            let _ = writeln!(out, "view_{}_file={}", i + 1, self.view_files[i]);
            let _ = writeln!(out, "view_{}_rows={}", i + 1, self.view_rows[i]);
        }
        out
    }
}

/// Writes a dataset directory: manifest, per-view matrices, labels when
/// present, and one correspondence file per view.
pub fn save_dataset(dir: &Path, dataset: &MultiViewDataset, k: usize, seed: u64) -> Result<()> {
    fs::create_dir_all(dir)?;
    let manifest = DatasetManifest {
        n: dataset.n(),
        v: dataset.v(),
        k,
        rho: dataset.rho(),
        seed,
        view_files: (1..=dataset.v()).map(|i| format!("view_{i}.txt")).collect(),
        view_rows: dataset.dims(),
    };
    fs::write(dir.join("manifest.txt"), manifest.render())?;
    for (i, view) in dataset.views().iter().enumerate() {
        let mut out = String::new();
        for r in 0..view.nrows() {
            for c in 0..view.ncols() {
                if c > 0 {
                    out.push(' ');
                }
                let _ = write!(out, "{:.16e}", view[(r, c)]);
            }
            out.push('\n');
        }
        fs::write(dir.join(&manifest.view_files[i]), out)?;
    }
    if let Some(labels) = dataset.labels() {
        let mut out = String::new();
        for &l in labels {
            let _ = writeln!(out, "{}", l + 1);
        }
        fs::write(dir.join("labels.txt"), out)?;
    }
    for (i, perm) in dataset.truth_perms().iter().enumerate() {
        let mut out = String::new();
        for &p in perm {
            let _ = writeln!(out, "{}", p + 1);
        }
        fs::write(dir.join(format!("perm_{}.txt", i + 1)), out)?;
    }
    Ok(())
}

fn load_matrix(path: &PathBuf, rows: usize, cols: usize) -> Result<Mat> {
    let name = path.display().to_string();
    let text = fs::read_to_string(path).map_err(|e| Error::load(&name, e.to_string()))?;
    let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
    if lines.len() != rows {
        return Err(Error::load(&name, format!("expected {rows} rows, found {}", lines.len())));
    }
    let mut matrix = Mat::zeros(rows, cols);
    for (r, line) in lines.iter().enumerate() {
        let values: Vec<&str> = line.split_whitespace().collect();
        if values.len() != cols {
            return Err(Error::load(
                &name,
                format!("row {} has {} columns, expected {cols}", r + 1, values.len()),
            ));
        }
        for (c, token) in values.iter().enumerate() {
            let value: f64 = token
                .parse()
                .map_err(|_| Error::load(&name, format!("bad number `{token}` in row {}", r + 1)))?;
            if !value.is_finite() {
                return Err(Error::load(&name, format!("non-finite entry in row {}", r + 1)));
            }
            matrix[(r, c)] = value;
        }
    }
    Ok(matrix)
}

fn load_indices(path: &PathBuf, n: usize) -> Result<Vec<usize>> {
    let name = path.display().to_string();
    let text = fs::read_to_string(path).map_err(|e| Error::load(&name, e.to_string()))?;
    let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
    if lines.len() != n {
        return Err(Error::load(&name, format!("expected {n} lines, found {}", lines.len())));
    }
    lines
        .iter()
        .enumerate()
        .map(|(j, line)| {
            let value: usize = line.trim().parse().map_err(|_| {
                Error::load(&name, format!("bad index `{}` on line {}", line.trim(), j + 1))
            })?;
            if value == 0 {
                return Err(Error::load(&name, format!("index on line {} must be 1-based", j + 1)));
            }
            Ok(value - 1)
        })
        .collect()
}

/// Loads a dataset directory, validating every file against the manifest.
/// Missing correspondence files mean a fully aligned dataset: identity
/// permutations with `rho = 1`.
pub fn load_dataset(dir: &Path) -> Result<MultiViewDataset> {
    let manifest = DatasetManifest::read(dir)?;
    let mut views = Vec::with_capacity(manifest.v);
    for i in 0..manifest.v {
        let path = dir.join(&manifest.view_files[i]);
        views.push(load_matrix(&path, manifest.view_rows[i], manifest.n)?);
    }
    let labels_path = dir.join("labels.txt");
    let labels = if labels_path.exists() {
        Some(load_indices(&labels_path, manifest.n)?)
    } else {
        None
    };
    let mut perms = Vec::with_capacity(manifest.v);
    let mut any_perm = false;
    for i in 1..=manifest.v {
        let path = dir.join(format!("perm_{i}.txt"));
        if path.exists() {
            any_perm = true;
            perms.push(load_indices(&path, manifest.n)?);
        } else {
            perms.push((0..manifest.n).collect());
        }
    }
    let rho = if any_perm { manifest.rho } else { 1.0 };
    MultiViewDataset::new(views, labels, rho, perms)
        .map_err(|e| Error::load(dir.display().to_string(), e.to_string()))
}

/// Shuffles the unaligned block of every view after the first with a
/// seeded uniform permutation, recording the applied shuffles as the new
/// ground truth. The input must be fully aligned.
pub fn synthesize_unaligned(
    dataset: &MultiViewDataset,
    rho: f64,
    seed: u64,
) -> Result<MultiViewDataset> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::InvalidArgument(format!(
            "alignment ratio must lie in [0, 1], got {rho}"
        )));
    }
    if !dataset.is_fully_aligned() {
        return Err(Error::InvalidArgument(
            "synthesis input must be fully aligned (identity correspondences)".into(),
        ));
    }
    let n = dataset.n();
    let aligned = aligned_count(rho, n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut views = Vec::with_capacity(dataset.v());
    let mut perms = Vec::with_capacity(dataset.v());
    views.push(dataset.view(0).clone());
    perms.push((0..n).collect::<Vec<usize>>());
    for i in 1..dataset.v() {
        let mut perm: Vec<usize> = (0..n).collect();
        // Fisher-Yates on the unaligned block only.
        for j in (aligned + 1..n).rev() {
            let swap = rng.random_range(aligned..=j);
            perm.swap(j, swap);
        }
        let view = dataset.view(i);
        let shuffled = Mat::from_fn(view.nrows(), n, |r, c| view[(r, perm[c])]);
        views.push(shuffled);
        perms.push(perm);
    }
    MultiViewDataset::new(views, dataset.labels().map(|l| l.to_vec()), rho, perms)
}

/// Seeded Gaussian blobs shared across views: `k` clusters with unit
/// noise, cluster means pairwise `separation` apart in every view, labels
/// attached in sample order, fully aligned.
pub fn make_blobs(
    n: usize,
    k: usize,
    v: usize,
    dims: &[usize],
    separation: f64,
    seed: u64,
) -> Result<MultiViewDataset> {
    if dims.len() != v {
        return Err(Error::InvalidArgument(format!(
            "expected {v} view dimensions, got {}",
            dims.len()
        )));
    }
    if k == 0 || n < k {
        return Err(Error::InvalidArgument(format!(
            "need at least one sample per cluster, got n={n}, k={k}"
        )));
    }
    if v == 0 {
        return Err(Error::InvalidArgument("need at least one view".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels: Vec<usize> = (0..n).map(|j| j % k).collect();
    let scale = separation / std::f64::consts::SQRT_2;
    let mut views = Vec::with_capacity(v);
    for &d in dims {
        if d == 0 {
            return Err(Error::InvalidArgument("view dimensions must be positive".into()));
        }
        let means = if k <= d {
            // Scaled basis vectors: pairwise distance exactly `separation`.
            Mat::from_fn(k, d, |c, j| if c == j { scale } else { 0.0 })
        } else {
            let mut m = Mat::from_fn(k, d, |_, _| StandardNormal.sample(&mut rng));
            for c in 0..k {
                let norm = m.row(c).norm().max(1e-12);
                for j in 0..d {
                    m[(c, j)] *= scale / norm;
                }
            }
            m
        };
        let view = Mat::from_fn(d, n, |r, c| {
            let noise: f64 = StandardNormal.sample(&mut rng);
            means[(labels[c], r)] + noise
        });
        views.push(view);
    }
    MultiViewDataset::aligned(views, Some(labels))
}
