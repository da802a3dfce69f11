//! The weighted alignment loss, its combined gradient, the minibatch
//! estimator for the global term, and a finite-difference gradient checker.

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::cloud::{
    self, NormMode, NormalizationPolicy, PointCloud, DEFAULT_EPSILON_DIST, DEFAULT_EPSILON_NORM,
};
use crate::error::{NsaError, Result};
use crate::gnsa;
use crate::lnsa::{self, DEFAULT_LID_MAX};

/// Weights, neighbor count, normalization policy, seed, and numeric floors
/// shared by the loss, the estimator, and the reducer.
#[derive(Debug, Clone, serde::Serialize)]
pub struct NsaConfig {
    /// Weight of the local term.
    pub l: f64,
    /// Weight of the global term.
    pub g: f64,
    /// Neighbor count for the local term.
    pub k: usize,
    pub policy: NormalizationPolicy,
    pub seed: u64,
    pub epsilon_dist: f64,
    pub epsilon_norm: f64,
    pub lid_max: f64,
}

impl Default for NsaConfig {
    fn default() -> Self {
        Self {
            l: 1.0,
            g: 1.0,
            k: 5,
            policy: NormalizationPolicy::default(),
            seed: 0,
            epsilon_dist: DEFAULT_EPSILON_DIST,
            epsilon_norm: DEFAULT_EPSILON_NORM,
            lid_max: DEFAULT_LID_MAX,
        }
    }
}

impl NsaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.l < 0.0 || self.g < 0.0 || !(self.l + self.g > 0.0) {
            return Err(NsaError::InvalidInput(format!(
                "weights l = {}, g = {} must be non-negative with a positive sum",
                self.l, self.g
            )));
        }
        if self.k < 1 {
            return Err(NsaError::InvalidInput("k must be at least 1".into()));
        }
        if !(self.epsilon_dist > 0.0 && self.epsilon_norm > 0.0 && self.lid_max > 0.0) {
            return Err(NsaError::InvalidInput("floors and caps must be positive".into()));
        }
        Ok(())
    }
}

/// Weighted loss `g * GNSA(x, z) + l * LNSA(z against reference x)`.
///
/// Neighborhoods for the local term are selected in the fixed reference `x`.
/// Components with zero weight are skipped entirely.
pub fn nsa_loss(x: &PointCloud, z: &PointCloud, cfg: &NsaConfig) -> Result<f64> {
    cfg.validate()?;
    let mut loss = 0.0;
    if cfg.g > 0.0 {
        let nx = cloud::compute_normalizer_with(x, &cfg.policy, cfg.epsilon_norm)?;
        let nz = cloud::compute_normalizer_with(z, &cfg.policy, cfg.epsilon_norm)?;
        loss += cfg.g * gnsa::gnsa_with_normalizers(x, z, nx, nz)?.total;
    }
    if cfg.l > 0.0 {
        let nbrs = lnsa::knn(x, cfg.k)?;
        let ref_inv = lnsa::inv_lids_from_neighbors(&nbrs, cfg.epsilon_dist)?;
        loss += cfg.l * lnsa::directed_from_reference(&nbrs, &ref_inv, z, cfg.epsilon_dist)?.0;
    }
    Ok(loss)
}

/// Gradient of [`nsa_loss`] with respect to the coordinates of `z`.
pub fn nsa_grad(x: &PointCloud, z: &PointCloud, cfg: &NsaConfig) -> Result<Array2<f64>> {
    cfg.validate()?;
    if x.n_points() != z.n_points() {
        return Err(NsaError::ShapeError(format!(
            "clouds must have equal point counts, got {} and {}",
            x.n_points(),
            z.n_points()
        )));
    }
    let mut grad = Array2::zeros((z.n_points(), z.dim()));
    if cfg.g > 0.0 {
        let nx = cloud::compute_normalizer_with(x, &cfg.policy, cfg.epsilon_norm)?;
        let mx = cloud::pairwise_distances(x).values() / nx.value();
        grad += &(gnsa::grad_wrt_cloud(z, &mx, &cfg.policy, cfg.epsilon_dist)? * cfg.g);
    }
    if cfg.l > 0.0 {
        let nbrs = lnsa::knn(x, cfg.k)?;
        let ref_inv = lnsa::inv_lids_from_neighbors(&nbrs, cfg.epsilon_dist)?;
        grad += &(lnsa::grad_from_reference(&nbrs, &ref_inv, z, cfg.epsilon_dist)? * cfg.l);
    }
    Ok(grad)
}

/// Outcome of the minibatch study of the global term.
#[derive(Debug, Clone, serde::Serialize)]
pub struct SubsetEstimate {
    pub trials: usize,
    pub batch_size: usize,
    pub per_trial: Vec<f64>,
    pub mean: f64,
    pub full_value: f64,
    pub rel_error: f64,
}

/// Where the estimator's normalizers come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormalizerSource {
    /// Full-dataset normalizers held fixed across trials; the estimator is
    /// unbiased for the full value.
    FullDataset,
    /// Normalizers recomputed on each sampled batch, matching what a
    /// training loop sees; this variant is biased.
    PerBatch,
}

/// Monte-Carlo study of the global discrepancy over paired index subsets.
///
/// Each trial samples `batch_size` indices uniformly without replacement
/// (the same indices in both clouds), evaluates the global term on the
/// sub-clouds, and compares the mean across trials to the full value. Trials
/// are independently seeded from `cfg.seed + trial` and may run in parallel.
pub fn subset_estimate(
    x: &PointCloud,
    y: &PointCloud,
    batch_size: usize,
    trials: usize,
    cfg: &NsaConfig,
    normalizers: NormalizerSource,
) -> Result<SubsetEstimate> {
    cfg.validate()?;
    let n = x.n_points();
    if y.n_points() != n {
        return Err(NsaError::ShapeError(format!(
            "clouds must have equal point counts, got {n} and {}",
            y.n_points()
        )));
    }
    if batch_size < 2 || batch_size > n {
        return Err(NsaError::InvalidInput(format!(
            "batch_size {batch_size} must lie in [2, {n}]"
        )));
    }
    if trials < 1 {
        return Err(NsaError::InvalidInput("trials must be at least 1".into()));
    }

    let dx = cloud::pairwise_distances(x);
    let dy = cloud::pairwise_distances(y);
    let nx = cloud::compute_normalizer_with(x, &cfg.policy, cfg.epsilon_norm)?;
    let ny = cloud::compute_normalizer_with(y, &cfg.policy, cfg.epsilon_norm)?;
    let mx = dx.values() / nx.value();
    let my = dy.values() / ny.value();
    let full_value = gnsa::total_from_normalized(&mx, &my);

    let per_trial: Result<Vec<f64>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(t as u64));
            let mut idx = rand::seq::index::sample(&mut rng, n, batch_size).into_vec();
            idx.sort_unstable();
            match normalizers {
                NormalizerSource::FullDataset => {
                    let s = batch_size as f64;
                    let mut acc = 0.0;
                    for &i in &idx {
                        for &j in &idx {
                            acc += (mx[(i, j)] - my[(i, j)]).abs();
                        }
                    }
                    Ok(acc / (s * s))
                }
                NormalizerSource::PerBatch => {
                    let xs = x.select_rows(&idx);
                    let ys = y.select_rows(&idx);
                    let nxb = cloud::compute_normalizer_with(&xs, &cfg.policy, cfg.epsilon_norm)?;
                    let nyb = cloud::compute_normalizer_with(&ys, &cfg.policy, cfg.epsilon_norm)?;
                    let s = batch_size as f64;
                    let mut acc = 0.0;
                    for &i in &idx {
                        for &j in &idx {
                            acc += (dx.get(i, j) / nxb.value() - dy.get(i, j) / nyb.value()).abs();
                        }
                    }
                    Ok(acc / (s * s))
                }
            }
        })
        .collect();
    let per_trial = per_trial?;

    let mean = per_trial.iter().sum::<f64>() / trials as f64;
    let rel_error = (mean - full_value).abs() / full_value.max(1e-12);
    Ok(SubsetEstimate {
        trials,
        batch_size,
        per_trial,
        mean,
        full_value,
        rel_error,
    })
}

/// Which loss the gradient checker exercises.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    Gnsa,
    Lnsa,
    Nsa,
}

/// Discrepancy between the analytic gradient and central differences.
#[derive(Debug, Clone, serde::Serialize)]
pub struct GradCheckReport {
    pub max_abs_err: f64,
    pub max_rel_err: f64,
    /// Coordinate (row, column) attaining the largest relative error.
    pub argmax_coord: (usize, usize),
    pub analytic_inf_norm: f64,
    pub numeric_inf_norm: f64,
}

/// Entries where both gradients sit below this magnitude are compared
/// absolutely rather than relatively.
const GRADCHECK_ATOL: f64 = 1e-8;

/// Central-difference check of the analytic gradient with respect to `z`.
///
/// The differenced loss freezes the discrete structure the analytic
/// derivative assumes fixed: neighbor tuples come from the unperturbed
/// reference, the max-attaining index of `z`'s normalizer is pinned, and a
/// quantile normalizer is held constant.
pub fn grad_check(
    loss: LossKind,
    x: &PointCloud,
    z: &PointCloud,
    cfg: &NsaConfig,
    h: f64,
) -> Result<GradCheckReport> {
    cfg.validate()?;
    if !(h > 0.0) {
        return Err(NsaError::InvalidInput(format!("step h = {h} must be positive")));
    }
    let (wg, wl) = match loss {
        LossKind::Gnsa => (1.0, 0.0),
        LossKind::Lnsa => (0.0, 1.0),
        LossKind::Nsa => (cfg.g, cfg.l),
    };

    // frozen global-side context
    let gnsa_ctx = if wg > 0.0 {
        let nx = cloud::compute_normalizer_with(x, &cfg.policy, cfg.epsilon_norm)?;
        let mx = cloud::pairwise_distances(x).values() / nx.value();
        let detail = cloud::normalizer_detail(z, &cfg.policy, cfg.epsilon_norm)?;
        Some((mx, detail))
    } else {
        None
    };
    // frozen local-side context
    let lnsa_ctx = if wl > 0.0 {
        let nbrs = lnsa::knn(x, cfg.k)?;
        let ref_inv = lnsa::inv_lids_from_neighbors(&nbrs, cfg.epsilon_dist)?;
        Some((nbrs, ref_inv))
    } else {
        None
    };

    let frozen_loss = |zp: &PointCloud| -> Result<f64> {
        let mut total = 0.0;
        if let Some((mx, detail)) = &gnsa_ctx {
            let norm = match (cfg.policy.mode, detail.argmax_index) {
                (NormMode::Quantile(_), _) => detail.value,
                (NormMode::OriginMax, Some(m)) => {
                    let r = zp.row(m);
                    cfg.policy.radius_scale * r.iter().map(|v| v * v).sum::<f64>().sqrt()
                }
                (NormMode::CenteredMax, Some(m)) => {
                    let centered = cloud::center(zp);
                    let r = centered.row(m);
                    cfg.policy.radius_scale * r.iter().map(|v| v * v).sum::<f64>().sqrt()
                }
                _ => detail.value,
            };
            let mz = cloud::pairwise_distances(zp).values() / norm;
            total += wg * gnsa::total_from_normalized(&mz, mx);
        }
        if let Some((nbrs, ref_inv)) = &lnsa_ctx {
            total += wl * lnsa::directed_from_reference(nbrs, ref_inv, zp, cfg.epsilon_dist)?.0;
        }
        Ok(total)
    };

    // analytic side
    let mut analytic = Array2::zeros((z.n_points(), z.dim()));
    if let Some((mx, _)) = &gnsa_ctx {
        analytic += &(gnsa::grad_wrt_cloud(z, mx, &cfg.policy, cfg.epsilon_dist)? * wg);
    }
    if let Some((nbrs, ref_inv)) = &lnsa_ctx {
        analytic += &(lnsa::grad_from_reference(nbrs, ref_inv, z, cfg.epsilon_dist)? * wl);
    }

    // numeric side
    let mut numeric = Array2::zeros((z.n_points(), z.dim()));
    let mut data = z.data().clone();
    for i in 0..z.n_points() {
        for c in 0..z.dim() {
            let orig = data[(i, c)];
            data[(i, c)] = orig + h;
            let plus = frozen_loss(&PointCloud::new(data.clone())?)?;
            data[(i, c)] = orig - h;
            let minus = frozen_loss(&PointCloud::new(data.clone())?)?;
            data[(i, c)] = orig;
            numeric[(i, c)] = (plus - minus) / (2.0 * h);
        }
    }

    let mut max_abs_err = 0.0_f64;
    let mut max_rel_err = 0.0_f64;
    let mut argmax_coord = (0, 0);
    for i in 0..z.n_points() {
        for c in 0..z.dim() {
            let a = analytic[(i, c)];
            let n = numeric[(i, c)];
            let abs = (a - n).abs();
            max_abs_err = max_abs_err.max(abs);
            let denom = a.abs().max(n.abs());
            let rel = if denom < GRADCHECK_ATOL { 0.0 } else { abs / denom };
            if rel > max_rel_err {
                max_rel_err = rel;
                argmax_coord = (i, c);
            }
        }
    }
    let inf = |m: &Array2<f64>| m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    Ok(GradCheckReport {
        max_abs_err,
        max_rel_err,
        argmax_coord,
        analytic_inf_norm: inf(&analytic),
        numeric_inf_norm: inf(&numeric),
    })
}
