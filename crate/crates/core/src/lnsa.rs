//! Local alignment: exact k-nearest neighbors, maximum-likelihood local
//! intrinsic dimensionality over neighbor distance ratios, the directed and
//! symmetrized local discrepancies, and the analytic subgradient.
//!
//! All logarithms are natural. Neighbor ties break by ascending point index
//! so results and gradients are reproducible.

use ndarray::Array2;

use crate::cloud::{self, DistanceMatrix, PointCloud, DEFAULT_EPSILON_DIST};
use crate::error::{NsaError, Result};

/// Cap applied to local-dimensionality estimates when the distance ratios
/// carry no information (all neighbors equidistant).
pub const DEFAULT_LID_MAX: f64 = 1e6;

/// Per-point ordered neighbor indices and distances.
#[derive(Debug, Clone)]
pub struct NeighborList {
    k: usize,
    indices: Array2<usize>,
    distances: Array2<f64>,
}

impl NeighborList {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n_points(&self) -> usize {
        self.indices.nrows()
    }

    /// Neighbor indices of point `i`, nearest first.
    pub fn neighbors(&self, i: usize) -> &[usize] {
        self.indices.row(i).to_slice().expect("contiguous row")
    }

    /// Distances matching [`NeighborList::neighbors`].
    pub fn distances(&self, i: usize) -> &[f64] {
        self.distances.row(i).to_slice().expect("contiguous row")
    }
}

fn check_k(n: usize, k: usize) -> Result<()> {
    if k < 1 || k + 1 > n {
        return Err(NsaError::InvalidInput(format!(
            "k = {k} must satisfy 1 <= k <= N - 1 with N = {n}"
        )));
    }
    Ok(())
}

fn select_row(dists: &[f64], i: usize, k: usize) -> (Vec<usize>, Vec<f64>) {
    let mut order: Vec<usize> = (0..dists.len()).filter(|&j| j != i).collect();
    order.sort_unstable_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(a.cmp(&b)));
    order.truncate(k);
    let d = order.iter().map(|&j| dists[j]).collect();
    (order, d)
}

/// Exact k nearest neighbors of every point by Euclidean distance, self
/// excluded, ties broken by ascending index.
pub fn knn(cloud: &PointCloud, k: usize) -> Result<NeighborList> {
    let d = cloud::pairwise_distances(cloud);
    knn_from_matrix(&d, k)
}

/// Exact k nearest neighbors read off a precomputed distance matrix
/// (Euclidean or geodesic).
pub fn knn_from_matrix(dists: &DistanceMatrix, k: usize) -> Result<NeighborList> {
    let n = dists.n_points();
    check_k(n, k)?;
    let mut indices = Array2::zeros((n, k));
    let mut distances = Array2::zeros((n, k));
    for i in 0..n {
        let row = dists.values().row(i);
        let (idx, d) = select_row(row.to_slice().expect("contiguous row"), i, k);
        for (c, (&j, &dj)) in idx.iter().zip(d.iter()).enumerate() {
            indices[(i, c)] = j;
            distances[(i, c)] = dj;
        }
    }
    Ok(NeighborList { k, indices, distances })
}

/// Inverse approximate dimensionality of a distance profile: the mean of
/// `-ln(d_l / d_last)` over the tuple, with numerators floored at `eps`.
///
/// Errors when the reference (last) distance itself is at or below the floor.
pub(crate) fn inv_ad_from_distances(dists: &[f64], eps: f64) -> Result<f64> {
    let k = dists.len();
    let d_last = dists[k - 1];
    if d_last <= eps {
        return Err(NsaError::DegenerateNeighborhood(format!(
            "reference neighbor distance {d_last} at or below the floor {eps}"
        )));
    }
    let mut acc = 0.0;
    for &d in dists {
        acc += (d.max(eps) / d_last).ln();
    }
    Ok(-acc / k as f64)
}

/// Inverse approximate dimensionality of point `i` over an arbitrary ordered
/// neighbor tuple, measured in `cloud`. The last tuple element supplies the
/// reference denominator; the result can be negative when the tuple is not
/// distance-sorted in this cloud.
pub fn ad_inverse(i: usize, tuple: &[usize], cloud: &PointCloud) -> Result<f64> {
    if tuple.is_empty() {
        return Err(NsaError::InvalidInput("empty neighbor tuple".into()));
    }
    if tuple.contains(&i) {
        return Err(NsaError::InvalidInput(format!("tuple for point {i} must exclude it")));
    }
    let n = cloud.n_points();
    if i >= n || tuple.iter().any(|&j| j >= n) {
        return Err(NsaError::InvalidInput("tuple index out of range".into()));
    }
    let xi = cloud.row(i);
    let dists: Vec<f64> = tuple
        .iter()
        .map(|&j| cloud::euclidean(xi, cloud.row(j)))
        .collect();
    inv_ad_from_distances(&dists, DEFAULT_EPSILON_DIST)
}

fn clamp_lid(inv: f64, lid_max: f64) -> f64 {
    if inv == 0.0 {
        lid_max
    } else {
        (1.0 / inv).min(lid_max)
    }
}

/// Maximum-likelihood local intrinsic dimensionality of point `i`: the
/// reciprocal of [`ad_inverse`] over the point's own k nearest neighbors,
/// clamped at [`DEFAULT_LID_MAX`].
pub fn lid(i: usize, cloud: &PointCloud, k: usize) -> Result<f64> {
    check_k(cloud.n_points(), k)?;
    if i >= cloud.n_points() {
        return Err(NsaError::InvalidInput(format!("index {i} out of range")));
    }
    let xi = cloud.row(i);
    let all: Vec<f64> = (0..cloud.n_points())
        .map(|j| cloud::euclidean(xi, cloud.row(j)))
        .collect();
    let (_, dists) = select_row(&all, i, k);
    let inv = inv_ad_from_distances(&dists, DEFAULT_EPSILON_DIST)?;
    Ok(clamp_lid(inv, DEFAULT_LID_MAX))
}

/// Intrinsic dimensionality of the whole cloud: the harmonic-style aggregate
/// `(mean of inverse lids)^-1`, clamped at [`DEFAULT_LID_MAX`].
pub fn intrinsic_dim(cloud: &PointCloud, k: usize) -> Result<f64> {
    let nbrs = knn(cloud, k)?;
    let n = cloud.n_points();
    let mut acc = 0.0;
    for i in 0..n {
        acc += inv_ad_from_distances(nbrs.distances(i), DEFAULT_EPSILON_DIST)?;
    }
    Ok(clamp_lid(acc / n as f64, DEFAULT_LID_MAX))
}

/// Inverse approximate dimensionality of point `i` over a neighbor tuple
/// selected in another cloud, with distances measured in `target`.
pub fn symmetric_lid_inverse(
    i: usize,
    source_neighbors: &NeighborList,
    target: &PointCloud,
) -> Result<f64> {
    if source_neighbors.n_points() != target.n_points() {
        return Err(NsaError::ShapeError(format!(
            "neighbor list covers {} points, target has {}",
            source_neighbors.n_points(),
            target.n_points()
        )));
    }
    ad_inverse(i, source_neighbors.neighbors(i), target)
}

/// Inverse lids of every point read off a distance matrix and its own
/// neighbor list.
pub(crate) fn inv_lids_from_neighbors(nbrs: &NeighborList, eps: f64) -> Result<Vec<f64>> {
    (0..nbrs.n_points())
        .map(|i| inv_ad_from_distances(nbrs.distances(i), eps))
        .collect()
}

/// Directed local discrepancy and its per-point terms, with neighborhoods
/// and reference inverse lids supplied by the caller. `measured` provides
/// the distances for the tuple side.
pub(crate) fn directed_from_reference(
    nbrs: &NeighborList,
    ref_inv_lids: &[f64],
    measured: &PointCloud,
    eps: f64,
) -> Result<(f64, Vec<f64>)> {
    let n = measured.n_points();
    let mut per_point = Vec::with_capacity(n);
    for i in 0..n {
        let xi = measured.row(i);
        let dists: Vec<f64> = nbrs
            .neighbors(i)
            .iter()
            .map(|&j| cloud::euclidean(xi, measured.row(j)))
            .collect();
        let a = inv_ad_from_distances(&dists, eps)?;
        let diff = ref_inv_lids[i] - a;
        per_point.push(diff * diff);
    }
    let total = per_point.iter().sum::<f64>() / n as f64;
    Ok((total, per_point))
}

/// Directed local discrepancy with neighborhoods selected in `y`:
/// the mean over points of the squared gap between the inverse lid of the
/// point in `y` and the inverse approximate dimensionality of the same
/// tuple measured in `x`.
pub fn lnsa_directed(x: &PointCloud, y: &PointCloud, k: usize) -> Result<(f64, Vec<f64>)> {
    if x.n_points() != y.n_points() {
        return Err(NsaError::ShapeError(format!(
            "clouds must have equal point counts, got {} and {}",
            x.n_points(),
            y.n_points()
        )));
    }
    let nbrs = knn(y, k)?;
    let ref_inv = inv_lids_from_neighbors(&nbrs, DEFAULT_EPSILON_DIST)?;
    directed_from_reference(&nbrs, &ref_inv, x, DEFAULT_EPSILON_DIST)
}

/// Both directed local discrepancies and their sum.
#[derive(Debug, Clone, serde::Serialize)]
pub struct LnsaReport {
    /// Neighborhoods selected in `y`, tuples re-measured in `x`.
    pub directed_xy: f64,
    /// Neighborhoods selected in `x`, tuples re-measured in `y`.
    pub directed_yx: f64,
    /// Sum of the two directed values.
    pub metric: f64,
    pub per_point_xy: Vec<f64>,
    pub per_point_yx: Vec<f64>,
}

/// Symmetrized local discrepancy.
pub fn lnsa_metric(x: &PointCloud, y: &PointCloud, k: usize) -> Result<LnsaReport> {
    let (directed_xy, per_point_xy) = lnsa_directed(x, y, k)?;
    let (directed_yx, per_point_yx) = lnsa_directed(y, x, k)?;
    Ok(LnsaReport {
        directed_xy,
        directed_yx,
        metric: directed_xy + directed_yx,
        per_point_xy,
        per_point_yx,
    })
}

/// Gradient of the directed discrepancy with the reference side frozen.
///
/// Neighbor tuples are held fixed (they come from the reference), so the
/// derivative flows only through the measured distances. Tuple distances at
/// or below the floor contribute nothing: the floored value is locally
/// constant there.
pub(crate) fn grad_from_reference(
    nbrs: &NeighborList,
    ref_inv_lids: &[f64],
    z: &PointCloud,
    eps: f64,
) -> Result<Array2<f64>> {
    let n = z.n_points();
    let dim = z.dim();
    let k = nbrs.k();
    let kf = k as f64;
    let mut grad: Array2<f64> = Array2::zeros((n, dim));

    for j in 0..n {
        let zj = z.row(j);
        let tuple = nbrs.neighbors(j);
        let dists: Vec<f64> = tuple
            .iter()
            .map(|&t| cloud::euclidean(zj, z.row(t)))
            .collect();
        let a = inv_ad_from_distances(&dists, eps)?;
        let outer = -2.0 * (ref_inv_lids[j] - a) / n as f64;
        if outer == 0.0 {
            continue;
        }
        for (pos, (&t, &d)) in tuple.iter().zip(dists.iter()).enumerate() {
            if d <= eps {
                continue;
            }
            let coeff = if pos + 1 == k { (kf - 1.0) / kf } else { -1.0 / kf };
            let w = outer * coeff / (d * d);
            let zt = z.row(t);
            for c in 0..dim {
                let delta = zj[c] - zt[c];
                grad[(j, c)] += w * delta;
                grad[(t, c)] -= w * delta;
            }
        }
    }

    if grad.iter().any(|v| !v.is_finite()) {
        return Err(NsaError::NumericalError("non-finite gradient entry".into()));
    }
    Ok(grad)
}

/// Gradient of the directed discrepancy `LNSA` of `z` against the fixed
/// reference `x` (neighborhoods selected in `x`), with respect to the
/// coordinates of `z`.
pub fn lnsa_grad(x: &PointCloud, z: &PointCloud, k: usize) -> Result<Array2<f64>> {
    if x.n_points() != z.n_points() {
        return Err(NsaError::ShapeError(format!(
            "clouds must have equal point counts, got {} and {}",
            x.n_points(),
            z.n_points()
        )));
    }
    let nbrs = knn(x, k)?;
    let ref_inv = inv_lids_from_neighbors(&nbrs, DEFAULT_EPSILON_DIST)?;
    grad_from_reference(&nbrs, &ref_inv, z, DEFAULT_EPSILON_DIST)
}
