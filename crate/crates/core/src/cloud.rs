//! Point-cloud storage, pairwise distances, normalization conventions,
//! centering, and principal-component surgery.
//!
//! Clouds compared together are matched row-by-row: row `i` of one cloud
//! corresponds to row `i` of the other.

use ndarray::{Array1, Array2, ArrayView1, Axis, Zip};

use crate::error::{NsaError, Result};

/// Floor below which a normalizer counts as degenerate.
pub const DEFAULT_EPSILON_NORM: f64 = 1e-12;
/// Floor applied to pairwise distances before logs and divisions.
pub const DEFAULT_EPSILON_DIST: f64 = 1e-12;

/// An `N x D` embedding matrix; row `i` holds the coordinates of instance `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    data: Array2<f64>,
}

impl PointCloud {
    /// Validates shape (`N >= 2`, `D >= 1`) and finiteness.
    pub fn new(data: Array2<f64>) -> Result<Self> {
        let (n, d) = data.dim();
        if n < 2 {
            return Err(NsaError::InvalidInput(format!(
                "point cloud needs at least 2 rows, got {n}"
            )));
        }
        if d < 1 {
            return Err(NsaError::InvalidInput("point cloud needs at least 1 column".into()));
        }
        for ((i, j), v) in data.indexed_iter() {
            if !v.is_finite() {
                return Err(NsaError::InvalidInput(format!(
                    "non-finite entry {v} at row {i}, column {j}"
                )));
            }
        }
        Ok(Self { data })
    }

    /// Convenience constructor from row slices, mostly for tests and generators.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.is_empty() {
            return Err(NsaError::InvalidInput("empty row list".into()));
        }
        let d = rows[0].len();
        if rows.iter().any(|r| r.len() != d) {
            return Err(NsaError::InvalidInput("ragged rows".into()));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let data = Array2::from_shape_vec((rows.len(), d), flat)
            .map_err(|e| NsaError::InvalidInput(e.to_string()))?;
        Self::new(data)
    }

    pub fn n_points(&self) -> usize {
        self.data.nrows()
    }

    pub fn dim(&self) -> usize {
        self.data.ncols()
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn into_data(self) -> Array2<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.data.row(i)
    }

    /// Rows selected by index, in the order given.
    pub fn select_rows(&self, indices: &[usize]) -> PointCloud {
        PointCloud {
            data: self.data.select(Axis(0), indices),
        }
    }
}

/// Symmetric `N x N` matrix of pairwise distances with a zero diagonal.
#[derive(Debug, Clone)]
pub struct DistanceMatrix {
    values: Array2<f64>,
}

impl DistanceMatrix {
    /// Validates symmetry, zero diagonal, non-negativity, and finiteness.
    pub fn new(values: Array2<f64>) -> Result<Self> {
        let (n, m) = values.dim();
        if n != m {
            return Err(NsaError::ShapeError(format!("distance matrix must be square, got {n}x{m}")));
        }
        for ((i, j), v) in values.indexed_iter() {
            if !v.is_finite() || *v < 0.0 {
                return Err(NsaError::InvalidInput(format!(
                    "distance entry {v} at ({i},{j}) is negative or non-finite"
                )));
            }
            if i == j && *v != 0.0 {
                return Err(NsaError::InvalidInput(format!("nonzero diagonal at ({i},{i})")));
            }
            if values[(i, j)] != values[(j, i)] {
                return Err(NsaError::InvalidInput(format!("asymmetric entries at ({i},{j})")));
            }
        }
        Ok(Self { values })
    }

    /// Internal constructor for matrices built by code that guarantees the invariants.
    pub(crate) fn from_trusted(values: Array2<f64>) -> Self {
        Self { values }
    }

    pub fn n_points(&self) -> usize {
        self.values.nrows()
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[(i, j)]
    }

    /// Largest entry of the matrix.
    pub fn max_entry(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |a, &b| a.max(b))
    }

    /// Principal submatrix on the given indices (in the order given).
    pub fn submatrix(&self, indices: &[usize]) -> DistanceMatrix {
        let s = indices.len();
        let mut out = Array2::zeros((s, s));
        for (a, &i) in indices.iter().enumerate() {
            for (b, &j) in indices.iter().enumerate() {
                out[(a, b)] = self.values[(i, j)];
            }
        }
        DistanceMatrix { values: out }
    }
}

/// How a cloud's scale divisor is chosen.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum NormMode {
    /// Largest distance from the origin.
    OriginMax,
    /// Largest distance from the centroid (cloud is centered first).
    CenteredMax,
    /// Interpolated quantile of the origin distances, `q` in (0, 1].
    Quantile(f64),
}

/// Normalization policy: mode plus a multiplicative `radius_scale`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct NormalizationPolicy {
    pub mode: NormMode,
    pub radius_scale: f64,
}

impl Default for NormalizationPolicy {
    fn default() -> Self {
        Self {
            mode: NormMode::OriginMax,
            radius_scale: 1.0,
        }
    }
}

impl NormalizationPolicy {
    pub fn new(mode: NormMode, radius_scale: f64) -> Result<Self> {
        if let NormMode::Quantile(q) = mode {
            if !(q > 0.0 && q <= 1.0) {
                return Err(NsaError::InvalidInput(format!("quantile {q} outside (0, 1]")));
            }
        }
        if !(radius_scale > 0.0 && radius_scale.is_finite()) {
            return Err(NsaError::InvalidInput(format!("radius_scale {radius_scale} must be positive")));
        }
        Ok(Self { mode, radius_scale })
    }

    pub fn origin_max() -> Self {
        Self::default()
    }

    pub fn centered_max() -> Self {
        Self {
            mode: NormMode::CenteredMax,
            radius_scale: 1.0,
        }
    }

    pub fn quantile(q: f64) -> Result<Self> {
        Self::new(NormMode::Quantile(q), 1.0)
    }
}

/// A positive scale divisor, in the distance units of its source cloud.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct Normalizer {
    value: f64,
}

impl Normalizer {
    pub(crate) fn from_value(value: f64) -> Self {
        Self { value }
    }

    pub fn value(&self) -> f64 {
        self.value
    }
}

/// Euclidean distance between two coordinate rows, accumulated in dimension order.
pub(crate) fn euclidean(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b.iter()) {
        let diff = x - y;
        acc += diff * diff;
    }
    acc.sqrt()
}

/// Full matrix of Euclidean distances between cloud rows.
///
/// Rows are computed in parallel; within a row the reduction order is fixed,
/// so the result is bitwise-deterministic for a fixed input.
pub fn pairwise_distances(cloud: &PointCloud) -> DistanceMatrix {
    let n = cloud.n_points();
    let data = cloud.data();
    let mut out = Array2::zeros((n, n));
    Zip::indexed(out.rows_mut()).par_for_each(|i, mut row| {
        let xi = data.row(i);
        for j in 0..n {
            if j != i {
                row[j] = euclidean(xi, data.row(j));
            }
        }
    });
    DistanceMatrix::from_trusted(out)
}

/// Distance of each row from the origin.
pub(crate) fn origin_distances(data: &Array2<f64>) -> Vec<f64> {
    data.rows()
        .into_iter()
        .map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect()
}

/// Index of the largest value; first index wins ties.
pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Interpolated quantile of a sample (linear interpolation between order
/// statistics, the convention numpy calls `linear`).
pub(crate) fn interpolated_quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let t = h - lo as f64;
    sorted[lo] + t * (sorted[hi] - sorted[lo])
}

/// A computed normalizer together with the structural information its
/// gradient needs: which point attains the max (when one does).
#[derive(Debug, Clone, Copy)]
pub(crate) struct NormalizerDetail {
    pub value: f64,
    /// Index attaining the max for `OriginMax` / `CenteredMax`; `None` for quantile.
    pub argmax_index: Option<usize>,
}

pub(crate) fn normalizer_detail(
    cloud: &PointCloud,
    policy: &NormalizationPolicy,
    epsilon_norm: f64,
) -> Result<NormalizerDetail> {
    let detail = match policy.mode {
        NormMode::OriginMax => {
            let dists = origin_distances(cloud.data());
            let idx = argmax(&dists);
            NormalizerDetail {
                value: policy.radius_scale * dists[idx],
                argmax_index: Some(idx),
            }
        }
        NormMode::CenteredMax => {
            let centered = center(cloud);
            let dists = origin_distances(centered.data());
            let idx = argmax(&dists);
            NormalizerDetail {
                value: policy.radius_scale * dists[idx],
                argmax_index: Some(idx),
            }
        }
        NormMode::Quantile(q) => {
            let mut dists = origin_distances(cloud.data());
            dists.sort_by(f64::total_cmp);
            NormalizerDetail {
                value: policy.radius_scale * interpolated_quantile(&dists, q),
                argmax_index: None,
            }
        }
    };
    if detail.value <= epsilon_norm {
        return Err(NsaError::DegenerateCloud(format!(
            "normalizer {} is at or below the floor {epsilon_norm}",
            detail.value
        )));
    }
    Ok(detail)
}

/// Scale divisor for a cloud under the given policy.
///
/// Errors with [`NsaError::DegenerateCloud`] when the result is at or below
/// the floor (all points at the origin).
pub fn compute_normalizer(cloud: &PointCloud, policy: &NormalizationPolicy) -> Result<Normalizer> {
    compute_normalizer_with(cloud, policy, DEFAULT_EPSILON_NORM)
}

/// [`compute_normalizer`] with an explicit degeneracy floor.
pub fn compute_normalizer_with(
    cloud: &PointCloud,
    policy: &NormalizationPolicy,
    epsilon_norm: f64,
) -> Result<Normalizer> {
    normalizer_detail(cloud, policy, epsilon_norm).map(|d| Normalizer::from_value(d.value))
}

/// Subtracts the column-wise mean from every row.
pub fn center(cloud: &PointCloud) -> PointCloud {
    let mean = cloud.data().mean_axis(Axis(0)).expect("non-empty cloud");
    PointCloud {
        data: cloud.data() - &mean.insert_axis(Axis(0)),
    }
}

/// Which end of the variance spectrum to delete first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum ComponentOrder {
    LeastVarianceFirst,
    MostVarianceFirst,
}

/// Eigendecomposition of the sample covariance, sorted by descending
/// eigenvalue with index tie-breaks. Returns (eigenvalues, eigenvectors as
/// columns). Eigenvector signs are fixed so the largest-magnitude entry is
/// positive.
pub(crate) fn covariance_eigen(cloud: &PointCloud) -> (Vec<f64>, Array2<f64>) {
    let centered = center(cloud);
    let n = cloud.n_points() as f64;
    let x = centered.data();
    let cov = x.t().dot(x) / (n - 1.0);
    let d = cov.nrows();
    let m = nalgebra::DMatrix::from_fn(d, d, |i, j| cov[(i, j)]);
    let eig = m.symmetric_eigen();

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .total_cmp(&eig.eigenvalues[a])
            .then(a.cmp(&b))
    });

    let mut values = Vec::with_capacity(d);
    let mut vectors = Array2::zeros((d, d));
    for (col, &src) in order.iter().enumerate() {
        values.push(eig.eigenvalues[src]);
        let v = eig.eigenvectors.column(src);
        let mut lead = 0;
        for r in 0..d {
            if v[r].abs() > v[lead].abs() {
                lead = r;
            }
        }
        let sign = if v[lead] < 0.0 { -1.0 } else { 1.0 };
        for r in 0..d {
            vectors[(r, col)] = sign * v[r];
        }
    }
    (values, vectors)
}

/// Zeroes the projections of the (centered) cloud onto `m` principal
/// components, chosen from the given end of the variance spectrum, then adds
/// the centroid back.
pub fn remove_principal_components(
    cloud: &PointCloud,
    m: usize,
    order: ComponentOrder,
) -> Result<PointCloud> {
    let limit = cloud.n_points().min(cloud.dim());
    if m >= limit {
        return Err(NsaError::InvalidInput(format!(
            "cannot remove {m} components from a cloud with min(N, D) = {limit}"
        )));
    }
    if m == 0 {
        return Ok(cloud.clone());
    }
    let mean = cloud.data().mean_axis(Axis(0)).expect("non-empty cloud");
    let centered = cloud.data() - &mean.clone().insert_axis(Axis(0));

    let (_, vectors) = covariance_eigen(cloud);
    let d = cloud.dim();
    // vectors are sorted by descending eigenvalue
    let selected: Vec<usize> = match order {
        ComponentOrder::LeastVarianceFirst => ((d - m)..d).collect(),
        ComponentOrder::MostVarianceFirst => (0..m).collect(),
    };

    let mut result = centered.clone();
    for &c in &selected {
        let v = vectors.column(c);
        let v: Array1<f64> = v.to_owned();
        let scores = centered.dot(&v);
        for i in 0..result.nrows() {
            for j in 0..d {
                result[(i, j)] -= scores[i] * v[j];
            }
        }
    }
    result += &mean.insert_axis(Axis(0));
    PointCloud::new(result)
}
