//! Direct gradient-descent dimensionality reduction: optimize a latent cloud
//! against a fixed reference under the weighted alignment loss, with optional
//! geodesic reference distances.
//!
//! There is no encoder network here. The latent coordinates are the
//! parameters, which isolates the alignment loss itself; no projection map
//! for unseen data is produced.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::Instant;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::cloud::{self, covariance_eigen, DistanceMatrix, PointCloud};
use crate::composite::NsaConfig;
use crate::error::{NsaError, Result};
use crate::gnsa;
use crate::lnsa;

/// How the latent cloud starts out.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitScheme {
    /// Independent Gaussian coordinates of the given scale.
    RandomGaussian { scale: f64 },
    /// Projection of the reference onto its top principal components.
    PrincipalProjection,
}

/// Geodesic reference mode: neighbor count for the graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GeodesicConfig {
    pub k_graph: usize,
}

/// Reducer hyperparameters.
#[derive(Debug, Clone)]
pub struct ReducerConfig {
    pub latent_dim: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub step_size: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_epsilon: f64,
    pub init: InitScheme,
    pub geodesic: Option<GeodesicConfig>,
    pub nsa: NsaConfig,
}

impl ReducerConfig {
    pub fn new(latent_dim: usize) -> Self {
        Self {
            latent_dim,
            epochs: 200,
            batch_size: 256,
            step_size: 1e-2,
            beta1: 0.9,
            beta2: 0.999,
            adam_epsilon: 1e-8,
            init: InitScheme::PrincipalProjection,
            geodesic: None,
            nsa: NsaConfig::default(),
        }
    }

    fn validate(&self, n: usize, d: usize) -> Result<()> {
        self.nsa.validate()?;
        if self.latent_dim < 1 || self.latent_dim > d {
            return Err(NsaError::InvalidInput(format!(
                "latent_dim {} must lie in [1, {d}]",
                self.latent_dim
            )));
        }
        if self.epochs < 1 {
            return Err(NsaError::InvalidInput("epochs must be at least 1".into()));
        }
        if self.batch_size < 2 || self.batch_size > n {
            return Err(NsaError::InvalidInput(format!(
                "batch_size {} must lie in [2, {n}]",
                self.batch_size
            )));
        }
        if !(self.step_size > 0.0) {
            return Err(NsaError::InvalidInput("step_size must be positive".into()));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(NsaError::InvalidInput(format!("{name} = {b} outside [0, 1)")));
            }
        }
        Ok(())
    }
}

/// Per-epoch full-data loss, wall time, and the final latent cloud.
#[derive(Debug, Clone)]
pub struct TrainTrace {
    pub per_epoch_loss: Vec<f64>,
    pub epoch_seconds: Vec<f64>,
    pub final_cloud: PointCloud,
}

#[derive(PartialEq)]
struct HeapEntry {
    dist: f64,
    node: usize,
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // reversed so the binary max-heap pops the smallest distance
        other
            .dist
            .total_cmp(&self.dist)
            .then(other.node.cmp(&self.node))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut i: usize) -> usize {
        while self.parent[i] != i {
            self.parent[i] = self.parent[self.parent[i]];
            i = self.parent[i];
        }
        i
    }

    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        self.parent[ra] = rb;
        true
    }
}

/// Shortest-path distances through the symmetrized k-nearest-neighbor graph
/// with Euclidean edge weights.
///
/// Disconnected components are repaired by repeatedly adding the shortest
/// edge between components, so every pair ends up at a finite distance.
pub fn geodesic_distances(cloud: &PointCloud, k_graph: usize) -> Result<DistanceMatrix> {
    if k_graph < 1 {
        return Err(NsaError::InvalidInput("k_graph must be at least 1".into()));
    }
    let n = cloud.n_points();
    let dists = cloud::pairwise_distances(cloud);
    let k = k_graph.min(n - 1);
    let nbrs = lnsa::knn_from_matrix(&dists, k)?;

    let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    let mut uf = UnionFind::new(n);
    let mut components = n;
    {
        let add_edge = |adj: &mut Vec<Vec<(usize, f64)>>, i: usize, j: usize, w: f64| {
            adj[i].push((j, w));
            adj[j].push((i, w));
        };
        for i in 0..n {
            for (&j, &w) in nbrs.neighbors(i).iter().zip(nbrs.distances(i).iter()) {
                add_edge(&mut adj, i, j, w);
                if uf.union(i, j) {
                    components -= 1;
                }
            }
        }
        while components > 1 {
            // shortest edge joining two components
            let mut best = (usize::MAX, usize::MAX, f64::INFINITY);
            for i in 0..n {
                for j in (i + 1)..n {
                    if uf.find(i) != uf.find(j) && dists.get(i, j) < best.2 {
                        best = (i, j, dists.get(i, j));
                    }
                }
            }
            add_edge(&mut adj, best.0, best.1, best.2);
            uf.union(best.0, best.1);
            components -= 1;
        }
    }
    for edges in adj.iter_mut() {
        edges.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
        edges.dedup_by(|a, b| a.0 == b.0 && a.1 == b.1);
    }

    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|source| {
            let mut dist = vec![f64::INFINITY; n];
            dist[source] = 0.0;
            let mut heap = BinaryHeap::new();
            heap.push(HeapEntry {
                dist: 0.0,
                node: source,
            });
            while let Some(HeapEntry { dist: d, node }) = heap.pop() {
                if d > dist[node] {
                    continue;
                }
                for &(next, w) in &adj[node] {
                    let cand = d + w;
                    if cand < dist[next] {
                        dist[next] = cand;
                        heap.push(HeapEntry {
                            dist: cand,
                            node: next,
                        });
                    }
                }
            }
            dist
        })
        .collect();

    let mut out = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            out[(i, j)] = rows[i][j];
        }
    }
    // per-source runs can disagree in the last ulp; keep the matrix symmetric
    for i in 0..n {
        for j in (i + 1)..n {
            let v = out[(i, j)].min(out[(j, i)]);
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    DistanceMatrix::new(out)
}

/// Projection of the cloud onto its top `dim` principal components
/// (centered scores). Serves as the reducer's linear baseline and its
/// default initialization.
pub fn principal_projection(x: &PointCloud, dim: usize) -> Result<PointCloud> {
    if dim < 1 || dim > x.dim() {
        return Err(NsaError::InvalidInput(format!(
            "projection dim {dim} must lie in [1, {}]",
            x.dim()
        )));
    }
    let (_, vectors) = covariance_eigen(x);
    let centered = cloud::center(x);
    let basis = vectors.slice(ndarray::s![.., ..dim]).to_owned();
    PointCloud::new(centered.data().dot(&basis))
}

struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: i32,
    m: Array2<f64>,
    v: Array2<f64>,
}

impl Adam {
    fn new(shape: (usize, usize), cfg: &ReducerConfig) -> Self {
        Self {
            lr: cfg.step_size,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.adam_epsilon,
            t: 0,
            m: Array2::zeros(shape),
            v: Array2::zeros(shape),
        }
    }

    fn step(&mut self, params: &mut Array2<f64>, grad: &Array2<f64>) {
        self.t += 1;
        let b1c = 1.0 - self.beta1.powi(self.t);
        let b2c = 1.0 - self.beta2.powi(self.t);
        for ((i, j), p) in params.indexed_iter_mut() {
            let g = grad[(i, j)];
            let m = self.beta1 * self.m[(i, j)] + (1.0 - self.beta1) * g;
            let v = self.beta2 * self.v[(i, j)] + (1.0 - self.beta2) * g * g;
            self.m[(i, j)] = m;
            self.v[(i, j)] = v;
            let m_hat = m / b1c;
            let v_hat = v / b2c;
            *p -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

/// Normalizer for a reference given only as a distance matrix: half the
/// largest entry, so normalized distances span the same [0, 2] range as
/// origin-normalized Euclidean ones.
fn matrix_normalizer(dists: &DistanceMatrix, radius_scale: f64, epsilon_norm: f64) -> Result<f64> {
    let value = radius_scale * dists.max_entry() / 2.0;
    if value <= epsilon_norm {
        return Err(NsaError::DegenerateCloud(format!(
            "reference distance matrix normalizer {value} is at or below the floor"
        )));
    }
    Ok(value)
}

/// Optimizes a latent cloud to minimize the weighted alignment loss against
/// the reference `x`.
///
/// Per batch, the reference side keeps its global normalizer while the
/// latent side is normalized on the batch; the local term recomputes
/// neighborhoods inside the batch with `k` capped at `batch - 1`. The trace
/// records the full-data loss after every epoch.
pub fn reduce(x: &PointCloud, cfg: &ReducerConfig) -> Result<TrainTrace> {
    let n = x.n_points();
    cfg.validate(n, x.dim())?;
    if cfg.nsa.k + 1 > n {
        return Err(NsaError::InvalidInput(format!(
            "k = {} must be below the point count {n}",
            cfg.nsa.k
        )));
    }

    // reference distances and their fixed global normalizer
    let (ref_dists, ref_norm) = match cfg.geodesic {
        Some(geo) => {
            let d = geodesic_distances(x, geo.k_graph)?;
            let norm = matrix_normalizer(&d, cfg.nsa.policy.radius_scale, cfg.nsa.epsilon_norm)?;
            (d, norm)
        }
        None => {
            let d = cloud::pairwise_distances(x);
            let norm = cloud::compute_normalizer_with(x, &cfg.nsa.policy, cfg.nsa.epsilon_norm)?
                .value();
            (d, norm)
        }
    };
    let m_ref = ref_dists.values() / ref_norm;
    let full_nbrs = lnsa::knn_from_matrix(&ref_dists, cfg.nsa.k)?;
    let full_inv_lids = lnsa::inv_lids_from_neighbors(&full_nbrs, cfg.nsa.epsilon_dist)?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.nsa.seed);
    let mut z: Array2<f64> = match cfg.init {
        InitScheme::PrincipalProjection => principal_projection(x, cfg.latent_dim)?.into_data(),
        InitScheme::RandomGaussian { scale } => {
            let normal = Normal::new(0.0, 1.0).expect("valid normal");
            Array2::from_shape_fn((n, cfg.latent_dim), |_| scale * normal.sample(&mut rng))
        }
    };

    let mut adam = Adam::new((n, cfg.latent_dim), cfg);
    let mut order: Vec<usize> = (0..n).collect();
    let mut per_epoch_loss = Vec::with_capacity(cfg.epochs);
    let mut epoch_seconds = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let started = Instant::now();
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            if chunk.len() < 2 {
                continue;
            }
            let mut batch: Vec<usize> = chunk.to_vec();
            batch.sort_unstable();
            let s = batch.len();

            let z_batch = PointCloud::new(z.select(Axis(0), &batch))?;
            let ref_sub = ref_dists.submatrix(&batch);
            let m_ref_batch = ref_sub.values() / ref_norm;

            let mut grad_batch = Array2::zeros((s, cfg.latent_dim));
            if cfg.nsa.g > 0.0 {
                let g = gnsa::grad_wrt_cloud(
                    &z_batch,
                    &m_ref_batch,
                    &cfg.nsa.policy,
                    cfg.nsa.epsilon_dist,
                )?;
                grad_batch += &(g * cfg.nsa.g);
            }
            if cfg.nsa.l > 0.0 {
                let k_batch = cfg.nsa.k.min(s - 1);
                let nbrs = lnsa::knn_from_matrix(&ref_sub, k_batch)?;
                let inv_lids = lnsa::inv_lids_from_neighbors(&nbrs, cfg.nsa.epsilon_dist)?;
                let g = lnsa::grad_from_reference(&nbrs, &inv_lids, &z_batch, cfg.nsa.epsilon_dist)?;
                grad_batch += &(g * cfg.nsa.l);
            }

            let mut grad_full = Array2::zeros((n, cfg.latent_dim));
            for (row, &i) in batch.iter().enumerate() {
                for c in 0..cfg.latent_dim {
                    grad_full[(i, c)] = grad_batch[(row, c)];
                }
            }
            adam.step(&mut z, &grad_full);
        }

        let z_cloud = PointCloud::new(z.clone())?;
        let mut loss = 0.0;
        if cfg.nsa.g > 0.0 {
            let nz = cloud::compute_normalizer_with(&z_cloud, &cfg.nsa.policy, cfg.nsa.epsilon_norm)?;
            let mz = cloud::pairwise_distances(&z_cloud).values() / nz.value();
            loss += cfg.nsa.g * gnsa::total_from_normalized(&mz, &m_ref);
        }
        if cfg.nsa.l > 0.0 {
            loss += cfg.nsa.l
                * lnsa::directed_from_reference(
                    &full_nbrs,
                    &full_inv_lids,
                    &z_cloud,
                    cfg.nsa.epsilon_dist,
                )?
                .0;
        }
        if !loss.is_finite() {
            return Err(NsaError::Diverged { epoch });
        }
        per_epoch_loss.push(loss);
        epoch_seconds.push(started.elapsed().as_secs_f64());
    }

    Ok(TrainTrace {
        per_epoch_loss,
        epoch_seconds,
        final_cloud: PointCloud::new(z)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand_distr::{Distribution, Normal};

    fn line(values: &[f64]) -> PointCloud {
        PointCloud::from_rows(&values.iter().map(|&v| vec![v]).collect::<Vec<_>>()).unwrap()
    }

    fn random_cloud(n: usize, d: usize, seed: u64) -> PointCloud {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 1.0).unwrap();
        PointCloud::new(Array2::from_shape_fn((n, d), |_| normal.sample(&mut rng))).unwrap()
    }

    #[test]
    fn geodesic_routes_through_the_chain() {
        let d = geodesic_distances(&line(&[0.0, 1.0, 2.0]), 1).unwrap();
        assert_abs_diff_eq!(d.get(0, 2), 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(d.get(0, 1), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn full_graph_reduces_to_euclidean() {
        let x = random_cloud(12, 3, 40);
        let direct = cloud::pairwise_distances(&x);
        let geo = geodesic_distances(&x, 11).unwrap();
        for i in 0..12 {
            for j in 0..12 {
                assert_eq!(geo.get(i, j), direct.get(i, j), "({i},{j})");
            }
        }
    }

    #[test]
    fn geodesic_repairs_disconnected_components() {
        // two tight pairs far apart; k = 1 leaves them disconnected
        let x = line(&[0.0, 0.1, 100.0, 100.1]);
        let d = geodesic_distances(&x, 1).unwrap();
        assert!(d.get(0, 2).is_finite());
        // repaired through the single shortest bridge 0.1 -> 100.0
        assert_abs_diff_eq!(d.get(0, 3), 0.1 + 99.9 + 0.1, epsilon = 1e-9);
    }

    #[test]
    fn spiral_geodesics_track_arc_length() {
        use std::f64::consts::PI;
        // planar spiral (t cos t, t sin t); on-curve distance is the arc
        // length s(t) = (t sqrt(1 + t^2) + asinh t) / 2
        let n = 500;
        let ts: Vec<f64> = (0..n)
            .map(|i| 1.5 * PI + 3.0 * PI * i as f64 / (n - 1) as f64)
            .collect();
        let rows: Vec<Vec<f64>> = ts.iter().map(|t| vec![t * t.cos(), t * t.sin()]).collect();
        let x = PointCloud::from_rows(&rows).unwrap();
        let geo = geodesic_distances(&x, 10).unwrap();

        let arc = |t: f64| 0.5 * (t * (1.0 + t * t).sqrt() + t.asinh());
        let target: Vec<f64> = ts.iter().map(|&t| arc(t) - arc(ts[0])).collect();
        let got: Vec<f64> = (0..n).map(|j| geo.get(0, j)).collect();

        // Spearman rank correlation
        let rank = |v: &[f64]| {
            let mut order: Vec<usize> = (0..v.len()).collect();
            order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
            let mut r = vec![0.0; v.len()];
            for (pos, &i) in order.iter().enumerate() {
                r[i] = pos as f64;
            }
            r
        };
        let (ra, rb) = (rank(&target), rank(&got));
        let mean = (n as f64 - 1.0) / 2.0;
        let mut num = 0.0;
        let mut da = 0.0;
        let mut db = 0.0;
        for i in 0..n {
            let (a, b) = (ra[i] - mean, rb[i] - mean);
            num += a * b;
            da += a * a;
            db += b * b;
        }
        let rho = num / (da * db).sqrt();
        assert!(rho >= 0.99, "rank correlation {rho}");
    }

    #[test]
    fn principal_projection_keeps_subspace_distances() {
        // centered rank-2 data embedded in five dimensions
        let scores = random_cloud(40, 2, 41);
        let centered = cloud::center(&scores);
        let mut basis = Array2::zeros((2, 5));
        basis[(0, 0)] = 1.0;
        basis[(1, 3)] = 1.0;
        let x = PointCloud::new(centered.data().dot(&basis)).unwrap();
        let z = principal_projection(&x, 2).unwrap();
        let dx = cloud::pairwise_distances(&x);
        let dz = cloud::pairwise_distances(&z);
        for i in 0..40 {
            for j in 0..40 {
                assert_abs_diff_eq!(dx.get(i, j), dz.get(i, j), epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn reduce_is_deterministic() {
        let x = random_cloud(60, 6, 42);
        let mut cfg = ReducerConfig::new(2);
        cfg.epochs = 5;
        cfg.batch_size = 20;
        cfg.nsa.seed = 9;
        cfg.init = InitScheme::RandomGaussian { scale: 0.1 };
        let a = reduce(&x, &cfg).unwrap();
        let b = reduce(&x, &cfg).unwrap();
        assert_eq!(a.per_epoch_loss, b.per_epoch_loss);
        assert_eq!(a.final_cloud.data(), b.final_cloud.data());
    }

    #[test]
    fn reduce_improves_on_random_init() {
        let x = random_cloud(80, 8, 43);
        let mut cfg = ReducerConfig::new(3);
        cfg.epochs = 40;
        cfg.batch_size = 40;
        cfg.init = InitScheme::RandomGaussian { scale: 0.5 };
        cfg.nsa.seed = 3;
        let trace = reduce(&x, &cfg).unwrap();
        let first = trace.per_epoch_loss[0];
        let last = *trace.per_epoch_loss.last().unwrap();
        assert!(last < first, "loss went from {first} to {last}");
        assert!(trace.per_epoch_loss.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn reduce_validates_batch_and_dim() {
        let x = random_cloud(10, 3, 44);
        let mut cfg = ReducerConfig::new(4);
        assert!(reduce(&x, &cfg).is_err());
        cfg.latent_dim = 2;
        cfg.batch_size = 11;
        assert!(reduce(&x, &cfg).is_err());
    }
}
