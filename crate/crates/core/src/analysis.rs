//! Evaluation toolkit: distance-preservation quality measures, layer-pair
//! dissimilarity grids, sensitivity curves under principal-component
//! removal, and per-point discrepancy reports.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::cloud::{self, ComponentOrder, NormalizationPolicy, PointCloud};
use crate::composite::NsaConfig;
use crate::error::{NsaError, Result};
use crate::gnsa;
use crate::lnsa;

/// The distance-preservation summary: correlation, ranking, alignment, and
/// neighborhood agreement between a reference and a reduced cloud.
#[derive(Debug, Clone, serde::Serialize)]
pub struct QualityReport {
    pub linear_correlation: f64,
    pub triplet_accuracy: f64,
    pub gnsa: f64,
    pub lnsa_at_k: f64,
    pub knn_consistency: f64,
    pub k_used: usize,
}

fn check_same_n(x: &PointCloud, z: &PointCloud) -> Result<usize> {
    if x.n_points() != z.n_points() {
        return Err(NsaError::ShapeError(format!(
            "clouds must have equal point counts, got {} and {}",
            x.n_points(),
            z.n_points()
        )));
    }
    Ok(x.n_points())
}

fn upper_triangle(d: &cloud::DistanceMatrix) -> Vec<f64> {
    let n = d.n_points();
    let mut out = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            out.push(d.get(i, j));
        }
    }
    out
}

/// Pearson correlation of the two clouds' pairwise distances.
pub fn linear_correlation(x: &PointCloud, z: &PointCloud) -> Result<f64> {
    let n = check_same_n(x, z)?;
    if n < 3 {
        return Err(NsaError::InvalidInput("correlation needs at least 3 points".into()));
    }
    let a = upper_triangle(&cloud::pairwise_distances(x));
    let b = upper_triangle(&cloud::pairwise_distances(z));
    let m = a.len() as f64;
    let (ma, mb) = (
        a.iter().sum::<f64>() / m,
        b.iter().sum::<f64>() / m,
    );
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (ai, bi) in a.iter().zip(b.iter()) {
        let (da, db) = (ai - ma, bi - mb);
        cov += da * db;
        va += da * da;
        vb += db * db;
    }
    if va <= 0.0 || vb <= 0.0 {
        return Err(NsaError::UndefinedCorrelation(
            "a distance set has zero variance".into(),
        ));
    }
    Ok(cov / (va * vb).sqrt())
}

/// Fraction of sampled index triples `(i, j, m)` whose within-triple
/// distance ordering agrees across the two clouds. Ties agree only with
/// ties.
pub fn triplet_accuracy(
    x: &PointCloud,
    z: &PointCloud,
    n_triplets: usize,
    seed: u64,
) -> Result<f64> {
    let n = check_same_n(x, z)?;
    if n < 3 {
        return Err(NsaError::InvalidInput("triplets need at least 3 points".into()));
    }
    if n_triplets == 0 {
        return Err(NsaError::InvalidInput("n_triplets must be positive".into()));
    }
    let dx = cloud::pairwise_distances(x);
    let dz = cloud::pairwise_distances(z);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut agree = 0usize;
    let sign = |v: f64| -> i8 {
        if v > 0.0 {
            1
        } else if v < 0.0 {
            -1
        } else {
            0
        }
    };
    for _ in 0..n_triplets {
        let i = rng.random_range(0..n);
        let j = loop {
            let c = rng.random_range(0..n);
            if c != i {
                break c;
            }
        };
        let m = loop {
            let c = rng.random_range(0..n);
            if c != i && c != j {
                break c;
            }
        };
        let sx = sign(dx.get(i, j) - dx.get(i, m));
        let sz = sign(dz.get(i, j) - dz.get(i, m));
        if sx == sz {
            agree += 1;
        }
    }
    Ok(agree as f64 / n_triplets as f64)
}

/// Mean fraction of shared k-nearest-neighbor indices between the clouds.
pub fn knn_consistency(x: &PointCloud, z: &PointCloud, k: usize) -> Result<f64> {
    let n = check_same_n(x, z)?;
    let nx = lnsa::knn(x, k)?;
    let nz = lnsa::knn(z, k)?;
    let mut acc = 0.0;
    for i in 0..n {
        let a = nx.neighbors(i);
        let mut b: Vec<usize> = nz.neighbors(i).to_vec();
        b.sort_unstable();
        let shared = a.iter().filter(|j| b.binary_search(j).is_ok()).count();
        acc += shared as f64 / k as f64;
    }
    Ok(acc / n as f64)
}

/// All five quality measures in one pass. The local column is the
/// symmetrized discrepancy at the same `k`.
pub fn quality_report(
    x: &PointCloud,
    z: &PointCloud,
    k: usize,
    n_triplets: usize,
    seed: u64,
    policy: &NormalizationPolicy,
) -> Result<QualityReport> {
    Ok(QualityReport {
        linear_correlation: linear_correlation(x, z)?,
        triplet_accuracy: triplet_accuracy(x, z, n_triplets, seed)?,
        gnsa: gnsa::gnsa(x, z, policy)?.total,
        lnsa_at_k: lnsa::lnsa_metric(x, z, k)?.metric,
        knn_consistency: knn_consistency(x, z, k)?,
        k_used: k,
    })
}

/// Which discrepancy fills the grid cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeatmapMeasure {
    Gnsa,
    LnsaMetric,
}

/// Labeled grid of layer-pair dissimilarities.
#[derive(Debug, Clone, serde::Serialize)]
pub struct HeatmapMatrix {
    pub values: Vec<Vec<f64>>,
    pub row_labels: Vec<String>,
    pub col_labels: Vec<String>,
}

/// Dissimilarity of every cloud in `a` against every cloud in `b`.
/// All clouds must share the same point count.
pub fn layer_heatmap(
    a: &[(String, PointCloud)],
    b: &[(String, PointCloud)],
    measure: HeatmapMeasure,
    policy: &NormalizationPolicy,
    k: usize,
) -> Result<HeatmapMatrix> {
    if a.is_empty() || b.is_empty() {
        return Err(NsaError::InvalidInput("empty layer list".into()));
    }
    let n = a[0].1.n_points();
    for (label, c) in a.iter().chain(b.iter()) {
        if c.n_points() != n {
            return Err(NsaError::ShapeError(format!(
                "layer '{label}' has {} points, expected {n}",
                c.n_points()
            )));
        }
    }
    let mut values = Vec::with_capacity(a.len());
    for (_, ca) in a {
        let mut row = Vec::with_capacity(b.len());
        for (_, cb) in b {
            let v = match measure {
                HeatmapMeasure::Gnsa => gnsa::gnsa(ca, cb, policy)?.total,
                HeatmapMeasure::LnsaMetric => lnsa::lnsa_metric(ca, cb, k)?.metric,
            };
            row.push(v);
        }
        values.push(row);
    }
    Ok(HeatmapMatrix {
        values,
        row_labels: a.iter().map(|(l, _)| l.clone()).collect(),
        col_labels: b.iter().map(|(l, _)| l.clone()).collect(),
    })
}

/// One step of the sensitivity curve.
#[derive(Debug, Clone, serde::Serialize)]
pub struct SensitivityPoint {
    /// Number of principal components removed.
    pub m: usize,
    /// Weighted alignment discrepancy against the original cloud.
    pub value: f64,
    pub above_threshold: bool,
}

/// Discrepancy between the cloud and itself with `m` principal components
/// removed, for `m = 0 .. min(N, D) - 1`. The value is the default-weighted
/// combination of the global term and the symmetrized local term.
pub fn sensitivity_curve(
    x: &PointCloud,
    policy: &NormalizationPolicy,
    k: usize,
    threshold: f64,
    order: ComponentOrder,
) -> Result<Vec<SensitivityPoint>> {
    if threshold < 0.0 {
        return Err(NsaError::InvalidInput("threshold must be non-negative".into()));
    }
    let cfg = NsaConfig::default();
    let limit = x.n_points().min(x.dim());
    let mut out = Vec::with_capacity(limit);
    for m in 0..limit {
        let reduced = cloud::remove_principal_components(x, m, order)?;
        let value = cfg.g * gnsa::gnsa(x, &reduced, policy)?.total
            + cfg.l * lnsa::lnsa_metric(x, &reduced, k)?.metric;
        out.push(SensitivityPoint {
            m,
            value,
            above_threshold: value > threshold,
        });
    }
    Ok(out)
}

/// Per-point global discrepancies plus the indices of the largest entries.
#[derive(Debug, Clone, serde::Serialize)]
pub struct PointwiseReport {
    pub values: Vec<f64>,
    /// Indices of the `top_r` largest entries, largest first.
    pub top_indices: Vec<usize>,
}

/// Per-point global discrepancy between corresponding clouds, flagging the
/// `top_r` most displaced points.
pub fn pointwise_report(
    x: &PointCloud,
    y: &PointCloud,
    policy: &NormalizationPolicy,
    top_r: usize,
) -> Result<PointwiseReport> {
    let report = gnsa::gnsa(x, y, policy)?;
    let values = report.pointwise;
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    order.truncate(top_r);
    Ok(PointwiseReport {
        values,
        top_indices: order,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::Array2;
    use rand_distr::{Distribution, Normal};

    fn cloud(rows: &[Vec<f64>]) -> PointCloud {
        PointCloud::from_rows(rows).unwrap()
    }

    fn random_cloud(n: usize, d: usize, seed: u64) -> PointCloud {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 1.0).unwrap();
        PointCloud::new(Array2::from_shape_fn((n, d), |_| normal.sample(&mut rng))).unwrap()
    }

    #[test]
    fn correlation_of_scaled_copy_is_one() {
        let x = random_cloud(15, 4, 50);
        let z = PointCloud::new(x.data() * 3.7).unwrap();
        assert_abs_diff_eq!(linear_correlation(&x, &z).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn correlation_of_rigid_transform_is_one() {
        // rotate in the first two coordinates and translate
        let x = random_cloud(15, 3, 51);
        let (c, s) = (0.6_f64.cos(), 0.6_f64.sin());
        let rows: Vec<Vec<f64>> = (0..15)
            .map(|i| {
                let r = x.row(i);
                vec![c * r[0] - s * r[1] + 5.0, s * r[0] + c * r[1] - 2.0, r[2] + 1.0]
            })
            .collect();
        let z = cloud(&rows);
        assert_abs_diff_eq!(linear_correlation(&x, &z).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn correlation_hand_instance_matches_covariance_formula() {
        let x = cloud(&[vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 2.0], vec![3.0, 1.0]]);
        let z = cloud(&[vec![0.0], vec![2.0], vec![3.0], vec![4.5]]);
        // distance vectors listed by hand in (0,1), (0,2), (0,3), (1,2), (1,3), (2,3) order
        let a = [
            1.0,
            2.0,
            10.0_f64.sqrt(),
            5.0_f64.sqrt(),
            5.0_f64.sqrt(),
            10.0_f64.sqrt(),
        ];
        let b = [2.0, 3.0, 4.5, 1.0, 2.5, 1.5];
        let m = 6.0;
        let ma = a.iter().sum::<f64>() / m;
        let mb = b.iter().sum::<f64>() / m;
        let cov: f64 = a.iter().zip(b.iter()).map(|(p, q)| (p - ma) * (q - mb)).sum();
        let va: f64 = a.iter().map(|p| (p - ma) * (p - ma)).sum();
        let vb: f64 = b.iter().map(|q| (q - mb) * (q - mb)).sum();
        let expected = cov / (va * vb).sqrt();
        assert_abs_diff_eq!(linear_correlation(&x, &z).unwrap(), expected, epsilon = 1e-12);
    }

    #[test]
    fn degenerate_distance_set_is_undefined() {
        // all rows coincide, so every pairwise distance is exactly zero
        let flat = cloud(&vec![vec![1.0, 2.0]; 4]);
        let z = random_cloud(4, 2, 52);
        assert!(matches!(
            linear_correlation(&flat, &z),
            Err(NsaError::UndefinedCorrelation(_))
        ));
    }

    #[test]
    fn triplets_agree_on_identity_and_scaling() {
        let x = random_cloud(20, 4, 53);
        assert_eq!(triplet_accuracy(&x, &x, 500, 1).unwrap(), 1.0);
        let z = PointCloud::new(x.data() * 0.2).unwrap();
        assert_eq!(triplet_accuracy(&x, &z, 500, 1).unwrap(), 1.0);
    }

    #[test]
    fn shuffled_rows_score_near_chance() {
        // the cloud must be large enough that the per-cloud agreement rate
        // itself sits close to 1/2; the interval below then covers the
        // 10k-sample binomial noise
        let x = random_cloud(1024, 6, 54);
        let mut order: Vec<usize> = (0..1024).collect();
        order.rotate_left(389);
        let z = x.select_rows(&order);
        let acc = triplet_accuracy(&x, &z, 10_000, 2).unwrap();
        // 99% binomial interval around 0.5 for 10k draws
        assert!((acc - 0.5).abs() < 0.0129, "accuracy {acc}");
    }

    #[test]
    fn knn_consistency_identity_and_isometry() {
        let x = random_cloud(20, 4, 55);
        assert_eq!(knn_consistency(&x, &x, 5).unwrap(), 1.0);
        let (c, s) = (1.1_f64.cos(), 1.1_f64.sin());
        let rows: Vec<Vec<f64>> = (0..20)
            .map(|i| {
                let r = x.row(i);
                vec![c * r[0] - s * r[1], s * r[0] + c * r[1], r[2], r[3]]
            })
            .collect();
        let z = cloud(&rows);
        assert_eq!(knn_consistency(&x, &z, 5).unwrap(), 1.0);
    }

    #[test]
    fn knn_consistency_hand_instance() {
        // moving the last point far away changes exactly one neighborhood
        let x = cloud(&[vec![0.0], vec![1.0], vec![2.0], vec![3.0]]);
        let z = cloud(&[vec![0.0], vec![1.0], vec![2.0], vec![300.0]]);
        assert_abs_diff_eq!(knn_consistency(&x, &z, 2).unwrap(), 0.875, epsilon = 1e-15);
    }

    #[test]
    fn quality_report_is_consistent_with_parts() {
        let x = random_cloud(18, 5, 56);
        let z = random_cloud(18, 2, 57);
        let policy = NormalizationPolicy::default();
        let r = quality_report(&x, &z, 4, 300, 9, &policy).unwrap();
        assert_eq!(r.linear_correlation, linear_correlation(&x, &z).unwrap());
        assert_eq!(r.triplet_accuracy, triplet_accuracy(&x, &z, 300, 9).unwrap());
        assert_eq!(r.gnsa, gnsa::gnsa(&x, &z, &policy).unwrap().total);
        assert_eq!(r.lnsa_at_k, lnsa::lnsa_metric(&x, &z, 4).unwrap().metric);
        assert_eq!(r.knn_consistency, knn_consistency(&x, &z, 4).unwrap());
        assert_eq!(r.k_used, 4);
    }

    #[test]
    fn quality_report_identity_tuple() {
        let x = random_cloud(18, 5, 58);
        let r = quality_report(&x, &x, 4, 300, 9, &NormalizationPolicy::default()).unwrap();
        assert_eq!(r.linear_correlation, 1.0);
        assert_eq!(r.triplet_accuracy, 1.0);
        assert_eq!(r.gnsa, 0.0);
        assert_eq!(r.lnsa_at_k, 0.0);
        assert_eq!(r.knn_consistency, 1.0);
    }

    fn layer_stack(seed: u64, n_layers: usize) -> Vec<(String, PointCloud)> {
        // shared drift trajectory with a per-stack rotation
        let base = random_cloud(30, 4, 900);
        let steps: Vec<PointCloud> = {
            let mut clouds = vec![base.clone()];
            for t in 1..n_layers {
                let drift = random_cloud(30, 4, 901 + t as u64);
                let prev = clouds[t - 1].data();
                clouds.push(PointCloud::new(prev + &(drift.data() * 0.4)).unwrap());
            }
            clouds
        };
        let (c, s) = ((seed as f64).cos(), (seed as f64).sin());
        steps
            .into_iter()
            .enumerate()
            .map(|(t, x)| {
                let jitter = random_cloud(30, 4, seed * 100 + t as u64);
                let rows: Vec<Vec<f64>> = (0..30)
                    .map(|i| {
                        let r = x.row(i);
                        let j = jitter.row(i);
                        vec![
                            c * r[0] - s * r[1] + 1e-3 * j[0],
                            s * r[0] + c * r[1] + 1e-3 * j[1],
                            r[2] + 1e-3 * j[2],
                            r[3] + 1e-3 * j[3],
                        ]
                    })
                    .collect();
                (format!("layer_{t}"), cloud(&rows))
            })
            .collect()
    }

    #[test]
    fn heatmap_diagonal_is_zero_on_self() {
        let a = layer_stack(1, 4);
        let h = layer_heatmap(&a, &a, HeatmapMeasure::Gnsa, &NormalizationPolicy::default(), 3)
            .unwrap();
        for (i, row) in h.values.iter().enumerate() {
            assert_eq!(row[i], 0.0);
        }
    }

    #[test]
    fn heatmap_rows_permute_with_layers() {
        let a = layer_stack(1, 4);
        let b = layer_stack(2, 4);
        let h = layer_heatmap(&a, &b, HeatmapMeasure::Gnsa, &NormalizationPolicy::default(), 3)
            .unwrap();
        let mut swapped = a.clone();
        swapped.swap(0, 2);
        let h2 = layer_heatmap(&swapped, &b, HeatmapMeasure::Gnsa, &NormalizationPolicy::default(), 3)
            .unwrap();
        assert_eq!(h.values[0], h2.values[2]);
        assert_eq!(h.values[2], h2.values[0]);
        assert_eq!(h2.row_labels[2], "layer_0");
    }

    #[test]
    fn heatmap_argmin_tracks_matching_layers() {
        let a = layer_stack(1, 5);
        let b = layer_stack(2, 5);
        let h = layer_heatmap(&a, &b, HeatmapMeasure::Gnsa, &NormalizationPolicy::default(), 3)
            .unwrap();
        for (i, row) in h.values.iter().enumerate() {
            let mut best = 0;
            for (j, v) in row.iter().enumerate() {
                if *v < row[best] {
                    best = j;
                }
            }
            assert_eq!(best, i, "row {i}: {row:?}");
        }
    }

    #[test]
    fn sensitivity_starts_at_zero_and_detects_full_removal() {
        let x = random_cloud(40, 5, 60);
        let curve = sensitivity_curve(
            &x,
            &NormalizationPolicy::default(),
            3,
            0.0,
            ComponentOrder::LeastVarianceFirst,
        )
        .unwrap();
        assert_eq!(curve.len(), 5);
        assert_eq!(curve[0].value, 0.0);
        assert!(!curve[0].above_threshold);
        assert!(curve.last().unwrap().value > 0.0);
        assert!(curve.last().unwrap().above_threshold);
    }

    #[test]
    fn pointwise_identity_is_zero_and_mean_matches_total() {
        let x = random_cloud(25, 4, 61);
        let r = pointwise_report(&x, &x, &NormalizationPolicy::default(), 3).unwrap();
        assert!(r.values.iter().all(|v| *v == 0.0));

        let y = random_cloud(25, 4, 62);
        let r = pointwise_report(&x, &y, &NormalizationPolicy::default(), 3).unwrap();
        let total = gnsa::gnsa(&x, &y, &NormalizationPolicy::default()).unwrap().total;
        let mean = r.values.iter().sum::<f64>() / 25.0;
        assert_abs_diff_eq!(mean, total, epsilon = 1e-15);
    }

    #[test]
    fn displaced_row_tops_the_pointwise_report() {
        // reflect one row through the origin: its norm (and hence the
        // normalizer) is untouched, but its distances to everyone change
        let x = random_cloud(25, 4, 63);
        let mut data = x.data().clone();
        for c in 0..4 {
            data[(7, c)] = -data[(7, c)];
        }
        let y = PointCloud::new(data).unwrap();
        let r = pointwise_report(&x, &y, &NormalizationPolicy::default(), 1).unwrap();
        assert_eq!(r.top_indices, vec![7]);
        let max = r.values.iter().cloned().fold(f64::MIN, f64::max);
        assert_eq!(r.values[7], max);
    }
}
