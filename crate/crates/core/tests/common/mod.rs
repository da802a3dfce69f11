//! Shared helpers for the integration suites: seeded cloud generators,
//! random orthogonal transforms, and naive reference implementations of the
//! two discrepancies written directly from their definitions. The reference
//! versions deliberately share no code with the library internals.

#![allow(dead_code)]

use ndarray::Array2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use nsa_core::{NormMode, NormalizationPolicy, PointCloud};

pub fn random_cloud(n: usize, d: usize, seed: u64) -> PointCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    PointCloud::new(Array2::from_shape_fn((n, d), |_| normal.sample(&mut rng))).unwrap()
}

pub fn rows_of(cloud: &PointCloud) -> Vec<Vec<f64>> {
    (0..cloud.n_points()).map(|i| cloud.row(i).to_vec()).collect()
}

pub fn scale_cloud(cloud: &PointCloud, c: f64) -> PointCloud {
    PointCloud::new(cloud.data() * c).unwrap()
}

/// Random orthogonal matrix from the QR factorization of a Gaussian matrix.
pub fn random_orthogonal(d: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let g = nalgebra::DMatrix::from_fn(d, d, |_, _| normal.sample(&mut rng));
    let qr = g.qr();
    let q = qr.q();
    Array2::from_shape_fn((d, d), |(i, j)| q[(i, j)])
}

pub fn transform_cloud(cloud: &PointCloud, u: &Array2<f64>) -> PointCloud {
    PointCloud::new(cloud.data().dot(&u.t())).unwrap()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn naive_normalizer(rows: &[Vec<f64>], policy: &NormalizationPolicy) -> f64 {
    let origin_dists = |rs: &[Vec<f64>]| -> Vec<f64> {
        rs.iter()
            .map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt())
            .collect()
    };
    let base = match policy.mode {
        NormMode::OriginMax => origin_dists(rows).into_iter().fold(0.0, f64::max),
        NormMode::CenteredMax => {
            let d = rows[0].len();
            let n = rows.len() as f64;
            let mut mean = vec![0.0; d];
            for r in rows {
                for (m, v) in mean.iter_mut().zip(r.iter()) {
                    *m += v / n;
                }
            }
            let centered: Vec<Vec<f64>> = rows
                .iter()
                .map(|r| r.iter().zip(mean.iter()).map(|(v, m)| v - m).collect())
                .collect();
            origin_dists(&centered).into_iter().fold(0.0, f64::max)
        }
        NormMode::Quantile(q) => {
            let mut d = origin_dists(rows);
            d.sort_by(f64::total_cmp);
            let h = (d.len() - 1) as f64 * q;
            let lo = h.floor() as usize;
            let hi = (lo + 1).min(d.len() - 1);
            d[lo] + (h - lo as f64) * (d[hi] - d[lo])
        }
    };
    policy.radius_scale * base
}

/// Global discrepancy evaluated directly from its definition.
pub fn naive_gnsa(x: &PointCloud, y: &PointCloud, policy: &NormalizationPolicy) -> f64 {
    let xr = rows_of(x);
    let yr = rows_of(y);
    let n = xr.len();
    let dx = naive_normalizer(&xr, policy);
    let dy = naive_normalizer(&yr, policy);
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            acc += (dist(&xr[i], &xr[j]) / dx - dist(&yr[i], &yr[j]) / dy).abs();
        }
    }
    acc / (n * n) as f64
}

fn naive_knn(rows: &[Vec<f64>], i: usize, k: usize) -> Vec<usize> {
    let mut cand: Vec<usize> = (0..rows.len()).filter(|&j| j != i).collect();
    cand.sort_by(|&a, &b| {
        dist(&rows[i], &rows[a])
            .total_cmp(&dist(&rows[i], &rows[b]))
            .then(a.cmp(&b))
    });
    cand.truncate(k);
    cand
}

fn naive_inv_ad(rows: &[Vec<f64>], i: usize, tuple: &[usize]) -> f64 {
    let d_last = dist(&rows[i], &rows[*tuple.last().unwrap()]);
    let mut acc = 0.0;
    for &j in tuple {
        acc += (dist(&rows[i], &rows[j]) / d_last).ln();
    }
    -acc / tuple.len() as f64
}

/// Directed local discrepancy (neighborhoods in `y`) evaluated directly
/// from its definition.
pub fn naive_lnsa_directed(x: &PointCloud, y: &PointCloud, k: usize) -> f64 {
    let xr = rows_of(x);
    let yr = rows_of(y);
    let n = xr.len();
    let mut acc = 0.0;
    for i in 0..n {
        let tuple = naive_knn(&yr, i, k);
        let a = naive_inv_ad(&yr, i, &tuple);
        let b = naive_inv_ad(&xr, i, &tuple);
        acc += (a - b) * (a - b);
    }
    acc / n as f64
}

pub fn naive_lnsa_metric(x: &PointCloud, y: &PointCloud, k: usize) -> f64 {
    naive_lnsa_directed(x, y, k) + naive_lnsa_directed(y, x, k)
}
