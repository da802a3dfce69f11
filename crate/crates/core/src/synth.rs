//! Seeded synthetic dataset generators used by the benchmarks and the CLI.

use ndarray::Array2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use std::f64::consts::PI;

use crate::cloud::PointCloud;
use crate::error::{NsaError, Result};

fn rng_for(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Swiss roll: `(t cos t, h, t sin t)` with `t` uniform in `[1.5 pi, 4.5 pi]`
/// and `h` uniform in `[0, 21]`, plus Gaussian noise of the given scale.
///
/// Returns the 3-D cloud and the `n x 2` matrix of intrinsic `(t, h)`
/// parameters. Deterministic for a fixed seed.
pub fn make_swiss_roll(n: usize, noise: f64, seed: u64) -> Result<(PointCloud, Array2<f64>)> {
    if n < 10 {
        return Err(NsaError::InvalidInput(format!("swiss roll needs n >= 10, got {n}")));
    }
    let mut rng = rng_for(seed);
    let normal = Normal::new(0.0, 1.0).expect("valid normal");
    let mut data = Array2::zeros((n, 3));
    let mut params = Array2::zeros((n, 2));
    for i in 0..n {
        let t = rng.random_range(1.5 * PI..4.5 * PI);
        let h = rng.random_range(0.0..21.0);
        let mut p = [t * t.cos(), h, t * t.sin()];
        if noise != 0.0 {
            for coord in p.iter_mut() {
                *coord += noise * normal.sample(&mut rng);
            }
        }
        data[(i, 0)] = p[0];
        data[(i, 1)] = p[1];
        data[(i, 2)] = p[2];
        params[(i, 0)] = t;
        params[(i, 1)] = h;
    }
    Ok((PointCloud::new(data)?, params))
}

/// Cluster centers used by [`make_blobs`]: scaled standard-basis directions,
/// pairwise `separation` apart whenever `n_clusters <= d`, walking outward
/// along cycling axes beyond that.
fn blob_centers(n_clusters: usize, d: usize, separation: f64) -> Vec<Vec<f64>> {
    let base = separation / 2.0_f64.sqrt();
    (0..n_clusters)
        .map(|c| {
            let mut center = vec![0.0; d];
            center[c % d] = base * (1.0 + (c / d) as f64);
            center
        })
        .collect()
}

/// Isotropic Gaussian clusters with unit within-cluster standard deviation.
///
/// Labels are assigned round-robin so cluster sizes differ by at most one.
pub fn make_blobs(
    n: usize,
    d: usize,
    n_clusters: usize,
    separation: f64,
    seed: u64,
) -> Result<(PointCloud, Vec<usize>)> {
    if n_clusters < 1 || n < n_clusters || d < 1 {
        return Err(NsaError::InvalidInput(format!(
            "blobs need n >= n_clusters >= 1 and d >= 1, got n={n}, n_clusters={n_clusters}, d={d}"
        )));
    }
    let centers = blob_centers(n_clusters, d, separation);
    let mut rng = rng_for(seed);
    let normal = Normal::new(0.0, 1.0).expect("valid normal");
    let mut data = Array2::zeros((n, d));
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let label = i % n_clusters;
        for j in 0..d {
            data[(i, j)] = centers[label][j] + normal.sample(&mut rng);
        }
        labels.push(label);
    }
    Ok((PointCloud::new(data)?, labels))
}

/// Centers of the shifted unit spheres produced by [`make_spheres`].
///
/// Drawn from a dedicated stream at `seed`, so callers can recover them
/// without regenerating the points. The enclosing sphere sits at the origin.
pub fn sphere_centers(n_spheres: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = rng_for(seed);
    let normal = Normal::new(0.0, 1.0).expect("valid normal");
    let scale = 2.0 / (d as f64).sqrt();
    (0..n_spheres)
        .map(|_| (0..d).map(|_| scale * normal.sample(&mut rng)).collect())
        .collect()
}

/// `n_spheres` unit spheres with shifted centers plus one enclosing sphere of
/// radius 5 at the origin, each carrying `n_per_sphere` points uniform on its
/// surface. Labels run `0..n_spheres` for the shifted spheres and `n_spheres`
/// for the enclosing one.
pub fn make_spheres(
    n_per_sphere: usize,
    n_spheres: usize,
    d: usize,
    seed: u64,
) -> Result<(PointCloud, Vec<usize>)> {
    if d < 2 {
        return Err(NsaError::InvalidInput(format!("spheres need d >= 2, got {d}")));
    }
    if n_per_sphere < 1 {
        return Err(NsaError::InvalidInput("spheres need n_per_sphere >= 1".into()));
    }
    let centers = sphere_centers(n_spheres, d, seed);
    // point noise lives on its own stream so `sphere_centers` stays reusable
    let mut rng = rng_for(seed.wrapping_add(1));
    let normal = Normal::new(0.0, 1.0).expect("valid normal");
    let total = n_per_sphere * (n_spheres + 1);
    let mut data = Array2::zeros((total, d));
    let mut labels = Vec::with_capacity(total);
    let mut row = 0;
    for s in 0..=n_spheres {
        let (center, radius): (&[f64], f64) = if s < n_spheres {
            (&centers[s], 1.0)
        } else {
            (&[], 5.0)
        };
        for _ in 0..n_per_sphere {
            let dir: Vec<f64> = (0..d).map(|_| normal.sample(&mut rng)).collect();
            let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
            for j in 0..d {
                let c = if s < n_spheres { center[j] } else { 0.0 };
                data[(row, j)] = c + radius * dir[j] / norm;
            }
            labels.push(s);
            row += 1;
        }
    }
    Ok((PointCloud::new(data)?, labels))
}
