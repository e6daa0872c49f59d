//! Synthetic dataset generators used by tests, benches, and examples.
//! All draw from a ChaCha stream seeded explicitly, so every dataset is
//! reproducible from its arguments.

use crate::data::Dataset;
use crate::error::{MelcError, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Four Gaussian blobs at (±1, ±1) with shared spherical sigma. Blobs on
/// the main diagonal are labeled +1, the anti-diagonal -1. The XOR layout:
/// no single threshold on any direction separates it, three do.
pub fn xor_gaussians(n_per_blob: usize, sigma: f64, seed: u64) -> Result<Dataset> {
    if n_per_blob == 0 {
        return Err(MelcError::config("need at least one point per blob"));
    }
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(MelcError::config("sigma must be positive and finite"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers = [
        ([1.0, 1.0], 1i8),
        ([-1.0, -1.0], 1),
        ([1.0, -1.0], -1),
        ([-1.0, 1.0], -1),
    ];
    let mut points = Vec::with_capacity(4 * n_per_blob * 2);
    let mut labels = Vec::with_capacity(4 * n_per_blob);
    for (c, label) in centers {
        for _ in 0..n_per_blob {
            points.push(c[0] + sigma * normal(&mut rng));
            points.push(c[1] + sigma * normal(&mut rng));
            labels.push(label);
        }
    }
    Dataset::new(2, points, labels)
}

/// Two spherical Gaussian classes N(m±, I) with ||m+ - m-|| = mean_distance.
/// The separation direction is a seeded random unit vector.
pub fn gaussian_pair(dim: usize, n_per_class: usize, mean_distance: f64, seed: u64) -> Result<Dataset> {
    if dim == 0 || n_per_class == 0 {
        return Err(MelcError::config("dimension and class size must be positive"));
    }
    if !(mean_distance >= 0.0) || !mean_distance.is_finite() {
        return Err(MelcError::config("mean distance must be nonnegative and finite"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dir = loop {
        let v: Vec<f64> = (0..dim).map(|_| normal(&mut rng)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-6 {
            break v.into_iter().map(|x| x / n).collect::<Vec<f64>>();
        }
    };
    let half = mean_distance / 2.0;
    let mut points = Vec::with_capacity(2 * n_per_class * dim);
    let mut labels = Vec::with_capacity(2 * n_per_class);
    for &sign in &[1.0f64, -1.0] {
        for _ in 0..n_per_class {
            for item in dir.iter().take(dim) {
                points.push(sign * half * item + normal(&mut rng));
            }
            labels.push(if sign > 0.0 { 1 } else { -1 });
        }
    }
    Dataset::new(dim, points, labels)
}

/// Two anisotropic Gaussian classes separated along the diagonal of the
/// first `informative` coordinates, padded with `noise` standard-normal
/// coordinates that carry no class signal.
pub fn splice_like(n_per_class: usize, informative: usize, noise: usize, seed: u64) -> Result<Dataset> {
    if informative == 0 || n_per_class == 0 {
        return Err(MelcError::config("need informative dimensions and points"));
    }
    let dim = informative + noise;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u = (informative as f64).sqrt().recip();
    let sep = 3.0;
    let stds: Vec<f64> = (0..informative)
        .map(|j| 0.5 + 1.5 * j as f64 / informative as f64)
        .collect();
    let mut points = Vec::with_capacity(2 * n_per_class * dim);
    let mut labels = Vec::with_capacity(2 * n_per_class);
    for &sign in &[1.0f64, -1.0] {
        for _ in 0..n_per_class {
            for std in &stds {
                points.push(sign * sep / 2.0 * u + std * normal(&mut rng));
            }
            for _ in 0..noise {
                points.push(normal(&mut rng));
            }
            labels.push(if sign > 0.0 { 1 } else { -1 });
        }
    }
    Dataset::new(dim, points, labels)
}

/// Two Gaussian classes cleanly separated along coordinate 0, with a
/// variance-only decoy on coordinate 1 (equal means, very different
/// spreads) and `noise` standard-normal coordinates. The decoy axis is a
/// stationary trap for gradient ascent on the divergence: restarts that
/// finish there reach a lower value and classify worse than restarts that
/// find the separation axis.
pub fn decoy_gaussians(n_per_class: usize, noise: usize, seed: u64) -> Result<Dataset> {
    if n_per_class == 0 {
        return Err(MelcError::config("need at least one point per class"));
    }
    let dim = 2 + noise;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(2 * n_per_class * dim);
    let mut labels = Vec::with_capacity(2 * n_per_class);
    for &sign in &[1.0f64, -1.0] {
        let decoy_std = if sign > 0.0 { 6.0 } else { 0.8 };
        for _ in 0..n_per_class {
            points.push(sign * 1.8 + 0.7 * normal(&mut rng));
            points.push(decoy_std * normal(&mut rng));
            for _ in 0..noise {
                points.push(normal(&mut rng));
            }
            labels.push(if sign > 0.0 { 1 } else { -1 });
        }
    }
    Dataset::new(dim, points, labels)
}
