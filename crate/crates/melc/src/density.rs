//! 1-D kernel density estimation of projected classes and the overlap
//! functionals built on it: the cross-information potential cip, Renyi
//! quadratic entropy, and the Cauchy-Schwarz divergence.
//!
//! All pair sums go through the kernels in [`crate::pairwise`]; nothing
//! here is approximated beyond f64 rounding.

use crate::data::ClassData;
use crate::error::{MelcError, Result};
use crate::pairwise;

/// Width-floor factor. Effective width = max(gamma * silverman, WIDTH_EPS * scale)
/// with scale = max(1, max |sample|), keeps the objective finite when a
/// projection collapses to a point.
pub const WIDTH_EPS: f64 = 1e-9;

const SQRT_TWO_PI: f64 = 2.5066282746310002;

/// Projected class: v dot x per point, with the class weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    samples: Vec<f64>,
    weights: Vec<f64>,
}

impl Projection {
    pub fn new(samples: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if samples.is_empty() || samples.len() != weights.len() {
            return Err(MelcError::data("projection needs matching nonempty samples and weights"));
        }
        if samples.iter().any(|x| !x.is_finite()) {
            return Err(MelcError::data("non-finite projected sample"));
        }
        if weights.iter().any(|&w| !(w > 0.0) || !w.is_finite()) {
            return Err(MelcError::data("weights must be strictly positive"));
        }
        Ok(Projection { samples, weights })
    }

    pub fn uniform(samples: Vec<f64>) -> Result<Self> {
        let w = vec![1.0; samples.len()];
        Projection::new(samples, w)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight_sum(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Weighted mean and population variance (denominator = weight sum).
    pub fn mean_var(&self) -> (f64, f64) {
        let wsum = self.weight_sum();
        let mean = self
            .samples
            .iter()
            .zip(&self.weights)
            .map(|(p, w)| p * w)
            .sum::<f64>()
            / wsum;
        let var = self
            .samples
            .iter()
            .zip(&self.weights)
            .map(|(p, w)| w * (p - mean) * (p - mean))
            .sum::<f64>()
            / wsum;
        (mean, var)
    }

    pub(crate) fn width_floor(&self) -> f64 {
        let scale = self
            .samples
            .iter()
            .fold(1.0_f64, |acc, &x| acc.max(x.abs()));
        WIDTH_EPS * scale
    }
}

/// Kernel width specification: base width `sigma` times scale factor `gamma`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KdeSpec {
    pub sigma: f64,
    pub gamma: f64,
}

impl KdeSpec {
    pub fn new(sigma: f64, gamma: f64) -> Result<Self> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(MelcError::config("kernel width must be positive"));
        }
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(MelcError::config("gamma must be positive"));
        }
        Ok(KdeSpec { sigma, gamma })
    }

    pub fn width(&self) -> f64 {
        self.sigma * self.gamma
    }
}

/// v dot x for every point of the class.
pub fn project(v: &[f64], class: &ClassData) -> Result<Projection> {
    if v.len() != class.dim() {
        return Err(MelcError::data(format!(
            "projection vector has dimension {}, data has {}",
            v.len(),
            class.dim()
        )));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(MelcError::data("non-finite projection vector"));
    }
    if class.is_empty() {
        return Err(MelcError::data("empty class"));
    }
    let samples = (0..class.len())
        .map(|i| dot(v, class.point(i)))
        .collect();
    Projection::new(samples, class.weights().to_vec())
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Plug-in kernel width (4/3)^(1/5) n^(-1/5) sigma_P, population standard
/// deviation. A zero-variance projection returns the floor width instead.
pub fn silverman_width(p: &Projection) -> Result<f64> {
    if p.len() < 2 {
        return Err(MelcError::data("silverman width needs at least 2 samples"));
    }
    let (_, var) = p.mean_var();
    let coeff = (4.0f64 / 3.0).powf(0.2) * (p.len() as f64).powf(-0.2);
    let raw = coeff * var.sqrt();
    Ok(raw.max(p.width_floor()))
}

/// gamma * silverman, floored. The floor does not scale with gamma.
pub(crate) fn effective_width(p: &Projection, gamma: f64) -> Result<f64> {
    let base = silverman_width(p)?;
    Ok((gamma * base).max(p.width_floor()))
}

/// Weighted Gaussian mixture density at x, kernel width = gamma * sigma.
pub fn kde_eval(p: &Projection, spec: &KdeSpec, x: f64) -> f64 {
    let width = spec.width();
    let inv_two_var = 0.5 / (width * width);
    let norm = 1.0 / (width * SQRT_TWO_PI);
    let mut acc = 0.0;
    for (pi, wi) in p.samples.iter().zip(&p.weights) {
        let d = x - pi;
        acc += wi * (-d * d * inv_two_var).max(-745.0).exp();
    }
    acc * norm / p.weight_sum()
}

/// Integral over the real line of N(m1, s1^2) * N(m2, s2^2), which equals
/// the density N(0, s1^2 + s2^2) evaluated at m1 - m2.
pub fn normal_product_integral(m1: f64, s1: f64, m2: f64, s2: f64) -> Result<f64> {
    if !(s1 > 0.0) || !(s2 > 0.0) {
        return Err(MelcError::config("widths must be positive"));
    }
    let var = s1 * s1 + s2 * s2;
    let d = m1 - m2;
    Ok((-d * d / (2.0 * var)).max(-745.0).exp() / (var.sqrt() * SQRT_TWO_PI))
}

/// Per-class quantities reused by values and gradients.
pub(crate) struct ProjectedClass {
    pub proj: Projection,
    pub wsum: f64,
    pub width: f64,
    /// gamma^2 (4/3)^(2/5) n^(-2/5), the factor turning the projected
    /// variance gradient into the kernel variance gradient. Zero when the
    /// width floor is active, the width is constant there.
    pub var_coeff: f64,
}

pub(crate) fn project_class(v: &[f64], class: &ClassData, gamma: f64) -> Result<ProjectedClass> {
    if class.len() < 2 {
        return Err(MelcError::data("class needs at least 2 points"));
    }
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(MelcError::config("gamma must be positive"));
    }
    let proj = project(v, class)?;
    let wsum = proj.weight_sum();
    let width = effective_width(&proj, gamma)?;
    let coeff2 = (4.0f64 / 3.0).powf(0.4) * (proj.len() as f64).powf(-0.4);
    let (_, var) = proj.mean_var();
    let raw_width = gamma * coeff2.sqrt() * var.sqrt();
    let floored = raw_width < proj.width_floor();
    let var_coeff = if floored { 0.0 } else { gamma * gamma * coeff2 };
    Ok(ProjectedClass {
        proj,
        wsum,
        width,
        var_coeff,
    })
}

pub(crate) fn cip_from_sums(s0: f64, var: f64, wsum_a: f64, wsum_b: f64) -> f64 {
    s0 / ((var * 2.0 * std::f64::consts::PI).sqrt() * wsum_a * wsum_b)
}

/// Cross-information potential of the two projected KDEs, the integral of
/// their product. Pair variance is V_A + V_B with V = (effective width)^2.
pub fn cip(v: &[f64], a: &ClassData, b: &ClassData, gamma: f64) -> Result<f64> {
    if a == b {
        // symmetric kernel, so self terms of the divergence rebuild exactly
        return cip_self(v, a, gamma);
    }
    let pa = project_class(v, a, gamma)?;
    let pb = project_class(v, b, gamma)?;
    let var = pa.width * pa.width + pb.width * pb.width;
    let sums = pairwise::cross_sums(
        pa.proj.samples(),
        pa.proj.weights(),
        pb.proj.samples(),
        pb.proj.weights(),
        var,
    );
    Ok(cip_from_sums(sums.s0, var, pa.wsum, pb.wsum))
}

pub(crate) fn cip_self(v: &[f64], a: &ClassData, gamma: f64) -> Result<f64> {
    let pa = project_class(v, a, gamma)?;
    let var = 2.0 * pa.width * pa.width;
    let sums = pairwise::self_sums(pa.proj.samples(), pa.proj.weights(), var);
    Ok(cip_from_sums(sums.s0, var, pa.wsum, pa.wsum))
}

/// Renyi quadratic entropy of the projected class KDE: -log integral f^2.
pub fn renyi_h2(v: &[f64], a: &ClassData, gamma: f64) -> Result<f64> {
    Ok(-floored_ln(cip_self(v, a, gamma)?))
}

pub(crate) fn floored_ln(x: f64) -> f64 {
    x.max(f64::MIN_POSITIVE).ln()
}

/// Cauchy-Schwarz divergence of the two projected class densities:
/// log cip(P,P) + log cip(N,N) - 2 log cip(P,N). Nonnegative up to
/// floating error, zero when the densities coincide.
pub fn dcs(v: &[f64], xp: &ClassData, xn: &ClassData, gamma: f64) -> Result<f64> {
    let pp = cip_self(v, xp, gamma)?;
    let nn = cip_self(v, xn, gamma)?;
    let pn = cip(v, xp, xn, gamma)?;
    Ok(floored_ln(pp) + floored_ln(nn) - 2.0 * floored_ln(pn))
}
