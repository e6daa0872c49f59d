//! Steepest ascent of the divergence over the unit sphere: tangent
//! projection of the gradient, golden-section line search along great
//! circles, random multi-start, and cheap seeding models.

use crate::data::ClassData;
use crate::density;
use crate::error::{MelcError, Result};
use crate::gradient::{cip_only_with_grad, dcs_with_grad};
use crate::parallel::map_items;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use std::path::Path;

/// PRNG stream for the random restart directions.
const MULTI_START_STREAM: u64 = 1;
/// PRNG stream for perceptron epoch shuffles.
const PERCEPTRON_STREAM: u64 = 2;

const GOLDEN_ITERS: usize = 32;
const BRACKET_START: f64 = 1e-3;
const MAX_STEP: f64 = std::f64::consts::FRAC_PI_2;

#[derive(Debug, Clone)]
pub struct OptOptions {
    pub max_iters: usize,
    /// Stop when the tangent gradient norm falls below this.
    pub grad_tol: f64,
    /// Stop when the scaled objective gain falls below this.
    pub obj_tol: f64,
    pub restarts: usize,
    pub seed: u64,
    pub gamma: f64,
    /// Maximize -2 log cip(P,N) instead of the full divergence.
    pub cip_only: bool,
}

impl Default for OptOptions {
    fn default() -> Self {
        OptOptions {
            max_iters: 200,
            grad_tol: 1e-6,
            obj_tol: 1e-9,
            restarts: 10,
            seed: 0,
            gamma: 1.0,
            cip_only: false,
        }
    }
}

impl OptOptions {
    fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(MelcError::config("max_iters must be at least 1"));
        }
        if !(self.grad_tol > 0.0) || !(self.obj_tol > 0.0) {
            return Err(MelcError::config("tolerances must be positive"));
        }
        if !(self.gamma > 0.0) || !self.gamma.is_finite() {
            return Err(MelcError::config("gamma must be positive and finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct OptResult {
    pub v: Vec<f64>,
    pub objective: f64,
    /// Objective at the start plus one value per accepted step.
    pub trace: Vec<f64>,
    /// Number of accepted steps.
    pub iterations: usize,
    /// Which start produced this result: "given", "rand-i", or "seed-i".
    pub seed_label: String,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub(crate) fn normalize(v: &[f64]) -> Result<Vec<f64>> {
    let n = norm(v);
    if !(n > 0.0) || !n.is_finite() {
        return Err(MelcError::config("cannot normalize a zero vector"));
    }
    Ok(v.iter().map(|x| x / n).collect())
}

/// Moves along the great circle through v in the tangent direction of g:
/// v' = v cos(alpha) + (h/|h|) sin(alpha) with h = g - <g,v>v.
/// A zero tangent component returns v unchanged.
pub fn sphere_step(v: &[f64], g: &[f64], alpha: f64) -> Vec<f64> {
    let gv: f64 = g.iter().zip(v).map(|(a, b)| a * b).sum();
    let h: Vec<f64> = g.iter().zip(v).map(|(gi, vi)| gi - gv * vi).collect();
    let hn = norm(&h);
    if hn == 0.0 {
        return v.to_vec();
    }
    let (s, c) = alpha.sin_cos();
    let stepped: Vec<f64> = v
        .iter()
        .zip(&h)
        .map(|(vi, hi)| vi * c + hi / hn * s)
        .collect();
    let sn = norm(&stepped);
    stepped.iter().map(|x| x / sn).collect()
}

/// Step length along the great circle from v in tangent direction h.
/// Doubles from a small angle to bracket the peak, then golden-section;
/// when the first probe is already downhill, backtracks from pi/4.
/// Returns 0 when no angle improves the objective.
pub fn line_search(objective: impl Fn(&[f64]) -> f64, v: &[f64], h: &[f64]) -> f64 {
    let phi = |alpha: f64| objective(&sphere_step(v, h, alpha));
    let f0 = objective(v);

    let mut best_a = 0.0;
    let mut best_f = f0;
    let mut consider = |a: f64, f: f64| {
        if f > best_f {
            best_f = f;
            best_a = a;
        }
    };

    let f1 = phi(BRACKET_START);
    consider(BRACKET_START, f1);
    let (mut lo, mut hi);
    if f1 > f0 {
        // climb by doubling until the value drops or the cap is hit
        let mut prev_a = 0.0;
        let mut a = BRACKET_START;
        let mut fa = f1;
        loop {
            let next = (2.0 * a).min(MAX_STEP);
            let fn_ = phi(next);
            consider(next, fn_);
            if fn_ < fa || next >= MAX_STEP {
                lo = prev_a;
                hi = next;
                break;
            }
            prev_a = a;
            a = next;
            fa = fn_;
        }
    } else {
        // backtrack from pi/4 looking for any improving angle
        let mut a = MAX_STEP / 2.0;
        let mut found = None;
        while a > BRACKET_START / 16.0 {
            let fa = phi(a);
            consider(a, fa);
            if fa > f0 {
                found = Some(a);
                break;
            }
            a /= 2.0;
        }
        match found {
            Some(a) => {
                lo = 0.0;
                hi = (2.0 * a).min(MAX_STEP);
            }
            None => return 0.0,
        }
    }

    // golden-section interior refinement of the bracket
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let mut fx1 = phi(x1);
    let mut fx2 = phi(x2);
    consider(x1, fx1);
    consider(x2, fx2);
    for _ in 0..GOLDEN_ITERS {
        if fx1 < fx2 {
            lo = x1;
            x1 = x2;
            fx1 = fx2;
            x2 = lo + inv_phi * (hi - lo);
            fx2 = phi(x2);
            consider(x2, fx2);
        } else {
            hi = x2;
            x2 = x1;
            fx2 = fx1;
            x1 = hi - inv_phi * (hi - lo);
            fx1 = phi(x1);
            consider(x1, fx1);
        }
    }
    if best_f > f0 {
        best_a
    } else {
        0.0
    }
}

fn fused_objective(
    v: &[f64],
    xp: &ClassData,
    xn: &ClassData,
    opts: &OptOptions,
) -> Result<(f64, Vec<f64>)> {
    if opts.cip_only {
        cip_only_with_grad(v, xp, xn, opts.gamma)
    } else {
        dcs_with_grad(v, xp, xn, opts.gamma)
    }
}

fn value_objective(v: &[f64], xp: &ClassData, xn: &ClassData, opts: &OptOptions) -> Result<f64> {
    if opts.cip_only {
        Ok(-2.0 * density::floored_ln(density::cip(v, xp, xn, opts.gamma)?))
    } else {
        density::dcs(v, xp, xn, opts.gamma)
    }
}

pub fn optimize(xp: &ClassData, xn: &ClassData, v0: &[f64], opts: &OptOptions) -> Result<OptResult> {
    optimize_labeled(xp, xn, v0, opts, "given", &mut |_| {})
}

/// Core ascent loop. `on_accept` observes every accepted iterate, which
/// tests use to assert trajectory invariants.
pub(crate) fn optimize_labeled(
    xp: &ClassData,
    xn: &ClassData,
    v0: &[f64],
    opts: &OptOptions,
    label: &str,
    on_accept: &mut dyn FnMut(&[f64]),
) -> Result<OptResult> {
    opts.validate()?;
    let mut v = normalize(v0)?;
    // validates dimensions and class sizes once; later closures expect success
    let (mut f, mut g) = fused_objective(&v, xp, xn, opts)?;
    let mut trace = vec![f];
    let value = |w: &[f64]| {
        value_objective(w, xp, xn, opts).expect("objective evaluation after validation")
    };

    let mut iterations = 0;
    for _ in 0..opts.max_iters {
        let gv: f64 = g.iter().zip(&v).map(|(a, b)| a * b).sum();
        let h: Vec<f64> = g.iter().zip(&v).map(|(gi, vi)| gi - gv * vi).collect();
        if norm(&h) < opts.grad_tol {
            break;
        }
        let alpha = line_search(value, &v, &h);
        if alpha == 0.0 {
            break;
        }
        let stepped = sphere_step(&v, &h, alpha);
        let (fs, gs) = fused_objective(&stepped, xp, xn, opts)?;
        if fs < f {
            // line search saw an improvement the fused pass cannot confirm;
            // numerically flat, stop rather than break monotonicity
            break;
        }
        let gain = fs - f;
        v = stepped;
        f = fs;
        g = gs;
        trace.push(f);
        iterations += 1;
        on_accept(&v);
        if gain / (1.0 + f.abs()) < opts.obj_tol {
            break;
        }
    }
    Ok(OptResult {
        objective: f,
        v,
        trace,
        iterations,
        seed_label: label.to_string(),
    })
}

/// One uniform point on the sphere, by normalizing a Gaussian draw.
pub(crate) fn random_sphere_point(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        if let Ok(u) = normalize(&v) {
            if norm(&v) > 1e-6 {
                return u;
            }
        }
    }
}

/// Runs optimize from `opts.restarts` random sphere points plus every
/// extra seed, returning the best objective; ties keep the earliest start.
/// Start order is "rand-0".."rand-{r-1}", then "seed-0"... Runs may execute
/// concurrently; selection is by fixed start order, so the winner is
/// independent of scheduling.
pub fn multi_start(
    xp: &ClassData,
    xn: &ClassData,
    opts: &OptOptions,
    extra_seeds: &[Vec<f64>],
) -> Result<OptResult> {
    opts.validate()?;
    if opts.restarts + extra_seeds.len() == 0 {
        return Err(MelcError::config("need at least one start"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    rng.set_stream(MULTI_START_STREAM);
    let dim = xp.dim();
    let mut starts: Vec<(String, Vec<f64>)> = (0..opts.restarts)
        .map(|r| (format!("rand-{r}"), random_sphere_point(&mut rng, dim)))
        .collect();
    starts.extend(
        extra_seeds
            .iter()
            .enumerate()
            .map(|(i, s)| (format!("seed-{i}"), s.clone())),
    );
    let runs = map_items(starts, |(label, v0)| {
        optimize_labeled(xp, xn, &v0, opts, &label, &mut |_| {})
    });
    let mut best: Option<OptResult> = None;
    for run in runs {
        let run = run?;
        if best.as_ref().is_none_or(|b| run.objective > b.objective) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one start"))
}

/// How to produce a starting direction from the data.
#[derive(Debug, Clone)]
pub enum SeedMethod<'a> {
    /// Difference of the class means.
    MeanDifference,
    /// Classic mistake-driven perceptron, weight vector only.
    Perceptron { seed: u64 },
    /// One line of whitespace-separated reals.
    File(&'a Path),
}

fn weighted_mean(class: &ClassData) -> Vec<f64> {
    let mut m = vec![0.0; class.dim()];
    let mut wsum = 0.0;
    for i in 0..class.len() {
        let w = class.weights()[i];
        wsum += w;
        for (mj, xj) in m.iter_mut().zip(class.point(i)) {
            *mj += w * xj;
        }
    }
    m.iter_mut().for_each(|x| *x /= wsum);
    m
}

fn perceptron_direction(xp: &ClassData, xn: &ClassData, seed: u64) -> Result<Vec<f64>> {
    let dim = xp.dim();
    let mut order: Vec<(i8, usize)> = (0..xp.len())
        .map(|i| (1i8, i))
        .chain((0..xn.len()).map(|i| (-1i8, i)))
        .collect();
    let mut w = vec![0.0; dim];
    let mut bias = 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(PERCEPTRON_STREAM);
    for _ in 0..1000 {
        order.shuffle(&mut rng);
        let mut mistakes = 0;
        for &(y, i) in &order {
            let x = if y == 1 { xp.point(i) } else { xn.point(i) };
            let score: f64 = w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + bias;
            if score * y as f64 <= 0.0 {
                mistakes += 1;
                for (wj, xj) in w.iter_mut().zip(x) {
                    *wj += y as f64 * xj;
                }
                bias += y as f64;
            }
        }
        if mistakes == 0 {
            break;
        }
    }
    if norm(&w) == 0.0 {
        return Err(MelcError::data("perceptron produced a zero weight vector"));
    }
    Ok(w)
}

/// A computationally cheap starting direction, normalized to unit length.
pub fn seed_vector(method: SeedMethod, xp: &ClassData, xn: &ClassData) -> Result<Vec<f64>> {
    if xp.dim() != xn.dim() {
        return Err(MelcError::data("class dimensions differ"));
    }
    let raw = match method {
        SeedMethod::MeanDifference => {
            let mp = weighted_mean(xp);
            let mn = weighted_mean(xn);
            let diff: Vec<f64> = mp.iter().zip(&mn).map(|(a, b)| a - b).collect();
            if norm(&diff) == 0.0 {
                return Err(MelcError::data("class means coincide"));
            }
            diff
        }
        SeedMethod::Perceptron { seed } => perceptron_direction(xp, xn, seed)?,
        SeedMethod::File(path) => {
            let text = std::fs::read_to_string(path)?;
            let vals: Vec<f64> = text
                .split_whitespace()
                .map(|t| {
                    t.parse::<f64>()
                        .map_err(|_| MelcError::data(format!("bad seed component {t:?}")))
                })
                .collect::<Result<_>>()?;
            if vals.len() != xp.dim() {
                return Err(MelcError::data(format!(
                    "seed vector has {} components, data has dimension {}",
                    vals.len(),
                    xp.dim()
                )));
            }
            vals
        }
    };
    normalize(&raw)
}
