//! From an optimized projection to a working classifier: the density
//! model compares class KDEs at the projected point; the threshold model
//! compresses the density comparison into k sorted thresholds with
//! alternating region labels, found at sign changes of the KDE difference.

use crate::data::ClassData;
use crate::density::{effective_width, kde_eval, project, KdeSpec, Projection};
use crate::error::{MelcError, Result};
use crate::optimizer::{multi_start, OptOptions};
use std::io::{BufRead, Write};

/// Optimized direction plus everything needed to evaluate the two
/// projected class densities.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionModel {
    pub v: Vec<f64>,
    pub gamma: f64,
    pub width_pos: f64,
    pub width_neg: f64,
    pub proj_pos: Projection,
    pub proj_neg: Projection,
}

impl ProjectionModel {
    pub fn new(
        v: Vec<f64>,
        gamma: f64,
        width_pos: f64,
        width_neg: f64,
        proj_pos: Projection,
        proj_neg: Projection,
    ) -> Result<Self> {
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-9 {
            return Err(MelcError::model(format!("direction norm {norm}, expected unit length")));
        }
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(MelcError::model("gamma must be positive"));
        }
        if !(width_pos > 0.0) || !(width_neg > 0.0) {
            return Err(MelcError::model("kernel widths must be positive"));
        }
        Ok(ProjectionModel {
            v,
            gamma,
            width_pos,
            width_neg,
            proj_pos,
            proj_neg,
        })
    }

    fn kde_pos(&self) -> KdeSpec {
        KdeSpec {
            sigma: self.width_pos,
            gamma: 1.0,
        }
    }

    fn kde_neg(&self) -> KdeSpec {
        KdeSpec {
            sigma: self.width_neg,
            gamma: 1.0,
        }
    }

    /// KDE difference on the projection line, positive minus negative.
    fn q(&self, x: f64) -> f64 {
        kde_eval(&self.proj_pos, &self.kde_pos(), x) - kde_eval(&self.proj_neg, &self.kde_neg(), x)
    }

    fn check_dim(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.v.len() {
            return Err(MelcError::data(format!(
                "point has dimension {}, model has {}",
                x.len(),
                self.v.len()
            )));
        }
        Ok(self.v.iter().zip(x).map(|(a, b)| a * b).sum())
    }
}

/// k sorted thresholds on the projection line; region labels alternate
/// starting from leftmost_label, with points on a threshold belonging to
/// the region on its left (intervals (t_i, t_{i+1}]).
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdClassifier {
    pub v: Vec<f64>,
    pub thresholds: Vec<f64>,
    pub leftmost_label: i8,
}

/// Optimizes the direction by multi-start ascent and packages the model;
/// per-class widths are recomputed on the final projections.
pub fn fit(
    xp: &ClassData,
    xn: &ClassData,
    opts: &OptOptions,
    extra_seeds: &[Vec<f64>],
) -> Result<ProjectionModel> {
    let best = multi_start(xp, xn, opts, extra_seeds)?;
    model_for_direction(best.v, xp, xn, opts.gamma)
}

pub(crate) fn model_for_direction(
    v: Vec<f64>,
    xp: &ClassData,
    xn: &ClassData,
    gamma: f64,
) -> Result<ProjectionModel> {
    let proj_pos = project(&v, xp)?;
    let proj_neg = project(&v, xn)?;
    let width_pos = effective_width(&proj_pos, gamma)?;
    let width_neg = effective_width(&proj_neg, gamma)?;
    ProjectionModel::new(v, gamma, width_pos, width_neg, proj_pos, proj_neg)
}

/// Bisection on q inside (lo, hi) where the endpoint signs differ.
/// After `iters` evaluations the midpoint of the final interval is the
/// threshold; an exact zero stops early at that point.
fn bisect(model: &ProjectionModel, mut lo: f64, mut hi: f64, sign_lo: f64, iters: usize) -> f64 {
    for _ in 0..iters {
        let mid = 0.5 * (lo + hi);
        let qm = model.q(mid);
        if qm == 0.0 {
            return mid;
        }
        if qm.signum() == sign_lo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Reads the threshold classifier off the density model: sort the merged
/// projected samples, find sign changes of the KDE difference between
/// consecutive points, bisect each crossing. A sample where the
/// difference is exactly zero is itself the threshold when the signs on
/// the two sides differ, and no threshold when they agree.
pub fn extract_thresholds(model: &ProjectionModel, binsearch_iters: usize) -> Result<ThresholdClassifier> {
    if binsearch_iters == 0 {
        return Err(MelcError::config("binsearch_iters must be at least 1"));
    }
    let mut xs: Vec<f64> = model
        .proj_pos
        .samples()
        .iter()
        .chain(model.proj_neg.samples())
        .copied()
        .collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();

    let q: Vec<f64> = xs.iter().map(|&x| model.q(x)).collect();
    let mut thresholds = Vec::new();
    let mut i = 0;
    while i < xs.len() {
        if q[i] == 0.0 {
            // maximal run of exact zeros: a crossing only if the signs
            // on both sides differ; the first zero sample is the threshold
            let start = i;
            while i < xs.len() && q[i] == 0.0 {
                i += 1;
            }
            if start > 0 && i < xs.len() && q[start - 1].signum() != q[i].signum() {
                thresholds.push(xs[start]);
            }
        } else {
            if i > 0 && q[i - 1] != 0.0 && q[i - 1].signum() != q[i].signum() {
                thresholds.push(bisect(
                    model,
                    xs[i - 1],
                    xs[i],
                    q[i - 1].signum(),
                    binsearch_iters,
                ));
            }
            i += 1;
        }
    }

    // Anchor the leftmost label to a sample with a nonzero density
    // difference and unwind the flips at thresholds left of it. Evaluating
    // outside the sample range instead would pick up tail crossings the
    // scan cannot see and invert every region. All-zero differences mean
    // identical densities, which classify as +1.
    let leftmost_label = match xs.iter().zip(&q).find(|(_, &qi)| qi != 0.0) {
        None => 1,
        Some((&x0, &q0)) => {
            let sign = if q0 > 0.0 { 1i8 } else { -1 };
            let flips = thresholds.iter().filter(|&&t| t < x0).count();
            if flips % 2 == 0 {
                sign
            } else {
                -sign
            }
        }
    };
    Ok(ThresholdClassifier {
        v: model.v.clone(),
        thresholds,
        leftmost_label,
    })
}

/// Compares the two projected class densities at v dot x.
/// Equal densities (including both zero) classify as +1.
pub fn classify_density(model: &ProjectionModel, x: &[f64]) -> Result<(i8, f64)> {
    let p = model.check_dim(x)?;
    let dp = kde_eval(&model.proj_pos, &model.kde_pos(), p);
    let dn = kde_eval(&model.proj_neg, &model.kde_neg(), p);
    if dp == 0.0 && dn == 0.0 {
        return Ok((1, 0.5));
    }
    let likelihood = dp / (dp + dn);
    Ok((if dp >= dn { 1 } else { -1 }, likelihood))
}

/// Walks the region parity: label flips at each threshold strictly left
/// of the projected value, so points on a threshold stay in the left region.
pub fn classify_thresholds(tc: &ThresholdClassifier, x: &[f64]) -> Result<i8> {
    if x.len() != tc.v.len() {
        return Err(MelcError::data(format!(
            "point has dimension {}, classifier has {}",
            x.len(),
            tc.v.len()
        )));
    }
    let p: f64 = tc.v.iter().zip(x).map(|(a, b)| a * b).sum();
    let crossed = tc.thresholds.partition_point(|t| *t < p);
    Ok(if crossed % 2 == 0 {
        tc.leftmost_label
    } else {
        -tc.leftmost_label
    })
}

/// n evenly spaced samples of both projected class densities on [lo, hi].
pub fn density_curve(model: &ProjectionModel, lo: f64, hi: f64, n: usize) -> Result<Vec<(f64, f64, f64)>> {
    if !(lo < hi) {
        return Err(MelcError::config("need lo < hi"));
    }
    if n < 2 {
        return Err(MelcError::config("need at least two samples"));
    }
    let kp = model.kde_pos();
    let kn = model.kde_neg();
    let step = (hi - lo) / (n - 1) as f64;
    Ok((0..n)
        .map(|i| {
            let x = if i + 1 == n { hi } else { lo + i as f64 * step };
            (
                x,
                kde_eval(&model.proj_pos, &kp, x),
                kde_eval(&model.proj_neg, &kn, x),
            )
        })
        .collect())
}

/// On-disk model: always the direction, gamma, and widths; training
/// projections and thresholds are optional blocks. A file without
/// projections can still predict through its thresholds.
#[derive(Debug, Clone, PartialEq)]
pub struct SavedModel {
    pub v: Vec<f64>,
    pub gamma: f64,
    pub width_pos: f64,
    pub width_neg: f64,
    pub proj_pos: Option<Projection>,
    pub proj_neg: Option<Projection>,
    pub thresholds: Option<(Vec<f64>, i8)>,
}

const MODEL_TAG: &str = "melc-model v1";

impl SavedModel {
    pub fn from_projection(m: &ProjectionModel) -> Self {
        SavedModel {
            v: m.v.clone(),
            gamma: m.gamma,
            width_pos: m.width_pos,
            width_neg: m.width_neg,
            proj_pos: Some(m.proj_pos.clone()),
            proj_neg: Some(m.proj_neg.clone()),
            thresholds: None,
        }
    }

    pub fn with_thresholds(m: &ProjectionModel, tc: &ThresholdClassifier) -> Self {
        let mut s = SavedModel::from_projection(m);
        s.thresholds = Some((tc.thresholds.clone(), tc.leftmost_label));
        s
    }

    pub fn thresholds_only(m: &ProjectionModel, tc: &ThresholdClassifier) -> Self {
        SavedModel {
            v: m.v.clone(),
            gamma: m.gamma,
            width_pos: m.width_pos,
            width_neg: m.width_neg,
            proj_pos: None,
            proj_neg: None,
            thresholds: Some((tc.thresholds.clone(), tc.leftmost_label)),
        }
    }

    /// Rebuilds the density model; None when projections were not saved.
    pub fn projection_model(&self) -> Option<Result<ProjectionModel>> {
        match (&self.proj_pos, &self.proj_neg) {
            (Some(p), Some(n)) => Some(ProjectionModel::new(
                self.v.clone(),
                self.gamma,
                self.width_pos,
                self.width_neg,
                p.clone(),
                n.clone(),
            )),
            _ => None,
        }
    }

    pub fn threshold_classifier(&self) -> Option<ThresholdClassifier> {
        self.thresholds.as_ref().map(|(t, l)| ThresholdClassifier {
            v: self.v.clone(),
            thresholds: t.clone(),
            leftmost_label: *l,
        })
    }
}

fn write_reals<W: Write>(out: &mut W, vals: &[f64]) -> std::io::Result<()> {
    for x in vals {
        write!(out, " {x}")?;
    }
    writeln!(out)
}

fn uniform_weights(p: &Projection) -> bool {
    p.weights().iter().all(|&w| w == 1.0)
}

pub fn save_model<W: Write>(model: &SavedModel, out: &mut W) -> Result<()> {
    writeln!(out, "{MODEL_TAG}")?;
    writeln!(out, "d {}", model.v.len())?;
    writeln!(out, "gamma {}", model.gamma)?;
    write!(out, "v")?;
    write_reals(out, &model.v)?;
    writeln!(out, "width_pos {}", model.width_pos)?;
    writeln!(out, "width_neg {}", model.width_neg)?;
    for (key, wkey, proj) in [
        ("proj_pos", "weights_pos", &model.proj_pos),
        ("proj_neg", "weights_neg", &model.proj_neg),
    ] {
        if let Some(p) = proj {
            write!(out, "{key} {}", p.len())?;
            write_reals(out, p.samples())?;
            if !uniform_weights(p) {
                write!(out, "{wkey} {}", p.len())?;
                write_reals(out, p.weights())?;
            }
        }
    }
    if let Some((t, leftmost)) = &model.thresholds {
        write!(out, "thresholds {}", t.len())?;
        write_reals(out, t)?;
        writeln!(out, "leftmost {}", if *leftmost == 1 { "+1" } else { "-1" })?;
    }
    Ok(())
}

fn parse_real(tok: &str) -> Result<f64> {
    let x: f64 = tok
        .parse()
        .map_err(|_| MelcError::model(format!("bad real {tok:?}")))?;
    if !x.is_finite() {
        return Err(MelcError::model(format!("non-finite value {tok}")));
    }
    Ok(x)
}

fn parse_counted(rest: &[&str], key: &str) -> Result<Vec<f64>> {
    let count: usize = rest
        .first()
        .ok_or_else(|| MelcError::model(format!("{key}: missing count")))?
        .parse()
        .map_err(|_| MelcError::model(format!("{key}: bad count")))?;
    if rest.len() != count + 1 {
        return Err(MelcError::model(format!(
            "{key}: expected {count} values, found {}",
            rest.len() - 1
        )));
    }
    rest[1..].iter().map(|t| parse_real(t)).collect()
}

pub fn load_model<R: BufRead>(input: R) -> Result<SavedModel> {
    let mut lines = input.lines();
    let tag = lines
        .next()
        .ok_or_else(|| MelcError::model("empty model file"))??;
    if tag.trim_end() != MODEL_TAG {
        return Err(MelcError::model(format!(
            "unsupported model version {:?}, expected {MODEL_TAG:?}",
            tag.trim_end()
        )));
    }
    let mut d: Option<usize> = None;
    let mut gamma = None;
    let mut v: Option<Vec<f64>> = None;
    let mut width_pos = None;
    let mut width_neg = None;
    let mut proj = [None::<Vec<f64>>, None::<Vec<f64>>];
    let mut weights = [None::<Vec<f64>>, None::<Vec<f64>>];
    let mut thresholds: Option<Vec<f64>> = None;
    let mut leftmost: Option<i8> = None;
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        let rest = &toks[1..];
        match toks[0] {
            "d" => {
                let n: usize = rest
                    .first()
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| MelcError::model("bad dimension line"))?;
                d = Some(n);
            }
            "gamma" => gamma = Some(parse_real(rest.first().ok_or_else(|| MelcError::model("gamma: missing value"))?)?),
            "width_pos" => width_pos = Some(parse_real(rest.first().ok_or_else(|| MelcError::model("width_pos: missing value"))?)?),
            "width_neg" => width_neg = Some(parse_real(rest.first().ok_or_else(|| MelcError::model("width_neg: missing value"))?)?),
            "v" => {
                v = Some(rest.iter().map(|t| parse_real(t)).collect::<Result<_>>()?);
            }
            "proj_pos" => proj[0] = Some(parse_counted(rest, "proj_pos")?),
            "proj_neg" => proj[1] = Some(parse_counted(rest, "proj_neg")?),
            "weights_pos" => weights[0] = Some(parse_counted(rest, "weights_pos")?),
            "weights_neg" => weights[1] = Some(parse_counted(rest, "weights_neg")?),
            "thresholds" => thresholds = Some(parse_counted(rest, "thresholds")?),
            "leftmost" => {
                leftmost = Some(match *rest.first().ok_or_else(|| MelcError::model("leftmost: missing value"))? {
                    "+1" => 1,
                    "-1" => -1,
                    other => return Err(MelcError::model(format!("leftmost must be +1 or -1, found {other:?}"))),
                });
            }
            other => return Err(MelcError::model(format!("unknown model line {other:?}"))),
        }
    }
    let d = d.ok_or_else(|| MelcError::model("truncated model: missing d"))?;
    let gamma = gamma.ok_or_else(|| MelcError::model("truncated model: missing gamma"))?;
    let v = v.ok_or_else(|| MelcError::model("truncated model: missing v"))?;
    let width_pos = width_pos.ok_or_else(|| MelcError::model("truncated model: missing width_pos"))?;
    let width_neg = width_neg.ok_or_else(|| MelcError::model("truncated model: missing width_neg"))?;
    if v.len() != d {
        return Err(MelcError::model(format!(
            "v has {} components, d says {d}",
            v.len()
        )));
    }
    if !(width_pos > 0.0) || !(width_neg > 0.0) {
        return Err(MelcError::model("kernel widths must be positive"));
    }
    if !(gamma > 0.0) {
        return Err(MelcError::model("gamma must be positive"));
    }
    let mut projections = [None, None];
    for (slot, (samples, w)) in projections
        .iter_mut()
        .zip(proj.into_iter().zip(weights))
    {
        match (samples, w) {
            (Some(s), Some(w)) => {
                if s.len() != w.len() {
                    return Err(MelcError::model("projection and weight counts differ"));
                }
                *slot = Some(Projection::new(s, w)?);
            }
            (Some(s), None) => *slot = Some(Projection::uniform(s)?),
            (None, Some(_)) => {
                return Err(MelcError::model("weights block without its projection block"))
            }
            (None, None) => {}
        }
    }
    let [proj_pos, proj_neg] = projections;
    if proj_pos.is_some() != proj_neg.is_some() {
        return Err(MelcError::model("model must carry both projections or neither"));
    }
    let thresholds = match (thresholds, leftmost) {
        (Some(t), Some(l)) => {
            if t.windows(2).any(|w| w[0] >= w[1]) {
                return Err(MelcError::model("thresholds must be strictly increasing"));
            }
            Some((t, l))
        }
        (None, None) => None,
        _ => return Err(MelcError::model("thresholds and leftmost must appear together")),
    };
    if proj_pos.is_none() && thresholds.is_none() {
        return Err(MelcError::model("model carries neither projections nor thresholds"));
    }
    Ok(SavedModel {
        v,
        gamma,
        width_pos,
        width_neg,
        proj_pos,
        proj_neg,
        thresholds,
    })
}
