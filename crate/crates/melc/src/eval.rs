//! Metrics, generalization-bound diagnostics, and the cross-validation
//! harness with gamma grid search.

use crate::classifier::{classify_thresholds, extract_thresholds, fit};
use crate::data::{Dataset, SplitPlan};
use crate::density;
use crate::error::{MelcError, Result};
use crate::optimizer::OptOptions;
use crate::parallel::map_items;
use std::io::Write;

/// Bisection depth used for fold predictions; five steps reproduce the
/// density classifier exactly on the datasets tested.
pub const CV_BINSEARCH_ITERS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConfusionCounts {
    pub true_pos: usize,
    pub true_neg: usize,
    pub false_pos: usize,
    pub false_neg: usize,
}

impl ConfusionCounts {
    pub fn from_predictions(labels: &[i8], predictions: &[i8]) -> Result<Self> {
        if labels.len() != predictions.len() {
            return Err(MelcError::data("label and prediction counts differ"));
        }
        let mut c = ConfusionCounts {
            true_pos: 0,
            true_neg: 0,
            false_pos: 0,
            false_neg: 0,
        };
        for (&y, &p) in labels.iter().zip(predictions) {
            match (y, p) {
                (1, 1) => c.true_pos += 1,
                (-1, -1) => c.true_neg += 1,
                (-1, 1) => c.false_pos += 1,
                (1, -1) => c.false_neg += 1,
                _ => return Err(MelcError::data("labels must be +1 or -1")),
            }
        }
        Ok(c)
    }

    pub fn total(&self) -> usize {
        self.true_pos + self.true_neg + self.false_pos + self.false_neg
    }
}

/// (accuracy, Matthews correlation, weighted accuracy).
/// MCC is 0 when its denominator vanishes; weighted accuracy averages the
/// two class recalls and needs both classes present.
pub fn compute_metrics(c: &ConfusionCounts) -> Result<(f64, f64, f64)> {
    let n = c.total();
    if n == 0 {
        return Err(MelcError::data("no evaluated points"));
    }
    let (tp, tn, fp, fng) = (
        c.true_pos as f64,
        c.true_neg as f64,
        c.false_pos as f64,
        c.false_neg as f64,
    );
    let acc = (tp + tn) / n as f64;
    let denom = (tp + fp) * (tp + fng) * (tn + fp) * (tn + fng);
    let mcc = if denom == 0.0 {
        0.0
    } else {
        (tp * tn - fp * fng) / denom.sqrt()
    };
    if tp + fng == 0.0 || tn + fp == 0.0 {
        return Err(MelcError::data(
            "weighted accuracy needs both classes among the evaluated points",
        ));
    }
    let wac = 0.5 * (tp / (tp + fng) + tn / (tn + fp));
    Ok((acc, mcc, wac))
}

/// Sample Pearson correlation; either series constant gives 0.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(MelcError::data("series lengths differ"));
    }
    if xs.len() < 2 {
        return Err(MelcError::data("need at least two observations"));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    let mut sxy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
        sxy += (x - mx) * (y - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Ok(0.0);
    }
    Ok(sxy / (sxx * syy).sqrt())
}

fn check_bound_common(n: usize, k: usize, delta: f64, e_emp: f64) -> Result<()> {
    if n == 0 || k == 0 {
        return Err(MelcError::config("sample size and threshold count must be positive"));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(MelcError::config("delta must lie in (0,1)"));
    }
    if !(0.0..=1.0).contains(&e_emp) {
        return Err(MelcError::config("empirical error must lie in [0,1]"));
    }
    Ok(())
}

/// Distribution-free generalization bound for a d-dimensional k-threshold
/// projection classifier: e_emp plus the capacity term in sqrt(8/N).
pub fn anthony_bound(n: usize, d: usize, k: usize, delta: f64, e_emp: f64) -> Result<f64> {
    check_bound_common(n, k, delta, e_emp)?;
    if d == 0 {
        return Err(MelcError::config("dimension must be positive"));
    }
    let nf = n as f64;
    let dk = (d + k - 1) as f64;
    let kf = k as f64;
    let capacity = dk * (2.0 * std::f64::consts::E * nf * kf / dk).ln()
        + (14.0 * kf * kf / delta).ln();
    Ok(e_emp + (8.0 / nf * capacity).sqrt())
}

/// Margin variant of the generalization bound; margin is the fraction of
/// the projection range kept clear of thresholds.
pub fn anthony_margin_bound(n: usize, margin: f64, k: usize, delta: f64, e_emp: f64) -> Result<f64> {
    check_bound_common(n, k, delta, e_emp)?;
    if !(margin > 0.0 && margin <= 1.0) {
        return Err(MelcError::config("margin must lie in (0,1]"));
    }
    let nf = n as f64;
    let capacity = 1152.0 / (margin * margin) * (9.0 * nf).ln()
        + k as f64 * (10.0 / margin).ln()
        + (4.0 / delta).ln();
    Ok(e_emp + (8.0 / nf * capacity).sqrt())
}

/// Metrics of one (gamma, fold) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldMetrics {
    pub gamma: f64,
    pub fold: usize,
    pub acc: f64,
    pub wac: f64,
    pub mcc: f64,
    /// Divergence reached on the training fold.
    pub dcs: f64,
    pub thresholds: usize,
}

/// Per-gamma aggregate over folds; standard deviations use n-1.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaSummary {
    pub gamma: f64,
    pub mean_acc: f64,
    pub std_acc: f64,
    pub mean_wac: f64,
    pub std_wac: f64,
    pub mean_mcc: f64,
    pub std_mcc: f64,
    pub mean_dcs: f64,
    pub std_dcs: f64,
    pub mean_thresholds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvReport {
    /// Gamma-major, fold-minor, in the order given.
    pub rows: Vec<FoldMetrics>,
    pub summaries: Vec<GammaSummary>,
    pub chosen_gamma: f64,
}

/// Which mean metric picks the reported gamma.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectBy {
    Wac,
    Mcc,
}

/// Splitmix-style mix keeps cell seeds decorrelated even for adjacent
/// grid positions.
fn cell_seed(base: u64, gamma_idx: usize, fold: usize) -> u64 {
    let mut z = base
        .wrapping_add((gamma_idx as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add((fold as u64 + 1).wrapping_mul(0xBF58_476D_1CE4_E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    if n < 2.0 {
        return (mean, 0.0);
    }
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Fits one model per (gamma, train fold), scores the test fold with the
/// five-step threshold classifier, and picks the gamma with the best mean
/// metric (ties go to the smaller gamma). Each cell trains with a seed
/// mixed from the base seed and the cell position, so folds draw
/// independent restarts while the whole report stays reproducible.
/// Cells run concurrently; the report is assembled in deterministic
/// gamma-major order.
pub fn cross_validate(
    ds: &Dataset,
    plan: &SplitPlan,
    gammas: &[f64],
    opts: &OptOptions,
    select_by: SelectBy,
) -> Result<CvReport> {
    if gammas.is_empty() {
        return Err(MelcError::config("gamma grid must be nonempty"));
    }
    if gammas.iter().any(|g| !(g > &0.0) || !g.is_finite()) {
        return Err(MelcError::config("gamma values must be positive and finite"));
    }
    for (f, (train, _)) in plan.folds.iter().enumerate() {
        let mut has = [false, false];
        for &i in train {
            has[usize::from(ds.label(i) == 1)] = true;
        }
        if !(has[0] && has[1]) {
            return Err(MelcError::data(format!(
                "training fold {f} contains a single class"
            )));
        }
    }

    let work: Vec<(f64, usize, u64)> = gammas
        .iter()
        .enumerate()
        .flat_map(|(gi, &g)| {
            (0..plan.folds.len()).map(move |f| (g, f, cell_seed(opts.seed, gi, f)))
        })
        .collect();
    let cells = map_items(work, |(gamma, fold, seed)| -> Result<FoldMetrics> {
        let (train, test) = &plan.folds[fold];
        let train_ds = ds.subset(train);
        let (xp, xn) = train_ds.split_classes();
        let fold_opts = OptOptions { gamma, seed, ..opts.clone() };
        let model = fit(&xp, &xn, &fold_opts, &[])?;
        let tc = extract_thresholds(&model, CV_BINSEARCH_ITERS)?;
        let mut labels = Vec::with_capacity(test.len());
        let mut preds = Vec::with_capacity(test.len());
        for &i in test {
            labels.push(ds.label(i));
            preds.push(classify_thresholds(&tc, ds.point(i))?);
        }
        let counts = ConfusionCounts::from_predictions(&labels, &preds)?;
        let (acc, mcc, wac) = compute_metrics(&counts)?;
        let dcs = density::dcs(&model.v, &xp, &xn, gamma)?;
        Ok(FoldMetrics {
            gamma,
            fold,
            acc,
            wac,
            mcc,
            dcs,
            thresholds: tc.thresholds.len(),
        })
    });
    let mut rows = Vec::with_capacity(cells.len());
    for cell in cells {
        rows.push(cell?);
    }

    let nf = plan.folds.len();
    let mut summaries = Vec::with_capacity(gammas.len());
    for (gi, &gamma) in gammas.iter().enumerate() {
        let slice = &rows[gi * nf..(gi + 1) * nf];
        let (mean_acc, std_acc) = mean_std(slice.iter().map(|r| r.acc));
        let (mean_wac, std_wac) = mean_std(slice.iter().map(|r| r.wac));
        let (mean_mcc, std_mcc) = mean_std(slice.iter().map(|r| r.mcc));
        let (mean_dcs, std_dcs) = mean_std(slice.iter().map(|r| r.dcs));
        let (mean_thresholds, _) = mean_std(slice.iter().map(|r| r.thresholds as f64));
        summaries.push(GammaSummary {
            gamma,
            mean_acc,
            std_acc,
            mean_wac,
            std_wac,
            mean_mcc,
            std_mcc,
            mean_dcs,
            std_dcs,
            mean_thresholds,
        });
    }

    let mut chosen = &summaries[0];
    for s in &summaries[1..] {
        let (cur, cand) = match select_by {
            SelectBy::Wac => (chosen.mean_wac, s.mean_wac),
            SelectBy::Mcc => (chosen.mean_mcc, s.mean_mcc),
        };
        if cand > cur || (cand == cur && s.gamma < chosen.gamma) {
            chosen = s;
        }
    }
    let chosen_gamma = chosen.gamma;
    Ok(CvReport {
        rows,
        summaries,
        chosen_gamma,
    })
}

/// TSV serialization: data rows per (gamma, fold), then mean and std rows
/// per gamma, then the chosen gamma.
pub fn write_cv_report<W: Write + ?Sized>(report: &CvReport, out: &mut W) -> Result<()> {
    writeln!(out, "gamma\tfold\tacc\twac\tmcc\tdcs\tk")?;
    for r in &report.rows {
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.gamma, r.fold, r.acc, r.wac, r.mcc, r.dcs, r.thresholds
        )?;
    }
    for s in &report.summaries {
        writeln!(
            out,
            "{}\tmean\t{}\t{}\t{}\t{}\t{}",
            s.gamma, s.mean_acc, s.mean_wac, s.mean_mcc, s.mean_dcs, s.mean_thresholds
        )?;
        writeln!(
            out,
            "{}\tstd\t{}\t{}\t{}\t{}\t",
            s.gamma, s.std_acc, s.std_wac, s.std_mcc, s.std_dcs
        )?;
    }
    writeln!(out, "chosen_gamma\t{}", report.chosen_gamma)?;
    Ok(())
}
