//! Dataset ingestion, validation, and stratified splitting.
//!
//! Datasets are dense and immutable after construction. Points live in one
//! row-major buffer so per-class views can be copied out contiguously for
//! the pairwise kernels.

use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{MelcError, Result};

/// PRNG stream id for fold shuffling, keeps fold assignment independent of
/// the optimizer's draws under a shared seed.
const KFOLD_STREAM: u64 = 0xF01D;

/// Labeled feature vectors with optional per-point weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    dim: usize,
    points: Vec<f64>,
    labels: Vec<i8>,
    weights: Option<Vec<f64>>,
}

impl Dataset {
    /// `points` is row-major, `points.len() == labels.len() * dim`.
    pub fn new(dim: usize, points: Vec<f64>, labels: Vec<i8>) -> Result<Self> {
        Self::build(dim, points, labels, None)
    }

    pub fn with_weights(
        dim: usize,
        points: Vec<f64>,
        labels: Vec<i8>,
        weights: Vec<f64>,
    ) -> Result<Self> {
        Self::build(dim, points, labels, Some(weights))
    }

    fn build(
        dim: usize,
        points: Vec<f64>,
        labels: Vec<i8>,
        weights: Option<Vec<f64>>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(MelcError::data("dimension must be at least 1"));
        }
        if points.len() != labels.len() * dim {
            return Err(MelcError::data(format!(
                "point buffer holds {} values, expected {} ({} points of dimension {})",
                points.len(),
                labels.len() * dim,
                labels.len(),
                dim
            )));
        }
        if let Some(bad) = labels.iter().find(|&&l| l != 1 && l != -1) {
            return Err(MelcError::data(format!("label {bad} outside {{+1,-1}}")));
        }
        if points.iter().any(|x| !x.is_finite()) {
            return Err(MelcError::data("non-finite feature value"));
        }
        if let Some(w) = &weights {
            if w.len() != labels.len() {
                return Err(MelcError::data("weight count differs from point count"));
            }
            if w.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
                return Err(MelcError::data("weights must be strictly positive"));
            }
        }
        Ok(Dataset {
            dim,
            points,
            labels,
            weights,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn label(&self, i: usize) -> i8 {
        self.labels[i]
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights.as_ref().map_or(1.0, |w| w[i])
    }

    pub fn labels(&self) -> &[i8] {
        &self.labels
    }

    /// Copies out the positive and negative classes, in dataset order.
    pub fn split_classes(&self) -> (ClassData, ClassData) {
        let mut pos = ClassBuilder::new(self.dim);
        let mut neg = ClassBuilder::new(self.dim);
        for i in 0..self.len() {
            let target = if self.labels[i] == 1 { &mut pos } else { &mut neg };
            target.push(self.point(i), self.weight(i));
        }
        (pos.finish(), neg.finish())
    }

    /// Builds a new dataset from a subset of row indices.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let mut points = Vec::with_capacity(indices.len() * self.dim);
        let mut labels = Vec::with_capacity(indices.len());
        let mut weights = self.weights.as_ref().map(|_| Vec::with_capacity(indices.len()));
        for &i in indices {
            points.extend_from_slice(self.point(i));
            labels.push(self.labels[i]);
            if let Some(w) = &mut weights {
                w.push(self.weight(i));
            }
        }
        Dataset {
            dim: self.dim,
            points,
            labels,
            weights,
        }
    }

    /// Serializes in the sparse text format; zero features are omitted.
    pub fn write_libsvm<W: Write>(&self, out: &mut W) -> Result<()> {
        for i in 0..self.len() {
            let label = if self.labels[i] == 1 { "+1" } else { "-1" };
            write!(out, "{label}")?;
            for (j, &x) in self.point(i).iter().enumerate() {
                if x != 0.0 {
                    write!(out, " {}:{}", j + 1, x)?;
                }
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// One class of a dataset, contiguous rows plus weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassData {
    dim: usize,
    points: Vec<f64>,
    weights: Vec<f64>,
}

struct ClassBuilder {
    dim: usize,
    points: Vec<f64>,
    weights: Vec<f64>,
}

impl ClassBuilder {
    fn new(dim: usize) -> Self {
        ClassBuilder {
            dim,
            points: Vec::new(),
            weights: Vec::new(),
        }
    }

    fn push(&mut self, point: &[f64], weight: f64) {
        self.points.extend_from_slice(point);
        self.weights.push(weight);
    }

    fn finish(self) -> ClassData {
        ClassData {
            dim: self.dim,
            points: self.points,
            weights: self.weights,
        }
    }
}

impl ClassData {
    pub fn new(dim: usize, points: Vec<f64>, weights: Option<Vec<f64>>) -> Result<Self> {
        if dim == 0 || points.len() % dim != 0 {
            return Err(MelcError::data("point buffer does not match dimension"));
        }
        let n = points.len() / dim;
        let weights = weights.unwrap_or_else(|| vec![1.0; n]);
        if weights.len() != n {
            return Err(MelcError::data("weight count differs from point count"));
        }
        if weights.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
            return Err(MelcError::data("weights must be strictly positive"));
        }
        Ok(ClassData {
            dim,
            points,
            weights,
        })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

/// Cross-validation fold assignment. Test sets partition the index set.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitPlan {
    pub folds: Vec<(Vec<usize>, Vec<usize>)>,
    pub seed: u64,
}

/// Parses the sparse `<label> <idx>:<val> ...` text format into a dense
/// dataset. Dimension is the maximum feature index seen; absent indices
/// are zero. Labels must be +1 or -1; `zero_as_negative` additionally
/// maps a literal 0 label to -1.
pub fn parse_libsvm<R: BufRead>(reader: R, zero_as_negative: bool) -> Result<Dataset> {
    let mut rows: Vec<(i8, Vec<(usize, f64)>)> = Vec::new();
    let mut dim = 0usize;
    for (lineno, line) in reader.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line?;
        let line = line.trim_end_matches(['\r', '\n']);
        if line.trim().is_empty() {
            continue;
        }
        let mut tokens = line.split_whitespace();
        let label_tok = tokens.next().unwrap();
        let label = parse_label(label_tok, zero_as_negative)
            .ok_or_else(|| MelcError::parse(lineno, format!("bad label {label_tok:?}")))?;
        let mut feats: Vec<(usize, f64)> = Vec::new();
        let mut prev_idx = 0usize;
        for tok in tokens {
            let (idx_s, val_s) = tok
                .split_once(':')
                .ok_or_else(|| MelcError::parse(lineno, format!("expected idx:val, got {tok:?}")))?;
            let idx: usize = idx_s
                .parse()
                .map_err(|_| MelcError::parse(lineno, format!("bad feature index {idx_s:?}")))?;
            if idx == 0 {
                return Err(MelcError::parse(lineno, "feature indices are 1-based"));
            }
            if idx <= prev_idx {
                return Err(MelcError::parse(
                    lineno,
                    format!("non-increasing feature index {idx}"),
                ));
            }
            let val: f64 = val_s
                .parse()
                .map_err(|_| MelcError::parse(lineno, format!("bad feature value {val_s:?}")))?;
            if !val.is_finite() {
                return Err(MelcError::parse(lineno, "non-finite feature value"));
            }
            prev_idx = idx;
            dim = dim.max(idx);
            feats.push((idx, val));
        }
        rows.push((label, feats));
    }
    if rows.is_empty() {
        return Err(MelcError::data("empty input"));
    }
    let dim = dim.max(1);
    let mut points = vec![0.0; rows.len() * dim];
    let mut labels = Vec::with_capacity(rows.len());
    for (r, (label, feats)) in rows.iter().enumerate() {
        labels.push(*label);
        for &(idx, val) in feats {
            points[r * dim + idx - 1] = val;
        }
    }
    Dataset::new(dim, points, labels)
}

fn parse_label(tok: &str, zero_as_negative: bool) -> Option<i8> {
    let v: f64 = tok.parse().ok()?;
    if v == 1.0 {
        Some(1)
    } else if v == -1.0 {
        Some(-1)
    } else if v == 0.0 && zero_as_negative {
        Some(-1)
    } else {
        None
    }
}

/// Which CSV column carries the label.
#[derive(Debug, Clone, PartialEq)]
pub enum LabelColumn {
    Index(usize),
    Name(String),
}

/// Parses a rectangular numeric CSV. A header row is detected when the
/// first row contains any cell that does not parse as a number. The label
/// column is removed; remaining columns become features in file order.
pub fn parse_csv<R: BufRead>(reader: R, label_column: &LabelColumn) -> Result<Dataset> {
    let mut lines = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim_end_matches(['\r', '\n']);
        if line.trim().is_empty() {
            continue;
        }
        lines.push((lineno + 1, line.to_string()));
    }
    if lines.is_empty() {
        return Err(MelcError::data("empty input"));
    }

    let first_cells: Vec<&str> = lines[0].1.split(',').map(str::trim).collect();
    let has_header = first_cells.iter().any(|c| c.parse::<f64>().is_err());
    let ncols = first_cells.len();

    let label_idx = match label_column {
        LabelColumn::Index(i) => {
            if *i >= ncols {
                return Err(MelcError::data(format!(
                    "label column {i} out of range, file has {ncols} columns"
                )));
            }
            *i
        }
        LabelColumn::Name(name) => {
            if !has_header {
                return Err(MelcError::data(format!(
                    "label column {name:?} requested but file has no header row"
                )));
            }
            first_cells
                .iter()
                .position(|c| c == name)
                .ok_or_else(|| MelcError::data(format!("label column {name:?} not found")))?
        }
    };

    let body = if has_header { &lines[1..] } else { &lines[..] };
    if body.is_empty() {
        return Err(MelcError::data("no data rows"));
    }
    let dim = ncols - 1;
    if dim == 0 {
        return Err(MelcError::data("no feature columns"));
    }
    let mut points = Vec::with_capacity(body.len() * dim);
    let mut labels = Vec::with_capacity(body.len());
    for (lineno, line) in body {
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != ncols {
            return Err(MelcError::parse(
                *lineno,
                format!("ragged row, {} cells where {ncols} expected", cells.len()),
            ));
        }
        for (c, cell) in cells.iter().enumerate() {
            let v: f64 = cell
                .parse()
                .map_err(|_| MelcError::parse(*lineno, format!("non-numeric cell {cell:?}")))?;
            if c == label_idx {
                labels.push(match v {
                    x if x == 1.0 => 1,
                    x if x == -1.0 => -1,
                    _ => {
                        return Err(MelcError::parse(
                            *lineno,
                            format!("label {v} outside {{+1,-1}}"),
                        ))
                    }
                });
            } else {
                points.push(v);
            }
        }
    }
    Dataset::new(dim, points, labels)
}

/// Stratified k-fold assignment, deterministic per seed. Per-class test
/// counts differ by at most one from the perfect proportion. Classes
/// smaller than k are allowed, some folds then see none of that class
/// in the test set (leave-one-out is the extreme case).
pub fn stratified_kfold(ds: &Dataset, k: usize, seed: u64) -> Result<SplitPlan> {
    if k < 2 {
        return Err(MelcError::config("fold count must be at least 2"));
    }
    if k > ds.len() {
        return Err(MelcError::data(format!(
            "cannot split {} points into {k} folds",
            ds.len()
        )));
    }
    let mut pos: Vec<usize> = (0..ds.len()).filter(|&i| ds.label(i) == 1).collect();
    let mut neg: Vec<usize> = (0..ds.len()).filter(|&i| ds.label(i) == -1).collect();
    if pos.is_empty() || neg.is_empty() {
        return Err(MelcError::data("both classes must be nonempty"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(KFOLD_STREAM);
    pos.shuffle(&mut rng);
    neg.shuffle(&mut rng);

    // Remainder points rotate across classes so total test sizes stay
    // balanced even when a class has fewer than k members.
    let mut tests: Vec<Vec<usize>> = vec![Vec::new(); k];
    let mut offset = 0usize;
    for class in [&pos, &neg] {
        let base = class.len() / k;
        let rem = class.len() % k;
        let mut cursor = 0;
        for (f, test) in tests.iter_mut().enumerate() {
            let extra = usize::from((f + k - offset % k) % k < rem);
            test.extend_from_slice(&class[cursor..cursor + base + extra]);
            cursor += base + extra;
        }
        offset += rem;
    }
    let mut folds = Vec::with_capacity(k);
    for mut test in tests {
        test.sort_unstable();
        let train: Vec<usize> = (0..ds.len()).filter(|i| test.binary_search(i).is_err()).collect();
        folds.push((train, test));
    }
    Ok(SplitPlan { folds, seed })
}

/// Replaces each point x by Ax + b. `a` is d x d row-major.
pub fn affine_transform(ds: &Dataset, a: &[f64], b: &[f64]) -> Result<Dataset> {
    let d = ds.dim();
    if a.len() != d * d || b.len() != d {
        return Err(MelcError::data("transform dimension mismatch"));
    }
    let mut points = Vec::with_capacity(ds.len() * d);
    for i in 0..ds.len() {
        let x = ds.point(i);
        for r in 0..d {
            let row = &a[r * d..(r + 1) * d];
            let y: f64 = row.iter().zip(x).map(|(ai, xi)| ai * xi).sum::<f64>() + b[r];
            points.push(y);
        }
    }
    Dataset {
        dim: d,
        points,
        labels: ds.labels.clone(),
        weights: ds.weights.clone(),
    }
    .validate()
}

impl Dataset {
    fn validate(self) -> Result<Dataset> {
        if self.points.iter().any(|x| !x.is_finite()) {
            return Err(MelcError::data("non-finite feature value"));
        }
        Ok(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn ds(text: &str) -> Dataset {
        parse_libsvm(Cursor::new(text), false).unwrap()
    }

    #[test]
    fn libsvm_basic_line() {
        let d = ds("+1 1:0.5 3:2.0\n");
        assert_eq!(d.dim(), 3);
        assert_eq!(d.point(0), &[0.5, 0.0, 2.0]);
        assert_eq!(d.label(0), 1);
    }

    #[test]
    fn libsvm_dimension_is_max_index() {
        let d = ds("-1 2:1\n+1 1:1 4:1\n");
        assert_eq!(d.dim(), 4);
        assert_eq!(d.point(0), &[0.0, 1.0, 0.0, 0.0]);
        assert_eq!(d.point(1), &[1.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn libsvm_rejects_non_increasing_index() {
        let err = parse_libsvm(Cursor::new("+1 3:1 2:1\n"), false).unwrap_err();
        match err {
            MelcError::Parse { line, .. } => assert_eq!(line, 1),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn libsvm_zero_label_needs_flag() {
        assert!(parse_libsvm(Cursor::new("0 1:1\n"), false).is_err());
        let d = parse_libsvm(Cursor::new("0 1:1\n"), true).unwrap();
        assert_eq!(d.label(0), -1);
    }

    #[test]
    fn libsvm_round_trip() {
        let d = ds("+1 1:0.5 3:2\n-1 2:-7.25\n+1 1:1 2:2 3:3\n");
        let mut buf = Vec::new();
        d.write_libsvm(&mut buf).unwrap();
        let d2 = parse_libsvm(Cursor::new(buf), false).unwrap();
        assert_eq!(d, d2);
    }

    #[test]
    fn csv_with_header() {
        let d = parse_csv(
            Cursor::new("x,y,label\n1,2,+1\n"),
            &LabelColumn::Name("label".into()),
        )
        .unwrap();
        assert_eq!(d.dim(), 2);
        assert_eq!(d.point(0), &[1.0, 2.0]);
        assert_eq!(d.label(0), 1);
    }

    #[test]
    fn csv_headerless_by_index() {
        let d = parse_csv(Cursor::new("-1,3.5\n"), &LabelColumn::Index(0)).unwrap();
        assert_eq!(d.dim(), 1);
        assert_eq!(d.point(0), &[3.5]);
        assert_eq!(d.label(0), -1);
    }

    #[test]
    fn csv_ragged_row_rejected() {
        let err = parse_csv(Cursor::new("1,2,1\n3,1\n"), &LabelColumn::Index(2)).unwrap_err();
        assert!(matches!(err, MelcError::Parse { line: 2, .. }));
    }

    #[test]
    fn kfold_exact_proportions() {
        let mut labels = vec![1i8; 60];
        labels.extend(vec![-1i8; 40]);
        let points: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let d = Dataset::new(1, points, labels).unwrap();
        let plan = stratified_kfold(&d, 10, 3).unwrap();
        for (train, test) in &plan.folds {
            assert_eq!(test.len(), 10);
            assert_eq!(train.len(), 90);
            let pos = test.iter().filter(|&&i| d.label(i) == 1).count();
            assert_eq!(pos, 6);
        }
    }

    #[test]
    fn kfold_leave_one_out() {
        let d = Dataset::new(
            1,
            (0..6).map(|i| i as f64).collect(),
            vec![1, 1, 1, -1, -1, -1],
        )
        .unwrap();
        let plan = stratified_kfold(&d, 6, 0).unwrap();
        for (_, test) in &plan.folds {
            assert_eq!(test.len(), 1);
        }
    }

    #[test]
    fn kfold_deterministic() {
        let d = Dataset::new(
            1,
            (0..30).map(|i| i as f64).collect(),
            (0..30).map(|i| if i % 3 == 0 { 1 } else { -1 }).collect(),
        )
        .unwrap();
        assert_eq!(
            stratified_kfold(&d, 5, 42).unwrap(),
            stratified_kfold(&d, 5, 42).unwrap()
        );
        assert_ne!(
            stratified_kfold(&d, 5, 42).unwrap(),
            stratified_kfold(&d, 5, 43).unwrap()
        );
    }

    #[test]
    fn affine_identity_and_swap() {
        let d = Dataset::new(2, vec![1.0, 2.0], vec![1]).unwrap();
        let same = affine_transform(&d, &[1.0, 0.0, 0.0, 1.0], &[0.0, 0.0]).unwrap();
        assert_eq!(same, d);
        let swapped = affine_transform(&d, &[0.0, 1.0, 1.0, 0.0], &[0.0, 0.0]).unwrap();
        assert_eq!(swapped.point(0), &[2.0, 1.0]);
        let scaled = affine_transform(&d, &[2.0, 0.0, 0.0, 2.0], &[0.0, 0.0]).unwrap();
        assert_eq!(scaled.point(0), &[2.0, 4.0]);
    }

    #[test]
    fn split_classes_preserves_order_and_weights() {
        let d = Dataset::with_weights(
            1,
            vec![1.0, 2.0, 3.0, 4.0],
            vec![1, -1, 1, -1],
            vec![1.0, 2.0, 3.0, 4.0],
        )
        .unwrap();
        let (pos, neg) = d.split_classes();
        assert_eq!(pos.points(), &[1.0, 3.0]);
        assert_eq!(pos.weights(), &[1.0, 3.0]);
        assert_eq!(neg.points(), &[2.0, 4.0]);
        assert_eq!(neg.weights(), &[2.0, 4.0]);
    }
}
