//! Sparse classification datasets: the libsvm-style text format, multilabel
//! reduction, raw IDX image files, and the synthetic generators used by the
//! experiments.
//!
//! On disk labels and feature indices are 1-based; in memory both are 0-based.
//!
//! ```text
//! 3 1:0.5 7:2.0      # label 3, features 1 and 7
//! 5,2,9 1:1          # multilabel row, reduced to label 5
//! ```

use std::fs;
use std::io::{self, BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use rand::Rng as _;
use rand_distr::weighted::WeightedIndex;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::SparseVector;
use crate::rng;
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("no data rows")]
    Empty,
    #[error("metadata: {0}")]
    Metadata(String),
    #[error("{0}")]
    Invalid(String),
}

impl DataError {
    fn parse(line: usize, message: impl Into<String>) -> Self {
        DataError::Parse { line, message: message.into() }
    }

    fn io(path: &Path, source: io::Error) -> Self {
        DataError::Io { path: path.to_path_buf(), source }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct Example<T: Scalar> {
    pub x: SparseVector<T>,
    /// 0-based class.
    pub label: usize,
}

/// Labelled sparse rows with a declared class count and feature dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct SparseDataset<T: Scalar> {
    rows: Vec<Example<T>>,
    classes: usize,
    features: usize,
    name: String,
}

impl<T: Scalar> SparseDataset<T> {
    pub fn new(rows: Vec<Example<T>>, classes: usize, features: usize, name: &str) -> Result<Self, DataError> {
        for (i, ex) in rows.iter().enumerate() {
            if ex.label >= classes {
                return Err(DataError::Invalid(format!("row {i}: label {} >= {classes} classes", ex.label + 1)));
            }
            if ex.x.dim_lower_bound() > features {
                return Err(DataError::Invalid(format!(
                    "row {i}: feature {} >= {features} features",
                    ex.x.dim_lower_bound()
                )));
            }
        }
        Ok(SparseDataset { rows, classes, features, name: name.to_string() })
    }

    pub fn rows(&self) -> &[Example<T>] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn features(&self) -> usize {
        self.features
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn labels(&self) -> Vec<usize> {
        self.rows.iter().map(|ex| ex.label).collect()
    }

    /// Widens the declared dimensions; they can only grow.
    pub fn with_dims(mut self, classes: usize, features: usize) -> Result<Self, DataError> {
        if classes < self.classes || features < self.features {
            return Err(DataError::Invalid(format!(
                "cannot shrink {}x{} to {classes}x{features}",
                self.classes, self.features
            )));
        }
        self.classes = classes;
        self.features = features;
        Ok(self)
    }

    /// Rows at the given positions, in that order.
    pub fn subset(&self, idx: &[usize]) -> Self {
        SparseDataset {
            rows: idx.iter().map(|&i| self.rows[i].clone()).collect(),
            classes: self.classes,
            features: self.features,
            name: self.name.clone(),
        }
    }

    pub fn max_nnz(&self) -> usize {
        self.rows.iter().map(|ex| ex.x.nnz()).max().unwrap_or(0)
    }
}

/// Optional sidecar `<data file>.meta.json` that fixes `K` and `D`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Metadata {
    #[serde(rename = "K")]
    pub classes: usize,
    #[serde(rename = "D")]
    pub features: usize,
}

pub fn metadata_path(data: &Path) -> PathBuf {
    let mut s = data.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

pub fn read_metadata(data: &Path) -> Result<Option<Metadata>, DataError> {
    let path = metadata_path(data);
    match fs::read_to_string(&path) {
        Ok(text) => {
            serde_json::from_str(&text).map(Some).map_err(|e| DataError::Metadata(format!("{}: {e}", path.display())))
        }
        Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(DataError::io(&path, e)),
    }
}

// ---------------------------------------------------------------------------
// Text format
// ---------------------------------------------------------------------------

fn strip_comment(line: &str) -> &str {
    line.split_once('#').map_or(line, |(data, _)| data)
}

fn parse_label(tok: &str, base: u64, line: usize) -> Result<usize, DataError> {
    let v: u64 = tok.parse().map_err(|_| DataError::parse(line, format!("bad label {tok:?}")))?;
    if v < base {
        return Err(DataError::parse(line, format!("label {v} below {base}")));
    }
    Ok((v - base) as usize)
}

fn parse_features<'a, T: Scalar>(
    tokens: impl Iterator<Item = &'a str>,
    base: u64,
    line: usize,
) -> Result<SparseVector<T>, DataError> {
    let mut indices: Vec<u32> = Vec::new();
    let mut values = Vec::new();
    let mut last: Option<u64> = None;
    for tok in tokens {
        let (i, v) =
            tok.split_once(':').ok_or_else(|| DataError::parse(line, format!("expected index:value, got {tok:?}")))?;
        let i: u64 = i.parse().map_err(|_| DataError::parse(line, format!("bad feature index {i:?}")))?;
        let v: f64 = v.parse().map_err(|_| DataError::parse(line, format!("bad feature value {v:?}")))?;
        if i < base {
            return Err(DataError::parse(line, format!("feature index {i} below {base}")));
        }
        match last {
            Some(prev) if prev == i => return Err(DataError::parse(line, format!("duplicate feature index {i}"))),
            Some(prev) if prev > i => return Err(DataError::parse(line, format!("feature index {i} after {prev}"))),
            _ => {}
        }
        last = Some(i);
        if !v.is_finite() {
            return Err(DataError::parse(line, format!("non-finite value at feature {i}")));
        }
        let idx = i - base;
        if idx >= u64::from(u32::MAX) {
            return Err(DataError::parse(line, format!("feature index {i} too large")));
        }
        // explicit zeros carry no information
        if v != 0.0 {
            indices.push(idx as u32);
            values.push(T::of(v));
        }
    }
    SparseVector::new(indices, values).map_err(|e| DataError::parse(line, e.to_string()))
}

fn finish<T: Scalar>(rows: Vec<Example<T>>, name: &str, meta: Option<Metadata>) -> Result<SparseDataset<T>, DataError> {
    if rows.is_empty() {
        return Err(DataError::Empty);
    }
    let classes = rows.iter().map(|ex| ex.label + 1).max().unwrap_or(0);
    let features = rows.iter().map(|ex| ex.x.dim_lower_bound()).max().unwrap_or(0);
    let (classes, features) = match meta {
        Some(m) => {
            if m.classes < classes || m.features < features {
                return Err(DataError::Metadata(format!(
                    "declares K={} D={} but data needs K>={classes} D>={features}",
                    m.classes, m.features
                )));
            }
            (m.classes, m.features)
        }
        None => (classes, features),
    };
    SparseDataset::new(rows, classes, features, name)
}

/// Parses single-label rows `label idx:val ...` from a reader.
pub fn parse_sparse<T: Scalar, R: BufRead>(reader: R, name: &str) -> Result<SparseDataset<T>, DataError> {
    let mut rows = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| DataError::parse(lineno, e.to_string()))?;
        let mut tokens = strip_comment(&line).split_whitespace();
        let Some(label) = tokens.next() else { continue };
        let label = parse_label(label, 1, lineno)?;
        let x = parse_features(tokens, 1, lineno)?;
        rows.push(Example { x, label });
    }
    finish(rows, name, None)
}

/// Loads a libsvm-style file, honouring a `.meta.json` sidecar when present.
pub fn load_sparse<T: Scalar>(path: &Path) -> Result<SparseDataset<T>, DataError> {
    let file = fs::File::open(path).map_err(|e| DataError::io(path, e))?;
    let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let data = parse_sparse(BufReader::new(file), &name)?;
    match read_metadata(path)? {
        Some(meta) => finish(data.rows, &name, Some(meta)),
        None => Ok(data),
    }
}

/// Loads a train/test pair and gives both the same `K` and `D`, taken from
/// sidecars when present and otherwise inferred from both files jointly.
pub fn load_train_test<T: Scalar>(
    train: &Path,
    test: &Path,
) -> Result<(SparseDataset<T>, SparseDataset<T>), DataError> {
    let tr = load_sparse::<T>(train)?;
    let te = load_sparse::<T>(test)?;
    let classes = tr.classes.max(te.classes);
    let features = tr.features.max(te.features);
    Ok((tr.with_dims(classes, features)?, te.with_dims(classes, features)?))
}

pub fn write_sparse<T: Scalar, W: Write>(data: &SparseDataset<T>, mut w: W) -> io::Result<()> {
    let mut line = String::new();
    for ex in &data.rows {
        line.clear();
        line.push_str(&(ex.label + 1).to_string());
        for (j, v) in ex.x.iter() {
            line.push(' ');
            line.push_str(&(j + 1).to_string());
            line.push(':');
            line.push_str(&v.to_string());
        }
        line.push('\n');
        w.write_all(line.as_bytes())?;
    }
    Ok(())
}

pub fn write_metadata(data_path: &Path, meta: Metadata) -> Result<(), DataError> {
    let path = metadata_path(data_path);
    let text = serde_json::to_string(&meta).expect("metadata serializes");
    fs::write(&path, text).map_err(|e| DataError::io(&path, e))
}

/// Index bases of a multilabel file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReduceOptions {
    pub label_base: u64,
    pub feature_base: u64,
}

impl Default for ReduceOptions {
    fn default() -> Self {
        ReduceOptions { label_base: 1, feature_base: 1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReductionReport {
    pub rows_read: usize,
    /// Rows without any label.
    pub dropped: usize,
}

/// Reduces `l1,l2,... idx:val ...` rows to their first listed label.
///
/// An optional first line of three bare integers (`rows features labels`) is
/// read as a header and supplies `D` and `K`.
pub fn parse_multilabel<T: Scalar, R: BufRead>(
    reader: R,
    name: &str,
    opts: ReduceOptions,
) -> Result<(SparseDataset<T>, ReductionReport), DataError> {
    let mut rows = Vec::new();
    let mut report = ReductionReport { rows_read: 0, dropped: 0 };
    let mut header: Option<Metadata> = None;
    let mut first = true;
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| DataError::parse(lineno, e.to_string()))?;
        let body = strip_comment(&line);
        if body.trim().is_empty() {
            continue;
        }
        if std::mem::take(&mut first) {
            let toks: Vec<&str> = body.split_whitespace().collect();
            if toks.len() == 3 && toks.iter().all(|t| t.bytes().all(|b| b.is_ascii_digit())) {
                let num = |t: &str| t.parse::<usize>().map_err(|_| DataError::parse(lineno, "bad header"));
                header = Some(Metadata { features: num(toks[1])?, classes: num(toks[2])? });
                continue;
            }
        }
        report.rows_read += 1;
        let starts_with_labels = !body.starts_with(char::is_whitespace);
        let mut tokens = body.split_whitespace().peekable();
        let label_tok = match tokens.peek() {
            Some(t) if starts_with_labels && !t.contains(':') => tokens.next(),
            _ => None,
        };
        let labels: Vec<usize> = match label_tok {
            None => Vec::new(),
            Some(t) => t
                .split(',')
                .map(|l| {
                    if l.is_empty() {
                        Err(DataError::parse(lineno, format!("malformed label list {t:?}")))
                    } else {
                        parse_label(l, opts.label_base, lineno)
                    }
                })
                .collect::<Result<_, _>>()?,
        };
        let x = parse_features(tokens, opts.feature_base, lineno)?;
        match labels.first() {
            Some(&label) => rows.push(Example { x, label }),
            None => report.dropped += 1,
        }
    }
    Ok((finish(rows, name, header)?, report))
}

pub fn reduce_multilabel<T: Scalar>(path: &Path) -> Result<(SparseDataset<T>, ReductionReport), DataError> {
    reduce_multilabel_with(path, ReduceOptions::default())
}

pub fn reduce_multilabel_with<T: Scalar>(
    path: &Path,
    opts: ReduceOptions,
) -> Result<(SparseDataset<T>, ReductionReport), DataError> {
    let file = fs::File::open(path).map_err(|e| DataError::io(path, e))?;
    let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    parse_multilabel(BufReader::new(file), &name, opts)
}

// ---------------------------------------------------------------------------
// IDX (raw MNIST) files
// ---------------------------------------------------------------------------

fn read_idx(path: &Path, expected_magic: u32) -> Result<(Vec<usize>, Vec<u8>), DataError> {
    let mut bytes = Vec::new();
    fs::File::open(path).and_then(|mut f| f.read_to_end(&mut bytes)).map_err(|e| DataError::io(path, e))?;
    let bad = |m: &str| DataError::Invalid(format!("{}: {m}", path.display()));
    if bytes.len() < 4 {
        return Err(bad("truncated header"));
    }
    let magic = u32::from_be_bytes(bytes[0..4].try_into().expect("4 bytes"));
    if magic != expected_magic {
        return Err(bad(&format!("magic {magic:#x}, expected {expected_magic:#x}")));
    }
    let ndim = (magic & 0xff) as usize;
    let header = 4 + 4 * ndim;
    if bytes.len() < header {
        return Err(bad("truncated header"));
    }
    let dims: Vec<usize> = (0..ndim)
        .map(|i| u32::from_be_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().expect("4 bytes")) as usize)
        .collect();
    let total: usize = dims.iter().product();
    if bytes.len() != header + total {
        return Err(bad("payload size does not match dimensions"));
    }
    Ok((dims, bytes.split_off(header)))
}

/// Reads an IDX image/label file pair (unsigned bytes) into a sparse dataset
/// with pixel values scaled to `[0, 1]`. Labels must be `0..=9`.
pub fn load_idx<T: Scalar>(images: &Path, labels: &Path, name: &str) -> Result<SparseDataset<T>, DataError> {
    let (idims, pixels) = read_idx(images, 0x0000_0803)?;
    let (ldims, labs) = read_idx(labels, 0x0000_0801)?;
    if idims[0] != ldims[0] {
        return Err(DataError::Invalid(format!("{} images but {} labels", idims[0], ldims[0])));
    }
    let features = idims[1] * idims[2];
    let scale = T::of(1.0 / 255.0);
    let mut rows = Vec::with_capacity(idims[0]);
    for (img, &label) in pixels.chunks_exact(features).zip(&labs) {
        if label > 9 {
            return Err(DataError::Invalid(format!("label {label} outside 0..=9")));
        }
        let (indices, values) = img
            .iter()
            .enumerate()
            .filter(|(_, &p)| p != 0)
            .map(|(j, &p)| (j as u32, T::of(f64::from(p)) * scale))
            .unzip();
        let x = SparseVector::new(indices, values).map_err(|e| DataError::Invalid(e.to_string()))?;
        rows.push(Example { x, label: usize::from(label) });
    }
    SparseDataset::new(rows, 10, features, name)
}

// ---------------------------------------------------------------------------
// Generators
// ---------------------------------------------------------------------------

/// Two-dimensional Gaussian clusters, one per class: five classes with means on
/// a circle of radius 3, unit covariance, and equal class sizes (the first
/// `n % 5` classes get one extra point). Row `i` has label `i % 5`.
pub fn gen_toy_5class<T: Scalar>(n: usize, seed: u64) -> Result<SparseDataset<T>, DataError> {
    const CLASSES: usize = 5;
    const RADIUS: f64 = 3.0;
    if n < CLASSES {
        return Err(DataError::Invalid(format!("need at least {CLASSES} points, got {n}")));
    }
    let mut rng = rng::substream(seed, rng::DATA);
    let rows = (0..n)
        .map(|i| {
            let label = i % CLASSES;
            let angle = 2.0 * std::f64::consts::PI * label as f64 / CLASSES as f64;
            let e0: f64 = StandardNormal.sample(&mut rng);
            let e1: f64 = StandardNormal.sample(&mut rng);
            let dense = [T::of(RADIUS * angle.cos() + e0), T::of(RADIUS * angle.sin() + e1)];
            Example { x: SparseVector::from_dense(&dense).expect("finite values"), label }
        })
        .collect();
    SparseDataset::new(rows, CLASSES, 2, "toy5")
}

/// Labels drawn i.i.d. from `p(k) ~ u_k^2` with `u_k ~ Uniform[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoricalSample {
    /// 0-based labels.
    pub labels: Vec<usize>,
    pub probs: Vec<f64>,
}

pub fn gen_powerlaw_categorical(classes: usize, n: usize, seed: u64) -> Result<CategoricalSample, DataError> {
    if classes < 2 || n == 0 {
        return Err(DataError::Invalid(format!("need K >= 2 and N >= 1, got K={classes} N={n}")));
    }
    let mut rng = rng::substream(seed, rng::DATA);
    let weights: Vec<f64> = (0..classes).map(|_| rng.random::<f64>().powi(2)).collect();
    let total: f64 = weights.iter().sum();
    let probs: Vec<f64> = weights.iter().map(|w| w / total).collect();
    let dist = WeightedIndex::new(&weights).map_err(|e| DataError::Invalid(e.to_string()))?;
    let labels = (0..n).map(|_| dist.sample(&mut rng)).collect();
    Ok(CategoricalSample { labels, probs })
}

/// Sparse synthetic classification data for large `K` and `D`.
///
/// Class frequencies follow a Zipf law with exponent 1. Each class owns a
/// random prototype set of `prototype` features; an instance activates
/// `nnz / 2` of its class prototype plus `nnz - nnz / 2` uniformly random
/// features, all with value 1.
pub fn gen_sparse_synthetic<T: Scalar>(
    classes: usize,
    features: usize,
    n: usize,
    nnz: usize,
    seed: u64,
) -> Result<SparseDataset<T>, DataError> {
    let prototype = 2 * nnz;
    if classes < 2 || n == 0 || nnz == 0 || features < prototype.max(nnz) {
        return Err(DataError::Invalid("need K >= 2, N >= 1, nnz >= 1 and D >= 2 nnz".into()));
    }
    let mut rng = rng::substream(seed, rng::DATA);
    let protos: Vec<Vec<u32>> = (0..classes)
        .map(|_| rand::seq::index::sample(&mut rng, features, prototype).into_iter().map(|j| j as u32).collect())
        .collect();
    let zipf: Vec<f64> = (1..=classes).map(|r| 1.0 / r as f64).collect();
    let dist = WeightedIndex::new(&zipf).map_err(|e| DataError::Invalid(e.to_string()))?;
    let mut rows = Vec::with_capacity(n);
    let mut idx: Vec<u32> = Vec::with_capacity(nnz);
    for _ in 0..n {
        let label = dist.sample(&mut rng);
        idx.clear();
        for p in rand::seq::index::sample(&mut rng, prototype, nnz / 2) {
            idx.push(protos[label][p]);
        }
        while idx.len() < nnz {
            let j = rng.random_range(0..features) as u32;
            if !idx.contains(&j) {
                idx.push(j);
            }
        }
        idx.sort_unstable();
        let x = SparseVector::new(idx.clone(), vec![T::one(); nnz]).expect("unique sorted indices");
        rows.push(Example { x, label });
    }
    SparseDataset::new(rows, classes, features, "synthetic-sparse")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<SparseDataset<f64>, DataError> {
        parse_sparse(text.as_bytes(), "t")
    }

    #[test]
    fn parses_basic_rows() {
        let d = parse("3 1:0.5 7:2.0\n").unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d.rows()[0].label, 2);
        assert_eq!(d.rows()[0].x.nnz(), 2);
        assert_eq!(d.rows()[0].x.indices(), &[0, 6]);
        assert_eq!((d.classes(), d.features()), (3, 7));

        let d = parse("# header comment\n\n1 2:1 # trailing\n2\n").unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.rows()[1].x.nnz(), 0);
        let d = parse("1 2:0 3:1\n").unwrap();
        assert_eq!(d.rows()[0].x.indices(), &[2]);
    }

    #[test]
    fn rejects_malformed_rows_with_line_numbers() {
        let line_of = |text: &str| match parse(text) {
            Err(DataError::Parse { line, .. }) => line,
            other => panic!("expected parse error, got {other:?}"),
        };
        assert_eq!(line_of("1 2:1 2:1\n"), 1);
        assert_eq!(line_of("1 1:1\n1 3:1 2:1\n"), 2);
        assert_eq!(line_of("1 1:1\n\n0 1:1\n"), 3);
        assert_eq!(line_of("x 1:1\n"), 1);
        assert_eq!(line_of("1 1\n"), 1);
        assert_eq!(line_of("1 0:1\n"), 1);
        assert_eq!(line_of("1 1:nan\n"), 1);
        assert_eq!(line_of("1 a:1\n"), 1);
        assert_eq!(line_of("-1 1:1\n"), 1);
        assert!(matches!(parse(""), Err(DataError::Empty)));
        assert!(matches!(parse("# only\n\n"), Err(DataError::Empty)));
    }

    #[test]
    fn multilabel_reduction() {
        let (d, r) = parse_multilabel::<f64, _>("5,2,9 1:1\n".as_bytes(), "m", ReduceOptions::default()).unwrap();
        assert_eq!(d.rows()[0].label, 4);
        assert_eq!(r, ReductionReport { rows_read: 1, dropped: 0 });

        let (d, r) = parse_multilabel::<f64, _>(" 1:1\n2 2:1\n".as_bytes(), "m", ReduceOptions::default()).unwrap();
        assert_eq!(r.dropped, 1);
        assert_eq!(d.len(), 1);

        let err = parse_multilabel::<f64, _>("1,,2 1:1\n".as_bytes(), "m", ReduceOptions::default());
        assert!(matches!(err, Err(DataError::Parse { line: 1, .. })));

        // header line, 0-based labels and features
        let text = "2 10 6\n0,3 0:1 9:2\n5 1:1\n";
        let opts = ReduceOptions { label_base: 0, feature_base: 0 };
        let (d, _) = parse_multilabel::<f64, _>(text.as_bytes(), "m", opts).unwrap();
        assert_eq!((d.classes(), d.features()), (6, 10));
        assert_eq!(d.labels(), vec![0, 5]);
        assert_eq!(d.rows()[0].x.indices(), &[0, 9]);
    }

    #[test]
    fn multilabel_is_identity_on_single_label_files() {
        let text = "3 1:0.5 7:2\n1 2:1\n2 4:-3.5\n";
        let a = parse(text).unwrap();
        let (b, r) = parse_multilabel::<f64, _>(text.as_bytes(), "t", ReduceOptions::default()).unwrap();
        assert_eq!(a, b);
        assert_eq!(r.dropped, 0);
    }

    #[test]
    fn file_round_trip_with_metadata() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.svm");
        let d = parse("3 1:0.5 7:2.0\n1 2:1\n").unwrap();
        write_sparse(&d, fs::File::create(&path).unwrap()).unwrap();
        let back = load_sparse::<f64>(&path).unwrap();
        assert_eq!(back.rows(), d.rows());

        write_metadata(&path, Metadata { classes: 5, features: 20 }).unwrap();
        let meta = load_sparse::<f64>(&path).unwrap();
        assert_eq!((meta.classes(), meta.features()), (5, 20));

        write_metadata(&path, Metadata { classes: 2, features: 20 }).unwrap();
        assert!(matches!(load_sparse::<f64>(&path), Err(DataError::Metadata(_))));
        assert!(matches!(load_sparse::<f64>(&dir.path().join("missing")), Err(DataError::Io { .. })));
    }

    #[test]
    fn train_test_share_dimensions() {
        let dir = tempfile::tempdir().unwrap();
        let (tr, te) = (dir.path().join("tr"), dir.path().join("te"));
        fs::write(&tr, "1 1:1\n2 5:1\n").unwrap();
        fs::write(&te, "4 2:1\n").unwrap();
        let (a, b) = load_train_test::<f64>(&tr, &te).unwrap();
        assert_eq!((a.classes(), a.features()), (4, 5));
        assert_eq!((b.classes(), b.features()), (4, 5));
    }

    #[test]
    fn toy_generator() {
        let d = gen_toy_5class::<f64>(200, 1).unwrap();
        assert_eq!((d.classes(), d.features(), d.len()), (5, 2, 200));
        for k in 0..5 {
            assert_eq!(d.labels().iter().filter(|&&l| l == k).count(), 40);
        }
        assert_eq!(d, gen_toy_5class::<f64>(200, 1).unwrap());
        assert_ne!(d, gen_toy_5class::<f64>(200, 2).unwrap());
        assert!(gen_toy_5class::<f64>(4, 1).is_err());
    }

    #[test]
    fn powerlaw_generator() {
        let s = gen_powerlaw_categorical(50, 1000, 9).unwrap();
        assert!((s.probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(s.labels.len(), 1000);
        assert!(s.labels.iter().all(|&l| l < 50));
        assert_eq!(s, gen_powerlaw_categorical(50, 1000, 9).unwrap());
        assert!(gen_powerlaw_categorical(1, 10, 0).is_err());
    }

    #[test]
    fn sparse_generator() {
        let d = gen_sparse_synthetic::<f32>(30, 500, 200, 8, 4).unwrap();
        assert_eq!(d.len(), 200);
        assert!(d.rows().iter().all(|ex| ex.x.nnz() == 8));
        assert_eq!(d.max_nnz(), 8);
        assert_eq!(d, gen_sparse_synthetic::<f32>(30, 500, 200, 8, 4).unwrap());
    }

    #[test]
    fn idx_reader() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = (dir.path().join("img"), dir.path().join("lab"));
        let mut img = vec![0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0, 2];
        img.extend([0, 255, 0, 51, 0, 0, 0, 0]);
        fs::write(&ip, &img).unwrap();
        fs::write(&lp, [0, 0, 8, 1, 0, 0, 0, 2, 7, 0]).unwrap();
        let d = load_idx::<f64>(&ip, &lp, "tiny").unwrap();
        assert_eq!((d.len(), d.classes(), d.features()), (2, 10, 4));
        assert_eq!(d.rows()[0].x.indices(), &[1, 3]);
        assert_eq!(d.rows()[0].x.values(), &[1.0, 0.2]);
        assert_eq!(d.rows()[1].x.nnz(), 0);
        assert_eq!(d.labels(), vec![7, 0]);

        fs::write(&lp, [0, 0, 8, 1, 0, 0, 0, 3, 7, 0, 1]).unwrap();
        assert!(load_idx::<f64>(&ip, &lp, "tiny").is_err());
    }
}
