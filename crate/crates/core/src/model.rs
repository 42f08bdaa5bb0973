//! Core domain types: hyperparameters, the column-stochastic topic matrix,
//! output regression/classification weights, and the model file format.

use std::cell::Cell;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use ndarray::{Array2, ArrayView1, ArrayView2, ShapeBuilder};
use rand::Rng;
use rand_distr::{Distribution, Gamma};

use crate::error::{Error, Result};

/// Tolerance on column sums accepted by [`TopicMatrix`] constructors.
pub const COLUMN_SUM_TOL: f64 = 1e-9;
/// Entries below this are rejected rather than clamped.
pub const MIN_TOPIC_ENTRY: f64 = 1e-300;
/// Column-sum deviation tolerated (and repaired) when loading a model file.
pub const LOAD_COLUMN_SUM_TOL: f64 = 1e-6;

const MAGIC: &str = "BPSLDA";
const FORMAT_VERSION: &str = "v1";

/// Rescales a non-negative vector so that it sums to one.
pub fn normalize_to_simplex(v: &[f64]) -> Result<Vec<f64>> {
    let mut out = v.to_vec();
    normalize_in_place(&mut out)?;
    Ok(out)
}

pub(crate) fn normalize_in_place(v: &mut [f64]) -> Result<()> {
    let mut total = 0.0;
    for (index, &value) in v.iter().enumerate() {
        if value < 0.0 {
            return Err(Error::NegativeEntry { index, value });
        }
        if !value.is_finite() {
            return Err(Error::NonFinite(format!("entry {index} is {value}")));
        }
        total += value;
    }
    if total == 0.0 {
        return Err(Error::AllZero);
    }
    v.iter_mut().for_each(|x| *x /= total);
    Ok(())
}

/// Symmetric Dirichlet draw via normalized Gamma variates. If every variate
/// underflows (tiny concentration), all mass goes to one uniformly chosen entry.
pub fn sample_dirichlet<R: Rng + ?Sized>(rng: &mut R, concentration: f64, n: usize) -> Vec<f64> {
    let gamma = Gamma::new(concentration, 1.0).expect("concentration must be positive and finite");
    let draws: Vec<f64> = (0..n).map(|_| gamma.sample(rng)).collect();
    let total: f64 = draws.iter().sum();
    if total > 0.0 {
        draws.into_iter().map(|g| g / total).collect()
    } else {
        let mut out = vec![0.0; n];
        out[rng.random_range(0..n)] = 1.0;
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Task {
    Regression { output_dim: usize },
    Classification { num_classes: usize },
    /// BP-LDA: no response variable and no output layer.
    Unsupervised,
}

impl Task {
    /// Number of rows of `U` (zero for unsupervised models).
    pub fn num_outputs(&self) -> usize {
        match *self {
            Task::Regression { output_dim } => output_dim,
            Task::Classification { num_classes } => num_classes,
            Task::Unsupervised => 0,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Task::Regression { .. } => "regression",
            Task::Classification { .. } => "classification",
            Task::Unsupervised => "unsup",
        }
    }

    pub fn is_supervised(&self) -> bool {
        !matches!(self, Task::Unsupervised)
    }

    pub fn from_name(name: &str, num_outputs: usize) -> Result<Task> {
        match name {
            "regression" => Ok(Task::Regression { output_dim: num_outputs }),
            "classification" => Ok(Task::Classification { num_classes: num_outputs }),
            "unsup" | "unsupervised" => Ok(Task::Unsupervised),
            other => Err(Error::Invalid(format!("unknown task '{other}'"))),
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Model hyperparameters. The Dirichlet prior on topic proportions is
/// symmetric: `dirichlet_alpha` is broadcast to all `num_topics` components.
#[derive(Debug, Clone, PartialEq)]
pub struct Hyperparams {
    pub num_topics: usize,
    pub dirichlet_alpha: f64,
    pub dirichlet_beta: f64,
    pub gamma: f64,
    pub unroll_depth: usize,
    pub task: Task,
    convex_regime: bool,
}

impl Hyperparams {
    pub fn new(
        num_topics: usize,
        dirichlet_alpha: f64,
        dirichlet_beta: f64,
        gamma: f64,
        unroll_depth: usize,
        task: Task,
    ) -> Result<Self> {
        if num_topics == 0 {
            return Err(Error::Invalid("num_topics must be at least 1".into()));
        }
        for (name, value) in [
            ("dirichlet_alpha", dirichlet_alpha),
            ("dirichlet_beta", dirichlet_beta),
            ("gamma", gamma),
        ] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::Invalid(format!("{name} must be positive and finite, got {value}")));
            }
        }
        if task.is_supervised() && task.num_outputs() == 0 {
            return Err(Error::Invalid("a supervised task needs at least one output".into()));
        }
        Ok(Hyperparams {
            num_topics,
            dirichlet_alpha,
            dirichlet_beta,
            gamma,
            unroll_depth,
            task,
            convex_regime: dirichlet_alpha >= 1.0,
        })
    }

    /// Whether the MAP inference objective is convex (alpha >= 1).
    pub fn convex_regime(&self) -> bool {
        self.convex_regime
    }

    pub fn with_task(&self, task: Task) -> Result<Self> {
        Hyperparams::new(
            self.num_topics,
            self.dirichlet_alpha,
            self.dirichlet_beta,
            self.gamma,
            self.unroll_depth,
            task,
        )
    }
}

/// Read access to a `V x K` word-topic matrix.
///
/// Inference and back propagation are generic over this trait so that tests
/// can instrument entry access and finite-difference oracles can run the
/// forward pass on perturbed (no longer column-stochastic) matrices.
pub trait TopicColumns {
    fn vocab_size(&self) -> usize;
    fn num_topics(&self) -> usize;
    fn entry(&self, v: usize, j: usize) -> f64;
}

/// `V x K` left-stochastic matrix: every column is a distribution over words.
/// Stored column-major so that per-topic updates touch contiguous memory.
#[derive(Debug, Clone, PartialEq)]
pub struct TopicMatrix {
    entries: Array2<f64>,
}

impl TopicMatrix {
    /// Validates positivity and column sums; the array may be in any layout.
    pub fn new(entries: Array2<f64>) -> Result<Self> {
        let (v, k) = entries.dim();
        if v == 0 || k == 0 {
            return Err(Error::Invalid(format!("topic matrix must be non-empty, got {v}x{k}")));
        }
        let mut fortran = Array2::zeros((v, k).f());
        fortran.assign(&entries);
        check_columns(fortran.view(), COLUMN_SUM_TOL)?;
        Ok(TopicMatrix { entries: fortran })
    }

    pub fn from_columns(columns: &[Vec<f64>]) -> Result<Self> {
        let k = columns.len();
        let v = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != v) {
            return Err(Error::DimensionMismatch("columns have different lengths".into()));
        }
        let flat: Vec<f64> = columns.iter().flatten().copied().collect();
        let entries = Array2::from_shape_vec((v, k).f(), flat)
            .map_err(|e| Error::DimensionMismatch(e.to_string()))?;
        TopicMatrix::new(entries)
    }

    /// Every column uniform over the vocabulary.
    pub fn uniform(vocab_size: usize, num_topics: usize) -> Result<Self> {
        TopicMatrix::new(Array2::from_elem((vocab_size, num_topics), 1.0 / vocab_size as f64))
    }

    /// Columns drawn independently from a symmetric Dirichlet. Entries that
    /// fall below [`MIN_TOPIC_ENTRY`] are raised to it before renormalizing.
    pub fn sample<R: Rng + ?Sized>(rng: &mut R, vocab_size: usize, num_topics: usize, concentration: f64) -> Result<Self> {
        if !(concentration > 0.0 && concentration.is_finite()) {
            return Err(Error::Invalid(format!("Dirichlet concentration must be positive, got {concentration}")));
        }
        let columns: Vec<Vec<f64>> = (0..num_topics)
            .map(|_| {
                let mut col: Vec<f64> = sample_dirichlet(rng, concentration, vocab_size)
                    .into_iter()
                    .map(|p| p.max(MIN_TOPIC_ENTRY))
                    .collect();
                normalize_in_place(&mut col).map(|_| col)
            })
            .collect::<Result<_>>()?;
        TopicMatrix::from_columns(&columns)
    }

    /// Column-major storage; callers must keep every column on the simplex.
    pub(crate) fn entries_mut(&mut self) -> &mut Array2<f64> {
        &mut self.entries
    }

    pub fn column(&self, j: usize) -> ArrayView1<'_, f64> {
        self.entries.column(j)
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.entries.view()
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.entries
    }
}

impl TopicColumns for TopicMatrix {
    fn vocab_size(&self) -> usize {
        self.entries.nrows()
    }
    fn num_topics(&self) -> usize {
        self.entries.ncols()
    }
    #[inline]
    fn entry(&self, v: usize, j: usize) -> f64 {
        self.entries[[v, j]]
    }
}

fn check_columns(entries: ArrayView2<'_, f64>, tol: f64) -> Result<()> {
    for (j, col) in entries.columns().into_iter().enumerate() {
        let mut sum = 0.0;
        for (v, &x) in col.iter().enumerate() {
            if !x.is_finite() || x < MIN_TOPIC_ENTRY {
                return Err(Error::Invalid(format!("topic entry ({v}, {j}) = {x} is not strictly positive")));
            }
            sum += x;
        }
        if (sum - 1.0).abs() > tol {
            return Err(Error::Invalid(format!("topic column {j} sums to {sum}")));
        }
    }
    Ok(())
}

/// Unchecked view of a `V x K` matrix, used where the simplex constraint is
/// deliberately broken (finite-difference perturbations).
#[derive(Debug, Clone, Copy)]
pub struct RawTopics<'a>(pub ArrayView2<'a, f64>);

impl TopicColumns for RawTopics<'_> {
    fn vocab_size(&self) -> usize {
        self.0.nrows()
    }
    fn num_topics(&self) -> usize {
        self.0.ncols()
    }
    #[inline]
    fn entry(&self, v: usize, j: usize) -> f64 {
        self.0[[v, j]]
    }
}

/// Wraps a topic matrix and counts every entry read.
#[derive(Debug)]
pub struct CountingTopics<'a, P: TopicColumns + ?Sized> {
    inner: &'a P,
    reads: Cell<u64>,
}

impl<'a, P: TopicColumns + ?Sized> CountingTopics<'a, P> {
    pub fn new(inner: &'a P) -> Self {
        CountingTopics { inner, reads: Cell::new(0) }
    }

    pub fn reads(&self) -> u64 {
        self.reads.get()
    }

    pub fn reset(&self) {
        self.reads.set(0);
    }
}

impl<P: TopicColumns + ?Sized> TopicColumns for CountingTopics<'_, P> {
    fn vocab_size(&self) -> usize {
        self.inner.vocab_size()
    }
    fn num_topics(&self) -> usize {
        self.inner.num_topics()
    }
    fn entry(&self, v: usize, j: usize) -> f64 {
        self.reads.set(self.reads.get() + 1);
        self.inner.entry(v, j)
    }
}

/// `C x K` output weights; `p_o = U theta`.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputParams {
    pub weights: Array2<f64>,
}

impl OutputParams {
    pub fn new(weights: Array2<f64>) -> Result<Self> {
        if let Some(bad) = weights.iter().find(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!("output weight {bad}")));
        }
        Ok(OutputParams { weights })
    }

    pub fn zeros(num_outputs: usize, num_topics: usize) -> Self {
        OutputParams { weights: Array2::zeros((num_outputs, num_topics)) }
    }

    pub fn num_outputs(&self) -> usize {
        self.weights.nrows()
    }

    pub fn num_topics(&self) -> usize {
        self.weights.ncols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub hyper: Hyperparams,
    pub phi: TopicMatrix,
    /// Absent for unsupervised (BP-LDA) models.
    pub u: Option<OutputParams>,
}

impl Model {
    pub fn new(hyper: Hyperparams, phi: TopicMatrix, u: Option<OutputParams>) -> Result<Self> {
        let k = hyper.num_topics;
        if phi.num_topics() != k {
            return Err(Error::DimensionMismatch(format!(
                "topic matrix has {} topics, hyperparameters say {k}",
                phi.num_topics()
            )));
        }
        match (&u, hyper.task.is_supervised()) {
            (Some(u), true) => {
                if u.num_topics() != k || u.num_outputs() != hyper.task.num_outputs() {
                    return Err(Error::DimensionMismatch(format!(
                        "U is {}x{}, expected {}x{k}",
                        u.num_outputs(),
                        u.num_topics(),
                        hyper.task.num_outputs()
                    )));
                }
            }
            (None, false) => {}
            (Some(_), false) => {
                return Err(Error::DimensionMismatch("unsupervised model cannot carry U".into()))
            }
            (None, true) => return Err(Error::DimensionMismatch("supervised model needs U".into())),
        }
        Ok(Model { hyper, phi, u })
    }

    pub fn vocab_size(&self) -> usize {
        self.phi.vocab_size()
    }
}

/// Writes a model in the `BPSLDA v1` text format.
pub fn write_model<W: Write>(model: &Model, mut out: W) -> Result<()> {
    let h = &model.hyper;
    writeln!(out, "{MAGIC} {FORMAT_VERSION}")?;
    writeln!(
        out,
        "{} {} {} {} {} {} {} {}",
        model.phi.vocab_size(),
        h.num_topics,
        h.task.num_outputs(),
        h.task.name(),
        h.unroll_depth,
        fmt_real(h.dirichlet_alpha),
        fmt_real(h.dirichlet_beta),
        fmt_real(h.gamma),
    )?;
    let phi = model.phi.view();
    for row in phi.rows() {
        write_row(&mut out, row)?;
    }
    if let Some(u) = &model.u {
        for row in u.weights.rows() {
            write_row(&mut out, row)?;
        }
    }
    out.flush()?;
    Ok(())
}

fn write_row<W: Write>(out: &mut W, row: ArrayView1<'_, f64>) -> Result<()> {
    let line: Vec<String> = row.iter().map(|&x| fmt_real(x)).collect();
    writeln!(out, "{}", line.join(" "))?;
    Ok(())
}

/// 17 significant digits: enough for an exact f64 round trip.
pub(crate) fn fmt_real(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn save_model(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    let file = File::create(path)?;
    write_model(model, BufWriter::new(file))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Model> {
    let file = File::open(path)?;
    read_model(BufReader::new(file))
}

pub fn read_model<R: BufRead>(input: R) -> Result<Model> {
    let mut lines = input.lines();
    let mut next_line = |what: &str| -> Result<String> {
        lines
            .next()
            .transpose()?
            .ok_or_else(|| Error::Format(format!("unexpected end of file while reading {what}")))
    };

    let magic = next_line("header")?;
    let mut parts = magic.split_whitespace();
    match (parts.next(), parts.next(), parts.next()) {
        (Some(MAGIC), Some(FORMAT_VERSION), None) => {}
        (Some(MAGIC), Some(version), None) => {
            return Err(Error::Format(format!("unsupported format version '{version}'")))
        }
        _ => return Err(Error::Format(format!("bad header line '{magic}'"))),
    }

    let dims = next_line("dimensions")?;
    let fields: Vec<&str> = dims.split_whitespace().collect();
    if fields.len() != 8 {
        return Err(Error::Format(format!("expected 8 fields on line 2, found {}", fields.len())));
    }
    let vocab_size: usize = parse_field(fields[0], "V")?;
    let num_topics: usize = parse_field(fields[1], "K")?;
    let num_outputs: usize = parse_field(fields[2], "C")?;
    let task = Task::from_name(fields[3], num_outputs).map_err(|e| Error::Format(e.to_string()))?;
    let unroll_depth: usize = parse_field(fields[4], "L")?;
    let alpha: f64 = parse_field(fields[5], "alpha")?;
    let beta: f64 = parse_field(fields[6], "beta")?;
    let gamma: f64 = parse_field(fields[7], "gamma")?;
    if task == Task::Unsupervised && num_outputs != 0 {
        return Err(Error::Format("unsupervised model must declare C = 0".into()));
    }
    let hyper = Hyperparams::new(num_topics, alpha, beta, gamma, unroll_depth, task)
        .map_err(|e| Error::Format(e.to_string()))?;
    if vocab_size == 0 {
        return Err(Error::Format("V must be positive".into()));
    }

    let mut phi = Array2::<f64>::zeros((vocab_size, num_topics).f());
    for v in 0..vocab_size {
        let line = next_line("topic matrix")?;
        let values = parse_row(&line, num_topics, v + 3)?;
        phi.row_mut(v).assign(&ArrayView1::from(&values));
    }
    for (j, mut col) in phi.columns_mut().into_iter().enumerate() {
        let sum: f64 = col.sum();
        if !((sum - 1.0).abs() <= LOAD_COLUMN_SUM_TOL) {
            return Err(Error::Format(format!("topic column {j} sums to {sum}")));
        }
        if (sum - 1.0).abs() > COLUMN_SUM_TOL {
            col.mapv_inplace(|x| x / sum);
        }
    }
    let phi = TopicMatrix::new(phi).map_err(|e| Error::Format(e.to_string()))?;

    let u = if task.is_supervised() {
        let mut weights = Array2::<f64>::zeros((num_outputs, num_topics));
        for c in 0..num_outputs {
            let line = next_line("output weights")?;
            let values = parse_row(&line, num_topics, vocab_size + c + 3)?;
            weights.row_mut(c).assign(&ArrayView1::from(&values));
        }
        Some(OutputParams::new(weights).map_err(|e| Error::Format(e.to_string()))?)
    } else {
        None
    };
    if let Some(extra) = next_line("trailer").ok().filter(|l| !l.trim().is_empty()) {
        return Err(Error::Format(format!("trailing content after model: '{extra}'")));
    }
    Model::new(hyper, phi, u).map_err(|e| Error::Format(e.to_string()))
}

fn parse_field<T: FromStr>(s: &str, name: &str) -> Result<T> {
    s.parse().map_err(|_| Error::Format(format!("cannot parse {name} from '{s}'")))
}

fn parse_row(line: &str, expected: usize, line_no: usize) -> Result<Vec<f64>> {
    let values = line
        .split_whitespace()
        .map(|token| {
            token
                .parse::<f64>()
                .map_err(|_| Error::Format(format!("line {line_no}: cannot parse '{token}'")))
        })
        .collect::<Result<Vec<f64>>>()?;
    if values.len() != expected {
        return Err(Error::Format(format!(
            "line {line_no}: expected {expected} values, found {}",
            values.len()
        )));
    }
    Ok(values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize_to_simplex(&[1.0, 1.0]).unwrap(), vec![0.5, 0.5]);
        assert_eq!(normalize_to_simplex(&[2.0, 0.0, 0.0]).unwrap(), vec![1.0, 0.0, 0.0]);
        assert_eq!(normalize_to_simplex(&[1.0, 3.0]).unwrap(), vec![0.25, 0.75]);
    }

    #[test]
    fn normalize_errors() {
        assert!(matches!(normalize_to_simplex(&[0.0, 0.0]), Err(Error::AllZero)));
        assert!(matches!(
            normalize_to_simplex(&[1.0, -0.5]),
            Err(Error::NegativeEntry { index: 1, .. })
        ));
    }

    #[test]
    fn hyperparams_validation() {
        let task = Task::Regression { output_dim: 1 };
        assert!(Hyperparams::new(0, 1.0, 1.0, 1.0, 5, task).is_err());
        assert!(Hyperparams::new(3, 0.0, 1.0, 1.0, 5, task).is_err());
        assert!(Hyperparams::new(3, 1.0, -1.0, 1.0, 5, task).is_err());
        assert!(Hyperparams::new(3, 1.0, 1.0, 0.0, 5, task).is_err());
        assert!(Hyperparams::new(3, 1.0, 1.0, 1.0, 5, Task::Classification { num_classes: 0 }).is_err());
        assert!(Hyperparams::new(3, 1.0, 1.0, 1.0, 0, task).is_ok());
        assert!(Hyperparams::new(3, 1.0, 1.0, 1.0, 5, task).unwrap().convex_regime());
        assert!(Hyperparams::new(3, 1.001, 1.0, 1.0, 5, task).unwrap().convex_regime());
        assert!(!Hyperparams::new(3, 0.5, 1.0, 1.0, 5, task).unwrap().convex_regime());
    }

    #[test]
    fn topic_matrix_rejects_bad_columns() {
        assert!(TopicMatrix::new(array![[0.5, 0.2], [0.5, 0.8]]).is_ok());
        assert!(TopicMatrix::new(array![[0.5, 0.2], [0.4, 0.8]]).is_err());
        assert!(TopicMatrix::new(array![[1.0, 0.2], [0.0, 0.8]]).is_err());
        assert!(TopicMatrix::new(array![[1.0 - 1e-301, 0.2], [1e-301, 0.8]]).is_err());
    }

    #[test]
    fn topic_matrix_is_column_major() {
        let phi = TopicMatrix::new(array![[0.5, 0.2], [0.5, 0.8]]).unwrap();
        assert!(phi.column(1).as_slice().is_some());
        assert_eq!(phi.entry(1, 1), 0.8);
    }

    #[test]
    fn counting_topics_counts_reads() {
        let phi = TopicMatrix::uniform(4, 2).unwrap();
        let counting = CountingTopics::new(&phi);
        let _ = counting.entry(0, 0) + counting.entry(3, 1);
        assert_eq!(counting.reads(), 2);
        counting.reset();
        assert_eq!(counting.reads(), 0);
    }

    fn small_model() -> Model {
        let hyper = Hyperparams::new(2, 1.001, 1.0001, 0.5, 7, Task::Regression { output_dim: 1 }).unwrap();
        let phi = TopicMatrix::new(array![[0.1, 0.7], [0.2, 0.2], [0.7, 0.1]]).unwrap();
        let u = OutputParams::new(array![[-1.25, 3.0e-17]]).unwrap();
        Model::new(hyper, phi, Some(u)).unwrap()
    }

    #[test]
    fn model_text_layout() {
        let mut buf = Vec::new();
        write_model(&small_model(), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "BPSLDA v1");
        assert!(lines[1].starts_with("3 2 1 regression 7 "));
        assert_eq!(lines.len(), 2 + 3 + 1);
        assert_eq!(lines[2], "1.0000000000000001e-1 6.9999999999999996e-1");
        assert!(!text.contains('\r'));
    }

    #[test]
    fn unsupervised_layout_omits_u() {
        let hyper = Hyperparams::new(2, 1.0, 1.0, 1.0, 3, Task::Unsupervised).unwrap();
        let model = Model::new(hyper, TopicMatrix::uniform(3, 2).unwrap(), None).unwrap();
        let mut buf = Vec::new();
        write_model(&model, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.lines().nth(1).unwrap().starts_with("3 2 0 unsup 3 "));
        assert_eq!(text.lines().count(), 5);
        assert_eq!(read_model(&buf[..]).unwrap(), model);
    }

    #[test]
    fn load_rejects_unknown_version() {
        let mut buf = Vec::new();
        write_model(&small_model(), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap().replacen("BPSLDA v1", "BPSLDA v999", 1);
        assert!(matches!(read_model(text.as_bytes()), Err(Error::Format(_))));
    }

    #[test]
    fn load_rejects_bad_column_sums() {
        let text = "BPSLDA v1\n2 1 0 unsup 1 1 1 1\n0.5\n0.500002\n";
        assert!(matches!(read_model(text.as_bytes()), Err(Error::Format(_))));
        // Small drift is repaired.
        let text = "BPSLDA v1\n2 1 0 unsup 1 1 1 1\n0.5\n0.5000002\n";
        let model = read_model(text.as_bytes()).unwrap();
        assert!((model.phi.column(0).sum() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn load_rejects_truncated_and_ragged() {
        let text = "BPSLDA v1\n2 1 0 unsup 1 1 1 1\n0.5\n";
        assert!(matches!(read_model(text.as_bytes()), Err(Error::Format(_))));
        let text = "BPSLDA v1\n2 1 0 unsup 1 1 1 1\n0.5 0.1\n0.5\n";
        assert!(matches!(read_model(text.as_bytes()), Err(Error::Format(_))));
        let text = "BPSLDA v1\n2 1 0 unsup 1 1 1\n0.5\n0.5\n";
        assert!(matches!(read_model(text.as_bytes()), Err(Error::Format(_))));
    }
}
