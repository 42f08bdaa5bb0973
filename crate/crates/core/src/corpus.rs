//! Text ingestion: tokenization, vocabulary construction, sparse
//! bag-of-words vectors, corpus file formats and cross-validation folds.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{fmt_real, Task};

/// Term-frequency vector of one document over a fixed vocabulary.
/// Entries are sorted by term id; only non-zero counts are stored.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparseBow {
    vocab_size: usize,
    ids: Vec<usize>,
    counts: Vec<u32>,
}

impl SparseBow {
    pub fn new(vocab_size: usize, entries: Vec<(usize, u32)>) -> Result<Self> {
        let mut ids = Vec::with_capacity(entries.len());
        let mut counts = Vec::with_capacity(entries.len());
        for (id, count) in entries {
            if id >= vocab_size {
                return Err(Error::DimensionMismatch(format!(
                    "term id {id} outside vocabulary of size {vocab_size}"
                )));
            }
            if count == 0 {
                return Err(Error::Invalid(format!("term {id} has zero count")));
            }
            if ids.last().is_some_and(|&last| last >= id) {
                return Err(Error::Invalid(format!("term ids must be strictly increasing at {id}")));
            }
            ids.push(id);
            counts.push(count);
        }
        Ok(SparseBow { vocab_size, ids, counts })
    }

    /// Builds a vector from dense counts, dropping zeros.
    pub fn from_dense(counts: &[u32]) -> Self {
        let (ids, nonzero) = counts
            .iter()
            .enumerate()
            .filter(|&(_, &c)| c > 0)
            .map(|(i, &c)| (i, c))
            .unzip();
        SparseBow { vocab_size: counts.len(), ids, counts: nonzero }
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    /// Number of distinct terms (nTok).
    pub fn num_unique(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn total_count(&self) -> u64 {
        self.counts.iter().map(|&c| u64::from(c)).sum()
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    /// `(term id, count)` pairs in increasing id order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.ids.iter().zip(&self.counts).map(|(&v, &c)| (v, f64::from(c)))
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut dense = vec![0.0; self.vocab_size];
        for (v, c) in self.iter() {
            dense[v] = c;
        }
        dense
    }

    /// Re-labels the vector as living in a vocabulary of a different size.
    pub fn with_vocab_size(mut self, vocab_size: usize) -> Result<Self> {
        if let Some(&last) = self.ids.last() {
            if last >= vocab_size {
                return Err(Error::DimensionMismatch(format!(
                    "term id {last} outside vocabulary of size {vocab_size}"
                )));
            }
        }
        self.vocab_size = vocab_size;
        Ok(self)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Label {
    /// Real-valued response vector of length C.
    Real(Vec<f64>),
    /// Class id in `0..C`.
    Class(usize),
}

impl Label {
    pub fn check(&self, task: Task) -> Result<()> {
        match (self, task) {
            (Label::Real(y), Task::Regression { output_dim }) if y.len() == output_dim => Ok(()),
            (Label::Class(c), Task::Classification { num_classes }) if *c < num_classes => Ok(()),
            _ => Err(Error::DimensionMismatch(format!("label {self:?} does not fit task {task:?}"))),
        }
    }

    /// Target vector `y_d`: the response itself, or a one-hot class indicator.
    pub fn target(&self, num_outputs: usize) -> Vec<f64> {
        match self {
            Label::Real(y) => y.clone(),
            Label::Class(c) => {
                let mut y = vec![0.0; num_outputs];
                y[*c] = 1.0;
                y
            }
        }
    }

    fn to_field(&self) -> String {
        match self {
            Label::Real(y) => fmt_real(y[0]),
            Label::Class(c) => c.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDoc {
    pub bow: SparseBow,
    pub label: Label,
}

/// Lowercases, replaces every character outside `[a-z0-9]` by a space and
/// splits on whitespace.
pub fn tokenize(text: &str) -> Vec<String> {
    let cleaned: String = text
        .chars()
        .flat_map(char::to_lowercase)
        .map(|c| if c.is_ascii_lowercase() || c.is_ascii_digit() { c } else { ' ' })
        .collect();
    cleaned.split_whitespace().map(str::to_owned).collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(tokens.len());
        for (id, token) in tokens.iter().enumerate() {
            if index.insert(token.clone(), id).is_some() {
                return Err(Error::Invalid(format!("duplicate vocabulary token '{token}'")));
            }
        }
        Ok(Vocabulary { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        for token in &self.tokens {
            writeln!(out, "{token}")?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let reader = BufReader::new(File::open(path)?);
        let tokens = reader
            .lines()
            .map(|l| l.map(|s| s.trim_end_matches('\r').to_owned()))
            .collect::<std::io::Result<Vec<_>>>()?;
        Vocabulary::from_tokens(tokens)
    }
}

/// Keeps the `max_size` most frequent tokens. Ids follow decreasing
/// frequency; ties are broken by ascending token.
pub fn build_vocabulary<D, T>(docs: D, max_size: usize) -> Result<Vocabulary>
where
    D: IntoIterator<Item = T>,
    T: IntoIterator,
    T::Item: AsRef<str>,
{
    let mut freq: HashMap<String, u64> = HashMap::new();
    for doc in docs {
        for token in doc {
            *freq.entry(token.as_ref().to_owned()).or_insert(0) += 1;
        }
    }
    if freq.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut ranked: Vec<(String, u64)> = freq.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(max_size);
    Vocabulary::from_tokens(ranked.into_iter().map(|(t, _)| t).collect())
}

/// Counts in-vocabulary tokens; out-of-vocabulary tokens are dropped.
pub fn vectorize<I>(doc: I, vocab: &Vocabulary) -> Result<SparseBow>
where
    I: IntoIterator,
    I::Item: AsRef<str>,
{
    if vocab.is_empty() {
        return Err(Error::Invalid("vocabulary is empty".into()));
    }
    let mut counts: HashMap<usize, u32> = HashMap::new();
    for token in doc {
        if let Some(id) = vocab.id(token.as_ref()) {
            *counts.entry(id).or_insert(0) += 1;
        }
    }
    if counts.is_empty() {
        return Err(Error::EmptyAfterFiltering);
    }
    let mut entries: Vec<(usize, u32)> = counts.into_iter().collect();
    entries.sort_unstable();
    SparseBow::new(vocab.len(), entries)
}

/// Splits `0..n_docs` into `k` disjoint folds whose sizes differ by at most one.
pub fn kfold_split(n_docs: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 || n_docs < k {
        return Err(Error::TooFewDocs { n_docs, k });
    }
    let mut order: Vec<usize> = (0..n_docs).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut folds = vec![Vec::with_capacity(n_docs / k + 1); k];
    for (position, doc) in order.into_iter().enumerate() {
        folds[position % k].push(doc);
    }
    for fold in &mut folds {
        fold.sort_unstable();
    }
    Ok(folds)
}

/// One line of a pre-vectorized corpus before the label is interpreted.
#[derive(Debug, Clone, PartialEq)]
pub struct RawDoc {
    pub label: String,
    pub bow: SparseBow,
}

/// Reads `<label> <id>:<count> ...` lines. With `vocab_size = None` the
/// vocabulary size is taken as one past the largest id in the file.
pub fn read_vectorized<R: BufRead>(input: R, vocab_size: Option<usize>) -> Result<Vec<RawDoc>> {
    let mut parsed = Vec::new();
    let mut max_id = None::<usize>;
    for (line_idx, line) in input.lines().enumerate() {
        let line_no = line_idx + 1;
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split_whitespace();
        let label = fields.next().unwrap_or_default().to_owned();
        let mut entries = Vec::new();
        for field in fields {
            let (id, count) = field.split_once(':').ok_or_else(|| Error::Parse {
                line: line_no,
                msg: format!("expected <id>:<count>, found '{field}'"),
            })?;
            let id: usize = id.parse().map_err(|_| Error::Parse {
                line: line_no,
                msg: format!("bad term id '{id}'"),
            })?;
            let count: u32 = count.parse().map_err(|_| Error::Parse {
                line: line_no,
                msg: format!("bad count '{count}'"),
            })?;
            max_id = max_id.max(Some(id));
            entries.push((id, count));
        }
        parsed.push((line_no, label, entries));
    }
    let vocab_size = vocab_size.unwrap_or_else(|| max_id.map_or(0, |m| m + 1));
    parsed
        .into_iter()
        .map(|(line_no, label, entries)| {
            let bow = SparseBow::new(vocab_size, entries).map_err(|e| match e {
                Error::DimensionMismatch(msg) => Error::DimensionMismatch(format!("line {line_no}: {msg}")),
                other => Error::Parse { line: line_no, msg: other.to_string() },
            })?;
            Ok(RawDoc { label, bow })
        })
        .collect()
}

pub fn load_vectorized(path: impl AsRef<Path>, vocab_size: Option<usize>) -> Result<Vec<RawDoc>> {
    read_vectorized(BufReader::new(File::open(path)?), vocab_size)
}

/// Interprets label strings for the given task. Regression labels are single
/// decimals; class labels are non-negative integers below `num_classes`.
pub fn attach_labels(docs: Vec<RawDoc>, task: Task) -> Result<Vec<LabeledDoc>> {
    docs.into_iter()
        .enumerate()
        .map(|(i, doc)| {
            let label = parse_label(&doc.label, task)
                .map_err(|msg| Error::Parse { line: i + 1, msg })?;
            Ok(LabeledDoc { bow: doc.bow, label })
        })
        .collect()
}

fn parse_label(field: &str, task: Task) -> std::result::Result<Label, String> {
    match task {
        Task::Regression { output_dim } => {
            if output_dim != 1 {
                return Err(format!("corpus files carry scalar labels, task needs {output_dim}"));
            }
            let y: f64 = field.parse().map_err(|_| format!("bad regression label '{field}'"))?;
            if !y.is_finite() {
                return Err(format!("non-finite label '{field}'"));
            }
            Ok(Label::Real(vec![y]))
        }
        Task::Classification { num_classes } => {
            let c: usize = field.parse().map_err(|_| format!("bad class label '{field}'"))?;
            if c >= num_classes {
                return Err(format!("class {c} out of range for {num_classes} classes"));
            }
            Ok(Label::Class(c))
        }
        Task::Unsupervised => Err("unsupervised task has no labels".into()),
    }
}

/// Largest class id + 1 across the raw labels (for inferring C).
pub fn count_classes(docs: &[RawDoc]) -> Result<usize> {
    let mut max = 0;
    for (i, doc) in docs.iter().enumerate() {
        let c: usize = doc.label.parse().map_err(|_| Error::Parse {
            line: i + 1,
            msg: format!("bad class label '{}'", doc.label),
        })?;
        max = max.max(c + 1);
    }
    Ok(max)
}

pub fn write_vectorized<W: Write>(docs: &[LabeledDoc], mut out: W) -> Result<()> {
    for doc in docs {
        write!(out, "{}", doc.label.to_field())?;
        for (&id, &count) in doc.bow.ids().iter().zip(doc.bow.counts()) {
            write!(out, " {id}:{count}")?;
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

pub fn save_vectorized(docs: &[LabeledDoc], path: impl AsRef<Path>) -> Result<()> {
    write_vectorized(docs, BufWriter::new(File::create(path)?))
}

/// Reads `<label>\t<raw text>` lines, returning labels and token lists.
pub fn read_raw_text<R: BufRead>(input: R) -> Result<Vec<(String, Vec<String>)>> {
    let mut docs = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let (label, text) = line.split_once('\t').ok_or_else(|| Error::Parse {
            line: i + 1,
            msg: "expected <label><TAB><text>".into(),
        })?;
        docs.push((label.to_owned(), tokenize(text)));
    }
    Ok(docs)
}

/// Vectorizes raw documents, skipping (and counting) those left empty.
pub fn vectorize_raw(docs: &[(String, Vec<String>)], vocab: &Vocabulary) -> Result<(Vec<RawDoc>, usize)> {
    let mut out = Vec::with_capacity(docs.len());
    let mut skipped = 0;
    for (label, tokens) in docs {
        match vectorize(tokens, vocab) {
            Ok(bow) => out.push(RawDoc { label: label.clone(), bow }),
            Err(Error::EmptyAfterFiltering) => skipped += 1,
            Err(e) => return Err(e),
        }
    }
    if skipped > 0 {
        log::info!("skipped {skipped} documents with no in-vocabulary tokens");
    }
    Ok((out, skipped))
}
