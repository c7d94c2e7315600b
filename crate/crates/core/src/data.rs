//! Dataset specs, loaders, splits and batching.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{InputSpec, ModelInput};
use crate::numkit::{Matrix, Rng};
use crate::scm::{generate, ScmSample, SynthConfig, DC_DIM, ND_DIM, PA_DIM};

pub const DEFAULT_RATING_THRESHOLD: f64 = 4.0;

fn default_rating_threshold() -> Option<f64> {
    Some(DEFAULT_RATING_THRESHOLD)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    ValIid,
    TestIid,
    ValOod,
    TestOod,
}

impl Split {
    pub fn is_ood(self) -> bool {
        matches!(self, Split::ValOod | Split::TestOod)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitFile {
    pub path: PathBuf,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSpec {
    /// Generated in memory from the simulator.
    Synthetic { synth: SynthConfig },
    /// A single CSV written by [`write_synthetic_csv`].
    SyntheticCsv { path: PathBuf },
    /// `user_id,item_id,label` integer CSVs.
    IdPairs {
        files: Vec<SplitFile>,
        /// Labels `>=` this become 1; `null` requires labels already in {0, 1}.
        #[serde(default = "default_rating_threshold")]
        rating_threshold: Option<f64>,
        #[serde(default)]
        n_users: Option<usize>,
        #[serde(default)]
        n_items: Option<usize>,
    },
    /// `f_0,…,f_{w−1},label` float CSVs.
    Tabular {
        files: Vec<SplitFile>,
        #[serde(default)]
        width: Option<usize>,
    },
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec::Synthetic { synth: SynthConfig::default() }
    }
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            DatasetSpec::Synthetic { synth } => synth.validate(),
            DatasetSpec::SyntheticCsv { .. } => Ok(()),
            DatasetSpec::IdPairs { files, rating_threshold, .. } => {
                if let Some(t) = rating_threshold {
                    if !t.is_finite() {
                        return Err(Error::config("rating threshold must be finite"));
                    }
                }
                validate_files(files)
            }
            DatasetSpec::Tabular { files, .. } => validate_files(files),
        }
    }
}

fn validate_files(files: &[SplitFile]) -> Result<()> {
    if !files.iter().any(|f| f.split == Split::Train) {
        return Err(Error::config("dataset needs at least one file designated 'train'"));
    }
    Ok(())
}

/// Ground-truth partition of synthetic features.
#[derive(Debug, Clone, PartialEq)]
pub struct Truth {
    pub pa: Matrix,
    pub nd: Matrix,
    pub dc: Matrix,
}

/// Rows of inputs with binary labels and, for synthetic data, the true partition.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub input: ModelInput,
    pub labels: Vec<u8>,
    pub truth: Option<Truth>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn select(&self, idx: &[usize]) -> Batch {
        Batch {
            input: self.input.select(idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            truth: self.truth.as_ref().map(|t| Truth {
                pa: t.pa.select_rows(idx),
                nd: t.nd.select_rows(idx),
                dc: t.dc.select_rows(idx),
            }),
        }
    }

    fn concat(parts: &[Batch]) -> Result<Batch> {
        let (first, rest) = parts.split_first().ok_or_else(|| Error::config("no rows to concatenate"))?;
        rest.iter().try_fold(first.clone(), |mut acc, b| {
            acc.input = match (acc.input, &b.input) {
                (ModelInput::Features(a), ModelInput::Features(m)) => {
                    let mut rows: Vec<Vec<f64>> = a.iter_rows().map(<[f64]>::to_vec).collect();
                    rows.extend(m.iter_rows().map(<[f64]>::to_vec));
                    ModelInput::Features(Matrix::from_rows(&rows)?)
                }
                (ModelInput::Ids(mut a), ModelInput::Ids(m)) => {
                    a.extend_from_slice(m);
                    ModelInput::Ids(a)
                }
                _ => return Err(Error::config("cannot mix feature and id inputs")),
            };
            acc.labels.extend_from_slice(&b.labels);
            acc.truth = None;
            Ok(acc)
        })
    }

    /// Seeded shuffle into batches of `batch_size`; the last batch may be partial.
    pub fn batch_iter(&self, batch_size: usize, seed: u64) -> impl Iterator<Item = Batch> + '_ {
        let mut rng = Rng::new(seed);
        batch_indices(self.len(), batch_size, &mut rng).into_iter().map(move |idx| self.select(&idx))
    }
}

/// Shuffled index batches covering `0..n` exactly once.
pub fn batch_indices(n: usize, batch_size: usize, rng: &mut Rng) -> Vec<Vec<usize>> {
    assert!(batch_size >= 1, "batch size must be >= 1");
    let order = rng.permutation(n);
    order.chunks(batch_size).map(<[usize]>::to_vec).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub input_spec: InputSpec,
    pub train: Batch,
    pub val: Option<Batch>,
    pub test: Option<Batch>,
    pub val_ood: Option<Batch>,
    pub test_ood: Option<Batch>,
}

impl Dataset {
    /// Keeps `train` as given and carves 10 % validation and 10 % test rows
    /// out of it when neither held-out i.i.d. split was supplied.
    fn carve_if_needed(mut self, seed: u64) -> Dataset {
        if self.val.is_none() && self.test.is_none() {
            let (train, val, test) = split_80_10_10(&self.train, seed);
            self.train = train;
            self.val = Some(val);
            self.test = Some(test);
        }
        self
    }
}

/// Seeded 80/10/10 train/val/test split.
pub fn split_80_10_10(all: &Batch, seed: u64) -> (Batch, Batch, Batch) {
    let n = all.len();
    let order = Rng::substream(seed, 0x5b11).permutation(n);
    let n_val = n / 10;
    let n_test = n / 10;
    let n_train = n - n_val - n_test;
    (
        all.select(&order[..n_train]),
        all.select(&order[n_train..n_train + n_val]),
        all.select(&order[n_train + n_val..]),
    )
}

/// Concatenates synthetic samples into a feature batch with ground truth.
pub fn samples_to_batch(samples: &[ScmSample]) -> Result<Batch> {
    let x: Vec<Vec<f64>> = samples.iter().map(|s| s.x.clone()).collect();
    let pa: Vec<Vec<f64>> = samples.iter().map(|s| s.pa.clone()).collect();
    let nd: Vec<Vec<f64>> = samples.iter().map(|s| s.nd.clone()).collect();
    let dc: Vec<Vec<f64>> = samples.iter().map(|s| s.dc.clone()).collect();
    Ok(Batch {
        input: ModelInput::Features(Matrix::from_rows(&x)?),
        labels: samples.iter().map(|s| s.y).collect(),
        truth: Some(Truth { pa: Matrix::from_rows(&pa)?, nd: Matrix::from_rows(&nd)?, dc: Matrix::from_rows(&dc)? }),
    })
}

/// Resolves a dataset spec. `seed` drives the split when one must be carved.
pub fn load(spec: &DatasetSpec, seed: u64) -> Result<Dataset> {
    spec.validate()?;
    match spec {
        DatasetSpec::Synthetic { synth } => {
            let batch = samples_to_batch(&generate(synth)?)?;
            let width = synth_width(synth.nc_cols);
            Ok(single(InputSpec::Features { width }, batch).carve_if_needed(seed))
        }
        DatasetSpec::SyntheticCsv { path } => {
            let samples = read_synthetic_csv(path)?;
            let width = samples.first().map(|s| s.x.len()).unwrap_or(PA_DIM + ND_DIM + DC_DIM);
            Ok(single(InputSpec::Features { width }, samples_to_batch(&samples)?).carve_if_needed(seed))
        }
        DatasetSpec::IdPairs { files, rating_threshold, n_users, n_items } => {
            let mut parts = Vec::new();
            for f in files {
                parts.push((f.split, read_id_pairs(&f.path, *rating_threshold)?));
            }
            let max_u = parts.iter().flat_map(|(_, r)| r.iter().map(|t| t.0)).max().map_or(0, |m| m + 1);
            let max_i = parts.iter().flat_map(|(_, r)| r.iter().map(|t| t.1)).max().map_or(0, |m| m + 1);
            let users = n_users.unwrap_or(max_u);
            let items = n_items.unwrap_or(max_i);
            for ((_, rows), f) in parts.iter().zip(files) {
                for (line, &(u, i, _)) in rows.iter().enumerate() {
                    if u >= users || i >= items {
                        return Err(Error::data(
                            f.path.display().to_string(),
                            line + 2,
                            format!("id pair ({u}, {i}) outside vocabulary ({users} users, {items} items)"),
                        ));
                    }
                }
            }
            let batches = parts
                .into_iter()
                .map(|(split, rows)| {
                    let batch = Batch {
                        input: ModelInput::Ids(rows.iter().map(|&(u, i, _)| (u, i)).collect()),
                        labels: rows.iter().map(|r| r.2).collect(),
                        truth: None,
                    };
                    (split, batch)
                })
                .collect();
            Ok(assemble(InputSpec::IdPairs { n_users: users, n_items: items }, batches)?.carve_if_needed(seed))
        }
        DatasetSpec::Tabular { files, width } => {
            let mut batches = Vec::new();
            let mut seen = *width;
            for f in files {
                let (w, batch) = read_tabular(&f.path, seen)?;
                seen = Some(w);
                batches.push((f.split, batch));
            }
            let width = seen.expect("at least one file");
            Ok(assemble(InputSpec::Features { width }, batches)?.carve_if_needed(seed))
        }
    }
}

pub fn synth_width(nc_cols: usize) -> usize {
    PA_DIM + ND_DIM + DC_DIM + nc_cols
}

fn single(input_spec: InputSpec, train: Batch) -> Dataset {
    Dataset { input_spec, train, val: None, test: None, val_ood: None, test_ood: None }
}

fn assemble(input_spec: InputSpec, batches: Vec<(Split, Batch)>) -> Result<Dataset> {
    let gather = |want: Split| -> Result<Option<Batch>> {
        let parts: Vec<Batch> = batches.iter().filter(|(s, _)| *s == want).map(|(_, b)| b.clone()).collect();
        if parts.is_empty() {
            Ok(None)
        } else {
            Batch::concat(&parts).map(Some)
        }
    };
    let train = gather(Split::Train)?.ok_or_else(|| Error::config("no training rows"))?;
    Ok(Dataset {
        input_spec,
        train,
        val: gather(Split::ValIid)?,
        test: gather(Split::TestIid)?,
        val_ood: gather(Split::ValOod)?,
        test_ood: gather(Split::TestOod)?,
    })
}

fn open_csv(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(file))
}

fn csv_err(path: &Path, line: usize, e: csv::Error) -> Error {
    Error::data(path.display().to_string(), line, e.to_string())
}

fn headers(path: &Path, reader: &mut csv::Reader<File>) -> Result<Vec<String>> {
    Ok(reader.headers().map_err(|e| csv_err(path, 1, e))?.iter().map(str::to_owned).collect())
}

fn parse_field<T: std::str::FromStr>(path: &Path, line: usize, col: &str, raw: &str) -> Result<T> {
    raw.parse()
        .map_err(|_| Error::data(path.display().to_string(), line, format!("column '{col}': cannot parse '{raw}'")))
}

fn synthetic_header(nc_cols: usize) -> Vec<String> {
    let mut h = Vec::new();
    for (prefix, n) in [("pa", PA_DIM), ("nd", ND_DIM), ("dc", DC_DIM), ("nc", nc_cols)] {
        h.extend((0..n).map(|i| format!("{prefix}_{i}")));
    }
    h.push("y".into());
    h
}

/// Shortest scientific notation that parses back to the same `f64`.
pub fn format_float(v: f64) -> String {
    format!("{v:e}")
}

pub fn write_synthetic_csv(path: &Path, samples: &[ScmSample]) -> Result<()> {
    let nc = samples.first().map_or(0, |s| s.nc.len());
    let mut out = String::new();
    out.push_str(&synthetic_header(nc).join(","));
    out.push('\n');
    for s in samples {
        for v in s.pa.iter().chain(&s.nd).chain(&s.dc).chain(&s.nc) {
            out.push_str(&format_float(*v));
            out.push(',');
        }
        out.push_str(&s.y.to_string());
        out.push('\n');
    }
    let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}

pub fn read_synthetic_csv(path: &Path) -> Result<Vec<ScmSample>> {
    let mut reader = open_csv(path)?;
    let header = headers(path, &mut reader)?;
    let fixed = PA_DIM + ND_DIM + DC_DIM + 1;
    if header.len() < fixed {
        return Err(Error::data(path.display().to_string(), 1, format!("expected at least {fixed} columns")));
    }
    let nc = header.len() - fixed;
    let expected = synthetic_header(nc);
    if header != expected {
        return Err(Error::data(
            path.display().to_string(),
            1,
            format!("header must be {}", expected.join(",")),
        ));
    }
    let mut samples = Vec::new();
    for (k, rec) in reader.records().enumerate() {
        let line = k + 2;
        let rec = rec.map_err(|e| csv_err(path, line, e))?;
        let vals: Vec<f64> = rec
            .iter()
            .take(header.len() - 1)
            .zip(&header)
            .map(|(raw, col)| parse_field(path, line, col, raw))
            .collect::<Result<_>>()?;
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::data(path.display().to_string(), line, "non-finite feature"));
        }
        let y: u8 = parse_field(path, line, "y", &rec[header.len() - 1])?;
        if y > 1 {
            return Err(Error::data(path.display().to_string(), line, format!("label {y} is not 0 or 1")));
        }
        let pa = vals[..PA_DIM].to_vec();
        let nd = vals[PA_DIM..PA_DIM + ND_DIM].to_vec();
        let dc = vals[PA_DIM + ND_DIM..PA_DIM + ND_DIM + DC_DIM].to_vec();
        let nc_v = vals[PA_DIM + ND_DIM + DC_DIM..].to_vec();
        samples.push(ScmSample { x: vals, pa, nd, dc, nc: nc_v, y });
    }
    Ok(samples)
}

fn binarize(path: &Path, line: usize, raw: f64, threshold: Option<f64>) -> Result<u8> {
    match threshold {
        Some(t) => Ok(u8::from(raw >= t)),
        None if raw == 0.0 || raw == 1.0 => Ok(raw as u8),
        None => Err(Error::data(path.display().to_string(), line, format!("label {raw} is not 0 or 1"))),
    }
}

fn read_id_pairs(path: &Path, threshold: Option<f64>) -> Result<Vec<(usize, usize, u8)>> {
    let mut reader = open_csv(path)?;
    let header = headers(path, &mut reader)?;
    if header != ["user_id", "item_id", "label"] {
        return Err(Error::data(path.display().to_string(), 1, "header must be user_id,item_id,label"));
    }
    let mut rows = Vec::new();
    for (k, rec) in reader.records().enumerate() {
        let line = k + 2;
        let rec = rec.map_err(|e| csv_err(path, line, e))?;
        let u = parse_field(path, line, "user_id", &rec[0])?;
        let i = parse_field(path, line, "item_id", &rec[1])?;
        let raw: f64 = parse_field(path, line, "label", &rec[2])?;
        rows.push((u, i, binarize(path, line, raw, threshold)?));
    }
    Ok(rows)
}

fn read_tabular(path: &Path, width: Option<usize>) -> Result<(usize, Batch)> {
    let mut reader = open_csv(path)?;
    let header = headers(path, &mut reader)?;
    let w = header.len().saturating_sub(1);
    let mut expected: Vec<String> = (0..w).map(|i| format!("f_{i}")).collect();
    expected.push("label".into());
    if w == 0 || header != expected {
        return Err(Error::data(path.display().to_string(), 1, "header must be f_0,…,f_{w-1},label"));
    }
    if let Some(want) = width {
        if want != w {
            return Err(Error::data(path.display().to_string(), 1, format!("expected {want} features, found {w}")));
        }
    }
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (k, rec) in reader.records().enumerate() {
        let line = k + 2;
        let rec = rec.map_err(|e| csv_err(path, line, e))?;
        let vals: Vec<f64> = rec
            .iter()
            .take(w)
            .zip(&header)
            .map(|(raw, col)| parse_field(path, line, col, raw))
            .collect::<Result<_>>()?;
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::data(path.display().to_string(), line, "non-finite feature"));
        }
        let raw: f64 = parse_field(path, line, "label", &rec[w])?;
        labels.push(binarize(path, line, raw, None)?);
        rows.push(vals);
    }
    if rows.is_empty() {
        return Err(Error::data(path.display().to_string(), 1, "no data rows"));
    }
    Ok((w, Batch { input: ModelInput::Features(Matrix::from_rows(&rows)?), labels, truth: None }))
}
