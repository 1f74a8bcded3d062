//! Dataset ingestion and preprocessing.
//!
//! Raw rows come either from a CSV file or from the synthetic generator and
//! are sorted by time. The sorted stream is cut 70/10/20 into train,
//! validation and test, and every transform (median imputation, target
//! encoding, min-max scaling) is fit on the training block only before being
//! applied to all three. The raw amount is carried alongside the scaled
//! features because the monetary reward is defined on it.

mod preprocess;
mod split;
mod synth;

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use preprocess::{apply_scaler, fit_scaler, target_encode, MedianImputer, ScalerParams, TargetEncoder};
pub use split::{split, split_sizes, SplitBundle, MIN_SPLIT_ROWS};
pub use synth::{synth_generate, Drift, LogNormalParams, SynthConfig};

use crate::environment::Transaction;
use crate::{Error, Label, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceKind {
    Csv,
    #[default]
    Synthetic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSpec {
    pub source: SourceKind,
    /// CSV path, for `source = csv`.
    pub path: Option<PathBuf>,
    /// Generator settings, for `source = synthetic`.
    pub synth: SynthConfig,
    pub amount_column: String,
    pub label_column: String,
    pub time_column: String,
    pub categorical_columns: Vec<String>,
    /// Columns read but not used as features (the time column may be listed here).
    pub drop_columns: Vec<String>,
    pub target_encoding_smoothing: f64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            source: SourceKind::Synthetic,
            path: None,
            synth: SynthConfig::default(),
            amount_column: "amount".into(),
            label_column: "label".into(),
            time_column: "time".into(),
            categorical_columns: Vec::new(),
            drop_columns: Vec::new(),
            target_encoding_smoothing: 20.0,
        }
    }
}

impl DatasetSpec {
    pub fn csv(path: impl Into<PathBuf>) -> Self {
        Self {
            source: SourceKind::Csv,
            path: Some(path.into()),
            ..Self::default()
        }
    }

    pub fn synthetic(config: SynthConfig) -> Self {
        Self {
            source: SourceKind::Synthetic,
            synth: config,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.source {
            SourceKind::Csv if self.path.is_none() => {
                return Err(Error::InvalidConfig("csv dataset needs a path".into()))
            }
            SourceKind::Synthetic => self.synth.validate()?,
            _ => {}
        }
        if !(self.target_encoding_smoothing >= 0.0) {
            return Err(Error::InvalidConfig("target_encoding_smoothing must be >= 0".into()));
        }
        let reserved = [&self.amount_column, &self.label_column, &self.time_column];
        if let Some(c) = self.categorical_columns.iter().find(|c| reserved.contains(c)) {
            return Err(Error::InvalidConfig(format!("column {c} cannot be categorical")));
        }
        if self.drop_columns.contains(&self.label_column) || self.drop_columns.contains(&self.amount_column) {
            return Err(Error::InvalidConfig("label and amount columns cannot be dropped".into()));
        }
        Ok(())
    }
}

/// One parsed CSV row before any fitting.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRow {
    pub time: f64,
    pub amount: f64,
    pub label: Label,
    /// Values of the numeric feature columns; `None` when missing.
    pub numeric: Vec<Option<f64>>,
    pub categorical: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    pub numeric_columns: Vec<String>,
    pub categorical_columns: Vec<String>,
    /// Sorted by time, stable on ties.
    pub rows: Vec<RawRow>,
}

fn is_missing(field: &str) -> bool {
    field.is_empty() || field.eq_ignore_ascii_case("nan") || field.eq_ignore_ascii_case("na")
}

/// Reads a CSV with a header row and sorts it by the time column.
///
/// Every column other than the label, the categorical columns and
/// `drop_columns` becomes a numeric feature (time and amount included).
pub fn load_csv(spec: &DatasetSpec) -> Result<RawTable> {
    let path = spec
        .path
        .as_deref()
        .ok_or_else(|| Error::InvalidConfig("csv dataset needs a path".into()))?;
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, spec)
}

pub fn read_csv<R: std::io::Read>(reader: R, spec: &DatasetSpec) -> Result<RawTable> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::Ingest(format!("cannot read header: {e}")))?
        .iter()
        .map(|h| h.trim().to_owned())
        .collect();
    if headers.iter().all(|h| h.is_empty()) {
        return Err(Error::Ingest("empty file: no header row".into()));
    }
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Ingest(format!("missing column {name:?}")))
    };
    let time_idx = find(&spec.time_column)?;
    let amount_idx = find(&spec.amount_column)?;
    let label_idx = find(&spec.label_column)?;
    let cat_idx = spec
        .categorical_columns
        .iter()
        .map(|c| find(c))
        .collect::<Result<Vec<_>>>()?;
    let numeric_idx: Vec<usize> = (0..headers.len())
        .filter(|&i| {
            let h = &headers[i];
            i != label_idx && !cat_idx.contains(&i) && !spec.drop_columns.contains(h)
        })
        .collect();

    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(rows.len() + 2);
        let row_err = |message: String| Error::IngestRow { row: line, message };
        let field = |i: usize| record.get(i).map(str::trim).unwrap_or("");
        let number = |i: usize| -> Result<Option<f64>> {
            let f = field(i);
            if is_missing(f) {
                return Ok(None);
            }
            f.parse::<f64>()
                .map(Some)
                .map_err(|_| row_err(format!("column {:?}: cannot parse {f:?} as a number", headers[i])))
        };
        let required = |i: usize| -> Result<f64> {
            match number(i)? {
                Some(v) if v.is_finite() => Ok(v),
                Some(v) => Err(row_err(format!("column {:?}: non-finite value {v}", headers[i]))),
                None => Err(row_err(format!("column {:?} is missing", headers[i]))),
            }
        };
        let time = required(time_idx)?;
        let amount = required(amount_idx)?;
        if amount < 0.0 {
            return Err(row_err(format!("negative amount {amount}")));
        }
        let label_text = field(label_idx);
        let label = match label_text.parse::<f64>() {
            Ok(0.0) => Label::Genuine,
            Ok(1.0) => Label::Fraud,
            _ => {
                return Err(row_err(format!(
                    "label column {:?} must be 0 or 1, got {label_text:?}",
                    spec.label_column
                )))
            }
        };
        let numeric = numeric_idx
            .iter()
            .map(|&i| match number(i)? {
                Some(v) if !v.is_finite() => Err(row_err(format!("column {:?}: non-finite value", headers[i]))),
                v => Ok(v),
            })
            .collect::<Result<Vec<_>>>()?;
        let categorical = cat_idx.iter().map(|&i| field(i).to_owned()).collect();
        rows.push(RawRow {
            time,
            amount,
            label,
            numeric,
            categorical,
        });
    }
    if rows.is_empty() {
        return Err(Error::Ingest("file has a header but no rows".into()));
    }
    rows.sort_by(|a, b| a.time.total_cmp(&b.time));
    Ok(RawTable {
        numeric_columns: numeric_idx.iter().map(|&i| headers[i].clone()).collect(),
        categorical_columns: spec.categorical_columns.clone(),
        rows,
    })
}

/// Column names of the synthetic CSV shape: `time, f0..f{n-1}, amount, label`.
pub fn synthetic_columns(n_features: usize) -> Vec<String> {
    let mut cols = vec!["time".to_owned()];
    cols.extend((0..n_features).map(|i| format!("f{i}")));
    cols.push("amount".into());
    cols.push("label".into());
    cols
}

/// Writes raw synthetic transactions in the synthetic CSV shape.
pub fn write_synthetic_csv<W: Write>(data: &[Transaction], writer: W) -> Result<()> {
    let n_features = data.first().map_or(0, |t| t.features.len());
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(synthetic_columns(n_features))?;
    let mut record = Vec::with_capacity(n_features + 3);
    for t in data {
        record.clear();
        record.push(t.time.to_string());
        record.extend(t.features.iter().map(f64::to_string));
        record.push(t.amount.to_string());
        record.push(t.label.index().to_string());
        w.write_record(&record)?;
    }
    w.flush().map_err(|e| Error::io("<synthetic csv>", e))?;
    Ok(())
}

pub fn write_synthetic_csv_file(data: &[Transaction], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_synthetic_csv(data, std::io::BufWriter::new(file))
}

/// Synthetic stream as a raw table with the synthetic CSV columns, minus `drop_columns`.
pub fn raw_from_transactions(data: &[Transaction], drop_columns: &[String]) -> RawTable {
    let n_features = data.first().map_or(0, |t| t.features.len());
    let all: Vec<String> = synthetic_columns(n_features);
    // time, f*, amount are numeric; label is not a feature
    let keep: Vec<bool> = all[..all.len() - 1].iter().map(|c| !drop_columns.contains(c)).collect();
    let numeric_columns = all[..all.len() - 1]
        .iter()
        .zip(&keep)
        .filter(|(_, &k)| k)
        .map(|(c, _)| c.clone())
        .collect();
    let mut rows: Vec<RawRow> = data
        .iter()
        .map(|t| {
            let values = std::iter::once(t.time).chain(t.features.iter().copied()).chain([t.amount]);
            RawRow {
                time: t.time,
                amount: t.amount,
                label: t.label,
                numeric: values.zip(&keep).filter(|(_, &k)| k).map(|(v, _)| Some(v)).collect(),
                categorical: Vec::new(),
            }
        })
        .collect();
    rows.sort_by(|a, b| a.time.total_cmp(&b.time));
    RawTable {
        numeric_columns,
        categorical_columns: Vec::new(),
        rows,
    }
}

/// Loads the raw table for either source. Synthetic streams never use time as a feature.
pub fn load_raw(spec: &DatasetSpec) -> Result<RawTable> {
    spec.validate()?;
    match spec.source {
        SourceKind::Csv => load_csv(spec),
        SourceKind::Synthetic => {
            let mut drop = spec.drop_columns.clone();
            drop.push("time".into());
            Ok(raw_from_transactions(&synth_generate(&spec.synth)?, &drop))
        }
    }
}

/// Everything fit on the training split, for audit and reuse.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedPreprocessing {
    pub feature_names: Vec<String>,
    pub imputer: MedianImputer,
    pub encoders: Vec<TargetEncoder>,
    pub scaler: ScalerParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreparedData {
    pub splits: SplitBundle<Transaction>,
    pub fitted: FittedPreprocessing,
}

impl PreparedData {
    pub fn feature_len(&self) -> usize {
        self.fitted.feature_names.len()
    }
}

/// Split, then fit imputation, encoding and scaling on the training rows only.
pub fn prepare(table: RawTable, smoothing: f64) -> Result<PreparedData> {
    let RawTable {
        numeric_columns,
        categorical_columns,
        rows,
    } = table;
    let width = numeric_columns.len();
    let bundle = split(rows)?;

    let train_numeric: Vec<&[Option<f64>]> = bundle.train.iter().map(|r| r.numeric.as_slice()).collect();
    let imputer = MedianImputer::fit(&train_numeric, width);
    let train_labels: Vec<Label> = bundle.train.iter().map(|r| r.label).collect();
    let encoders = (0..categorical_columns.len())
        .map(|j| {
            let col: Vec<&str> = bundle.train.iter().map(|r| r.categorical[j].as_str()).collect();
            TargetEncoder::fit(&col, &train_labels, smoothing)
        })
        .collect::<Result<Vec<_>>>()?;

    let featurize = |r: &RawRow| -> Vec<f64> {
        let mut f = imputer.fill(&r.numeric);
        f.extend(encoders.iter().zip(&r.categorical).map(|(e, c)| e.encode(c)));
        f
    };
    let train_features: Vec<Vec<f64>> = bundle.train.iter().map(featurize).collect();
    let scaler = fit_scaler(&train_features)?;

    let mut index = 0;
    let mut finish = |rows: Vec<RawRow>| -> Vec<Transaction> {
        rows.into_iter()
            .map(|r| {
                let t = Transaction {
                    index,
                    time: r.time,
                    features: scaler.transform(&featurize(&r)),
                    amount: r.amount,
                    label: r.label,
                };
                index += 1;
                t
            })
            .collect()
    };
    let splits = SplitBundle {
        train: finish(bundle.train),
        validation: finish(bundle.validation),
        test: finish(bundle.test),
    };
    let mut feature_names = numeric_columns;
    feature_names.extend(categorical_columns);
    Ok(PreparedData {
        splits,
        fitted: FittedPreprocessing {
            feature_names,
            imputer,
            encoders,
            scaler,
        },
    })
}

/// `load_raw` followed by `prepare`.
pub fn load_and_prepare(spec: &DatasetSpec) -> Result<PreparedData> {
    prepare(load_raw(spec)?, spec.target_encoding_smoothing)
}
