//! Train-fitted transforms: median imputation, target encoding, min-max scaling.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::{Error, Label, Result};

/// Per-feature min and max learned on the training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerParams {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl ScalerParams {
    pub fn fit<'a, I>(rows: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let mut rows = rows.into_iter();
        let Some(first) = rows.next() else {
            return Err(Error::InvalidInput("cannot fit a scaler on zero rows".into()));
        };
        let mut min = first.to_vec();
        let mut max = first.to_vec();
        for row in rows {
            if row.len() != min.len() {
                return Err(Error::Shape(format!("row has {} features, expected {}", row.len(), min.len())));
            }
            for ((lo, hi), &v) in min.iter_mut().zip(max.iter_mut()).zip(row) {
                *lo = lo.min(v);
                *hi = hi.max(v);
            }
        }
        if let Some(v) = min.iter().chain(&max).find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("feature value {v} while fitting scaler")));
        }
        Ok(Self { min, max })
    }

    pub fn len(&self) -> usize {
        self.min.len()
    }

    pub fn is_empty(&self) -> bool {
        self.min.is_empty()
    }

    /// `(v - min) / (max - min)`, or 0 for a constant feature. Values outside the
    /// training range are not clamped.
    pub fn transform_in_place(&self, row: &mut [f64]) {
        debug_assert_eq!(row.len(), self.len());
        for ((v, &lo), &hi) in row.iter_mut().zip(&self.min).zip(&self.max) {
            let range = hi - lo;
            *v = if range > 0.0 { (*v - lo) / range } else { 0.0 };
        }
    }

    pub fn transform(&self, row: &[f64]) -> Vec<f64> {
        let mut out = row.to_vec();
        self.transform_in_place(&mut out);
        out
    }

    /// Inverse of [`Self::transform`]; constant features come back as their constant.
    pub fn inverse_transform(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(&self.min)
            .zip(&self.max)
            .map(|((&v, &lo), &hi)| lo + v * (hi - lo))
            .collect()
    }
}

/// Fits a scaler on `train` rows and returns it; `data` is left untouched.
pub fn fit_scaler(train: &[Vec<f64>]) -> Result<ScalerParams> {
    ScalerParams::fit(train.iter().map(Vec::as_slice))
}

pub fn apply_scaler(params: &ScalerParams, data: &mut [Vec<f64>]) -> Result<()> {
    for row in data.iter_mut() {
        if row.len() != params.len() {
            return Err(Error::Shape(format!(
                "row has {} features, scaler was fit on {}",
                row.len(),
                params.len()
            )));
        }
        params.transform_in_place(row);
    }
    Ok(())
}

/// Smoothed per-category fraud rate, fit on training labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetEncoder {
    pub smoothing: f64,
    pub global_mean: f64,
    pub table: BTreeMap<String, f64>,
}

impl TargetEncoder {
    /// Category `c` maps to `(n_c·mean_c + smoothing·global) / (n_c + smoothing)`.
    pub fn fit(categories: &[&str], labels: &[Label], smoothing: f64) -> Result<Self> {
        if categories.len() != labels.len() {
            return Err(Error::Shape(format!(
                "{} categories for {} labels",
                categories.len(),
                labels.len()
            )));
        }
        if !(smoothing >= 0.0) {
            return Err(Error::InvalidConfig(format!("smoothing must be >= 0, got {smoothing}")));
        }
        let global_mean = if labels.is_empty() {
            0.0
        } else {
            labels.iter().filter(|l| l.is_fraud()).count() as f64 / labels.len() as f64
        };
        let mut counts: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
        for (&c, &l) in categories.iter().zip(labels) {
            let e = counts.entry(c).or_default();
            e.0 += 1;
            e.1 += l.is_fraud() as usize;
        }
        let table = counts
            .into_iter()
            .map(|(c, (n, frauds))| {
                let n = n as f64;
                let mean = frauds as f64 / n;
                let encoded = if smoothing.is_infinite() {
                    global_mean
                } else {
                    (n * mean + smoothing * global_mean) / (n + smoothing)
                };
                (c.to_owned(), encoded)
            })
            .collect();
        Ok(Self {
            smoothing,
            global_mean,
            table,
        })
    }

    /// Unseen categories fall back to the training fraud rate.
    pub fn encode(&self, category: &str) -> f64 {
        self.table.get(category).copied().unwrap_or(self.global_mean)
    }
}

/// Fits an encoder on one categorical column and encodes that column.
pub fn target_encode(column: &[&str], labels: &[Label], smoothing: f64) -> Result<(Vec<f64>, TargetEncoder)> {
    let enc = TargetEncoder::fit(column, labels, smoothing)?;
    Ok((column.iter().map(|c| enc.encode(c)).collect(), enc))
}

/// Training-split median per numeric column, used to fill missing values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MedianImputer {
    pub medians: Vec<f64>,
}

impl MedianImputer {
    /// Columns with no observed value get 0.
    pub fn fit(rows: &[&[Option<f64>]], width: usize) -> Self {
        let medians = (0..width)
            .map(|j| {
                let mut seen: Vec<f64> = rows.iter().filter_map(|r| r[j]).collect();
                if seen.is_empty() {
                    return 0.0;
                }
                seen.sort_by(f64::total_cmp);
                let mid = seen.len() / 2;
                if seen.len() % 2 == 1 {
                    seen[mid]
                } else {
                    0.5 * (seen[mid - 1] + seen[mid])
                }
            })
            .collect();
        Self { medians }
    }

    pub fn fill(&self, row: &[Option<f64>]) -> Vec<f64> {
        row.iter().zip(&self.medians).map(|(v, &m)| v.unwrap_or(m)).collect()
    }
}
