use std::path::Path;

use chrono::{NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lde_net::Normalization;
use crate::stats;

/// An ordered univariate series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesDataset {
    /// Sortable time keys: days since 1970-01-01 for dates, seconds for
    /// date-times, the raw number for numeric stamps, the row index if none.
    pub timestamps: Vec<f64>,
    pub values: Vec<f64>,
    pub source: String,
}

impl SeriesDataset {
    /// Validates ordering and finiteness.
    pub fn new(timestamps: Vec<f64>, values: Vec<f64>, source: impl Into<String>) -> Result<Self> {
        Self::checked(timestamps, values, source.into(), 1)
    }

    /// `first_line` is the line of the first value, used in error messages.
    fn checked(timestamps: Vec<f64>, values: Vec<f64>, source: String, first_line: usize) -> Result<Self> {
        if timestamps.len() != values.len() {
            return Err(Error::shape("timestamps and values differ in length"));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Parse {
                row: first_line + i,
                message: format!("non-finite value {}", values[i]),
            });
        }
        if let Some(i) = timestamps.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(Error::Ordering {
                row: first_line + i + 1,
            });
        }
        Ok(Self {
            timestamps,
            values,
            source,
        })
    }

    pub fn from_values(values: Vec<f64>, source: impl Into<String>) -> Result<Self> {
        let timestamps = (0..values.len()).map(|i| i as f64).collect();
        Self::new(timestamps, values, source)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

fn parse_timestamp(raw: &str) -> Option<f64> {
    let raw = raw.trim();
    if let Ok(v) = raw.parse::<f64>() {
        return v.is_finite().then_some(v);
    }
    let epoch = NaiveDate::from_ymd_opt(1970, 1, 1)?;
    for fmt in ["%Y-%m-%d", "%Y/%m/%d", "%Y%m%d"] {
        if let Ok(d) = NaiveDate::parse_from_str(raw, fmt) {
            return Some((d - epoch).num_days() as f64);
        }
    }
    for fmt in ["%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M:%S"] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(raw, fmt) {
            return Some(dt.and_utc().timestamp() as f64 / 86_400.0);
        }
    }
    None
}

fn column(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| Error::invalid(format!("column `{name}` not found")))
}

/// Reads `value_column` (and optionally `timestamp_column`) from a headed CSV.
/// Row numbers in errors are file line numbers, the header being line 1.
pub fn load_csv(path: &Path, value_column: &str, timestamp_column: Option<&str>) -> Result<SeriesDataset> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let headers = reader.headers()?.clone();
    let vcol = column(&headers, value_column)?;
    let tcol = timestamp_column.map(|t| column(&headers, t)).transpose()?;
    let mut timestamps = Vec::new();
    let mut values = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record?;
        let field = |c: usize| {
            record.get(c).ok_or_else(|| Error::Parse {
                row: line,
                message: format!("missing column {c}"),
            })
        };
        let raw = field(vcol)?.trim();
        let v: f64 = raw.parse().map_err(|_| Error::Parse {
            row: line,
            message: format!("cannot parse `{raw}` as a number"),
        })?;
        if !v.is_finite() {
            return Err(Error::Parse {
                row: line,
                message: format!("non-finite value `{raw}`"),
            });
        }
        let t = match tcol {
            Some(c) => {
                let raw = field(c)?;
                parse_timestamp(raw).ok_or_else(|| Error::Parse {
                    row: line,
                    message: format!("cannot parse timestamp `{raw}`"),
                })?
            }
            None => i as f64,
        };
        timestamps.push(t);
        values.push(v);
    }
    if values.len() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            got: values.len(),
        });
    }
    SeriesDataset::checked(timestamps, values, path.display().to_string(), 2)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalizationKind {
    #[default]
    MinMax,
    ZScore,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub normalization: NormalizationKind,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_fraction: 0.8,
            normalization: NormalizationKind::MinMax,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::invalid(format!(
                "train fraction must lie in (0, 1), got {}",
                self.train_fraction
            )));
        }
        Ok(())
    }
}

/// Chronological train/test split in normalized units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<f64>,
    pub test: Vec<f64>,
    pub normalization: Normalization,
    /// Test values outside the train range (min-max only).
    pub out_of_range: usize,
}

pub const MIN_SPLIT_LEN: usize = 10;

pub fn fit_normalization(train: &[f64], kind: NormalizationKind) -> Result<Normalization> {
    match kind {
        NormalizationKind::MinMax => {
            let min = train.iter().cloned().fold(f64::INFINITY, f64::min);
            let max = train.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if !(max > min) {
                return Err(Error::ConstantSeries);
            }
            Ok(Normalization::MinMax { min, max })
        }
        NormalizationKind::ZScore => {
            let std = stats::sample_variance(train).sqrt();
            if !(std > 0.0) {
                return Err(Error::ConstantSeries);
            }
            Ok(Normalization::ZScore {
                mean: stats::mean(train),
                std,
            })
        }
    }
}

/// First `⌊n·fraction⌋` values train, the rest test; scaling fitted on train.
pub fn split_and_normalize(dataset: &SeriesDataset, spec: &SplitSpec) -> Result<Split> {
    spec.validate()?;
    let n = dataset.len();
    if n < MIN_SPLIT_LEN {
        return Err(Error::InsufficientData {
            needed: MIN_SPLIT_LEN,
            got: n,
        });
    }
    let n_train = ((n as f64 * spec.train_fraction).floor() as usize).clamp(1, n - 1);
    let (raw_train, raw_test) = dataset.values.split_at(n_train);
    let normalization = fit_normalization(raw_train, spec.normalization)?;
    let train: Vec<f64> = raw_train.iter().map(|&v| normalization.forward(v)).collect();
    let test: Vec<f64> = raw_test.iter().map(|&v| normalization.forward(v)).collect();
    let out_of_range = match spec.normalization {
        NormalizationKind::MinMax => test.iter().filter(|v| !(0.0..=1.0).contains(*v)).count(),
        NormalizationKind::ZScore => 0,
    };
    if out_of_range > 0 {
        log::warn!("{out_of_range} test values fall outside the training range");
    }
    Ok(Split {
        train,
        test,
        normalization,
        out_of_range,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_sizes() {
        let ds = SeriesDataset::from_values((0..100).map(|v| v as f64).collect(), "t").unwrap();
        let s = split_and_normalize(&ds, &SplitSpec::default()).unwrap();
        assert_eq!((s.train.len(), s.test.len()), (80, 20));
        assert_eq!(s.train[0], 0.0);
        assert_eq!(s.train[79], 1.0);
        assert_eq!(s.out_of_range, 20);
    }

    #[test]
    fn out_of_range_value_maps_affinely() {
        let mut values: Vec<f64> = (0..8).map(|i| 10.0 + 10.0 * i as f64 / 7.0).collect();
        values.extend([25.0, 15.0]);
        let ds = SeriesDataset::from_values(values, "t").unwrap();
        let s = split_and_normalize(&ds, &SplitSpec::default()).unwrap();
        assert!((s.test[0] - 1.5).abs() < 1e-12);
        assert_eq!(s.out_of_range, 1);
    }

    #[test]
    fn constant_train_is_rejected() {
        let mut values = vec![3.0; 8];
        values.extend([1.0, 2.0]);
        let ds = SeriesDataset::from_values(values, "t").unwrap();
        assert!(matches!(
            split_and_normalize(&ds, &SplitSpec::default()),
            Err(Error::ConstantSeries)
        ));
    }

    #[test]
    fn short_series_is_rejected() {
        let ds = SeriesDataset::from_values(vec![1.0, 2.0, 3.0], "t").unwrap();
        assert!(split_and_normalize(&ds, &SplitSpec::default()).is_err());
    }

    #[test]
    fn timestamps_parse() {
        assert_eq!(parse_timestamp("1970-01-11"), Some(10.0));
        assert_eq!(parse_timestamp("42"), Some(42.0));
        assert_eq!(parse_timestamp("2020-02-30"), None);
        assert!(parse_timestamp("2021-03-04 10:00:00").is_some());
    }
}
