//! Returns ingestion, rolling windows and per-window statistics.
//!
//! A [`ReturnsPanel`] stores returns asset-major (`values[asset][period]`),
//! regardless of the CSV layout (one row per period) it was read from.

use std::collections::HashSet;
use std::io::Read;
use std::ops::Range;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Date format accepted in the `date` column.
pub const DATE_FORMAT: &str = "%Y-%m-%d";

#[derive(Debug, Error)]
pub enum MarketDataError {
    #[error("malformed CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("first column header must be \"date\", found {0:?}")]
    MissingDateColumn(String),
    #[error("benchmark column {0:?} not found")]
    MissingBenchmark(String),
    #[error("missing cell at row {row}, column {column:?}")]
    MissingCell { row: usize, column: String },
    #[error("row {row} has {found} cells, expected {expected}")]
    RaggedRow {
        row: usize,
        found: usize,
        expected: usize,
    },
    #[error("cannot parse {value:?} at row {row}, column {column:?} as a number")]
    BadNumber {
        row: usize,
        column: String,
        value: String,
    },
    #[error("non-finite value at row {row}, column {column:?}")]
    NonFinite { row: usize, column: String },
    #[error("cannot parse date {value:?} at row {row} (expected YYYY-MM-DD)")]
    BadDate { row: usize, value: String },
    #[error("dates out of order at row {row}: {date} does not follow {previous}")]
    DatesOutOfOrder {
        row: usize,
        date: NaiveDate,
        previous: NaiveDate,
    },
    #[error("duplicate date {date} at row {row}")]
    DuplicateDate { row: usize, date: NaiveDate },
    #[error("duplicate asset id {0:?}")]
    DuplicateAsset(String),
    #[error("need at least 2 assets, found {0}")]
    TooFewAssets(usize),
    #[error("need at least 2 periods, found {0}")]
    TooFewPeriods(usize),
    #[error("values matrix is {rows}x{cols}, expected {expected_rows}x{expected_cols}")]
    ShapeMismatch {
        rows: usize,
        cols: usize,
        expected_rows: usize,
        expected_cols: usize,
    },
    #[error("benchmark index {index} out of range for {n_assets} assets")]
    BadBenchmarkIndex { index: usize, n_assets: usize },
    #[error("window length {length} exceeds series length {periods}")]
    WindowTooLong { length: usize, periods: usize },
    #[error("invalid window spec: length {length} (>= 2 required), stride {stride} (>= 1 required)")]
    InvalidWindowSpec { length: usize, stride: usize },
    #[error("range {start}..{end} is not a valid window over {periods} periods (need >= 2 periods)")]
    BadRange {
        start: usize,
        end: usize,
        periods: usize,
    },
}

/// Dated asset-returns matrix with a designated benchmark series.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnsPanel {
    dates: Vec<NaiveDate>,
    asset_ids: Vec<String>,
    values: Vec<Vec<f64>>,
    benchmark_index: usize,
}

impl ReturnsPanel {
    /// Builds a panel from asset-major values (`values[i]` is asset `i`'s series).
    pub fn new(
        dates: Vec<NaiveDate>,
        asset_ids: Vec<String>,
        values: Vec<Vec<f64>>,
        benchmark_index: usize,
    ) -> Result<Self, MarketDataError> {
        let n = asset_ids.len();
        let t = dates.len();
        if n < 2 {
            return Err(MarketDataError::TooFewAssets(n));
        }
        if t < 2 {
            return Err(MarketDataError::TooFewPeriods(t));
        }
        if values.len() != n || values.iter().any(|row| row.len() != t) {
            return Err(MarketDataError::ShapeMismatch {
                rows: values.len(),
                cols: values.first().map_or(0, Vec::len),
                expected_rows: n,
                expected_cols: t,
            });
        }
        if benchmark_index >= n {
            return Err(MarketDataError::BadBenchmarkIndex {
                index: benchmark_index,
                n_assets: n,
            });
        }
        let mut seen = HashSet::new();
        for id in &asset_ids {
            if !seen.insert(id.as_str()) {
                return Err(MarketDataError::DuplicateAsset(id.clone()));
            }
        }
        for (k, pair) in dates.windows(2).enumerate() {
            if pair[1] == pair[0] {
                return Err(MarketDataError::DuplicateDate {
                    row: k + 1,
                    date: pair[1],
                });
            }
            if pair[1] < pair[0] {
                return Err(MarketDataError::DatesOutOfOrder {
                    row: k + 1,
                    date: pair[1],
                    previous: pair[0],
                });
            }
        }
        for (i, row) in values.iter().enumerate() {
            if let Some(k) = row.iter().position(|v| !v.is_finite()) {
                return Err(MarketDataError::NonFinite {
                    row: k,
                    column: asset_ids[i].clone(),
                });
            }
        }
        Ok(Self {
            dates,
            asset_ids,
            values,
            benchmark_index,
        })
    }

    pub fn n_assets(&self) -> usize {
        self.asset_ids.len()
    }

    pub fn n_periods(&self) -> usize {
        self.dates.len()
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn asset_ids(&self) -> &[String] {
        &self.asset_ids
    }

    /// Asset-major returns, `values()[asset][period]`.
    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn benchmark_index(&self) -> usize {
        self.benchmark_index
    }

    pub fn benchmark_id(&self) -> &str {
        &self.asset_ids[self.benchmark_index]
    }

    /// Copies the N x W block of returns covering `range`.
    pub fn window_returns(&self, range: Range<usize>) -> Vec<Vec<f64>> {
        self.values.iter().map(|row| row[range.clone()].to_vec()).collect()
    }

    /// Benchmark returns over `range`.
    pub fn benchmark_returns(&self, range: Range<usize>) -> &[f64] {
        &self.values[self.benchmark_index][range]
    }

    /// Indices of the periods whose dates fall in `[start, end]`.
    pub fn date_range(&self, start: NaiveDate, end: NaiveDate) -> Range<usize> {
        let lo = self.dates.partition_point(|d| *d < start);
        let hi = self.dates.partition_point(|d| *d <= end);
        lo..hi.max(lo)
    }
}

/// Reads a returns CSV (`date` column followed by one column per asset).
pub fn load_returns<R: Read>(source: R, benchmark_id: &str) -> Result<ReturnsPanel, MarketDataError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(source);
    let headers = reader.headers()?.clone();
    let first = headers.get(0).unwrap_or_default();
    if first != "date" {
        return Err(MarketDataError::MissingDateColumn(first.to_string()));
    }
    let asset_ids: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
    let benchmark_index = asset_ids
        .iter()
        .position(|id| id == benchmark_id)
        .ok_or_else(|| MarketDataError::MissingBenchmark(benchmark_id.to_string()))?;

    let mut dates = Vec::new();
    let mut values = vec![Vec::new(); asset_ids.len()];
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() != headers.len() {
            return Err(MarketDataError::RaggedRow {
                row,
                found: record.len(),
                expected: headers.len(),
            });
        }
        let raw_date = &record[0];
        let date = NaiveDate::parse_from_str(raw_date, DATE_FORMAT).map_err(|_| {
            MarketDataError::BadDate {
                row,
                value: raw_date.to_string(),
            }
        })?;
        dates.push(date);
        for (i, cell) in record.iter().skip(1).enumerate() {
            if cell.is_empty() {
                return Err(MarketDataError::MissingCell {
                    row,
                    column: asset_ids[i].clone(),
                });
            }
            let value: f64 = cell.parse().map_err(|_| MarketDataError::BadNumber {
                row,
                column: asset_ids[i].clone(),
                value: cell.to_string(),
            })?;
            if !value.is_finite() {
                return Err(MarketDataError::NonFinite {
                    row,
                    column: asset_ids[i].clone(),
                });
            }
            values[i].push(value);
        }
    }
    ReturnsPanel::new(dates, asset_ids, values, benchmark_index)
}

/// Rolling-window geometry in periods.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub length: usize,
    pub stride: usize,
}

impl Default for WindowSpec {
    fn default() -> Self {
        Self {
            length: 252,
            stride: 21,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub index: usize,
    pub start: usize,
    pub end: usize,
}

impl Window {
    pub fn range(&self) -> Range<usize> {
        self.start..self.end
    }
}

/// Enumerates `[k*stride, k*stride + length)` for every k whose window fits in the panel.
pub fn windows(panel: &ReturnsPanel, spec: WindowSpec) -> Result<Vec<Window>, MarketDataError> {
    window_ranges(panel.n_periods(), spec)
}

pub(crate) fn window_ranges(periods: usize, spec: WindowSpec) -> Result<Vec<Window>, MarketDataError> {
    if spec.length < 2 || spec.stride < 1 {
        return Err(MarketDataError::InvalidWindowSpec {
            length: spec.length,
            stride: spec.stride,
        });
    }
    if spec.length > periods {
        return Err(MarketDataError::WindowTooLong {
            length: spec.length,
            periods,
        });
    }
    Ok((0..)
        .map(|k| k * spec.stride)
        .take_while(|start| start + spec.length <= periods)
        .enumerate()
        .map(|(index, start)| Window {
            index,
            start,
            end: start + spec.length,
        })
        .collect())
}

/// Mean vector, sample covariance and benchmark volatility of one window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowStats {
    pub window_index: usize,
    pub mu: Vec<f64>,
    pub cov: Vec<Vec<f64>>,
    pub benchmark_sigma: f64,
}

/// Per-asset means and the (W-1)-denominator covariance over `range`.
///
/// Only the upper triangle is computed; the lower triangle is a mirror, so the
/// stored matrix is exactly symmetric.
pub fn window_stats(
    panel: &ReturnsPanel,
    range: Range<usize>,
    window_index: usize,
) -> Result<WindowStats, MarketDataError> {
    if range.end > panel.n_periods() || range.end < range.start + 2 {
        return Err(MarketDataError::BadRange {
            start: range.start,
            end: range.end,
            periods: panel.n_periods(),
        });
    }
    let block: Vec<&[f64]> = panel.values.iter().map(|row| &row[range.clone()]).collect();
    let (mu, cov) = mean_and_covariance(&block);
    let b = panel.benchmark_index;
    Ok(WindowStats {
        window_index,
        benchmark_sigma: cov[b][b].max(0.0).sqrt(),
        mu,
        cov,
    })
}

pub(crate) fn mean_and_covariance(block: &[&[f64]]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = block.len();
    let w = block.first().map_or(0, |row| row.len());
    let mu: Vec<f64> = block
        .iter()
        .map(|row| row.iter().sum::<f64>() / w as f64)
        .collect();
    let centered: Vec<Vec<f64>> = block
        .iter()
        .zip(&mu)
        .map(|(row, m)| row.iter().map(|r| r - m).collect())
        .collect();
    let denom = (w - 1) as f64;
    let mut cov = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i..n {
            let s: f64 = centered[i]
                .iter()
                .zip(&centered[j])
                .map(|(a, b)| a * b)
                .sum();
            cov[i][j] = s / denom;
            cov[j][i] = cov[i][j];
        }
    }
    (mu, cov)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, DATE_FORMAT).unwrap()
    }

    const TINY: &str = "date,A,SPY\n\
        2020-01-01,0.01,0.02\n\
        2020-01-02,-0.01,0.00\n\
        2020-01-03,0.02,-0.01\n\
        2020-01-06,0.00,0.01\n";

    #[test]
    fn loads_tiny_file() {
        let panel = load_returns(TINY.as_bytes(), "SPY").unwrap();
        assert_eq!(panel.n_assets(), 2);
        assert_eq!(panel.n_periods(), 4);
        assert_eq!(panel.benchmark_index(), 1);
        assert_eq!(panel.values()[0], vec![0.01, -0.01, 0.02, 0.0]);
        assert_eq!(panel.dates()[3], d("2020-01-06"));
    }

    #[test]
    fn blank_cell_names_row_and_column() {
        let src = "date,A,SPY\n2020-01-01,0.01,0.02\n2020-01-02,,0.00\n";
        match load_returns(src.as_bytes(), "SPY") {
            Err(MarketDataError::MissingCell { row, column }) => {
                assert_eq!(row, 1);
                assert_eq!(column, "A");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn out_of_order_dates_rejected() {
        let src = "date,A,SPY\n2020-01-02,0.01,0.02\n2020-01-01,0.0,0.00\n";
        assert!(matches!(
            load_returns(src.as_bytes(), "SPY"),
            Err(MarketDataError::DatesOutOfOrder { row: 1, .. })
        ));
    }

    #[test]
    fn other_validation_errors() {
        let dup_date = "date,A,SPY\n2020-01-01,0.01,0.02\n2020-01-01,0.0,0.00\n";
        assert!(matches!(
            load_returns(dup_date.as_bytes(), "SPY"),
            Err(MarketDataError::DuplicateDate { .. })
        ));
        let dup_asset = "date,A,A\n2020-01-01,0.01,0.02\n2020-01-02,0.0,0.00\n";
        assert!(matches!(
            load_returns(dup_asset.as_bytes(), "A"),
            Err(MarketDataError::DuplicateAsset(_))
        ));
        assert!(matches!(
            load_returns(TINY.as_bytes(), "QQQ"),
            Err(MarketDataError::MissingBenchmark(_))
        ));
        let nan = "date,A,SPY\n2020-01-01,NaN,0.02\n2020-01-02,0.0,0.00\n";
        assert!(matches!(
            load_returns(nan.as_bytes(), "SPY"),
            Err(MarketDataError::NonFinite { row: 0, .. })
        ));
        let junk = "date,A,SPY\n2020-01-01,abc,0.02\n2020-01-02,0.0,0.00\n";
        assert!(matches!(
            load_returns(junk.as_bytes(), "SPY"),
            Err(MarketDataError::BadNumber { .. })
        ));
        let no_date = "day,A,SPY\n2020-01-01,0.1,0.02\n";
        assert!(matches!(
            load_returns(no_date.as_bytes(), "SPY"),
            Err(MarketDataError::MissingDateColumn(_))
        ));
        let ragged = "date,A,SPY\n2020-01-01,0.1\n";
        assert!(matches!(
            load_returns(ragged.as_bytes(), "SPY"),
            Err(MarketDataError::RaggedRow { .. })
        ));
    }

    #[test]
    fn window_geometry() {
        let ranges = |t, length, stride| {
            window_ranges(t, WindowSpec { length, stride })
                .map(|ws| ws.iter().map(|w| (w.start, w.end)).collect::<Vec<_>>())
        };
        assert_eq!(ranges(10, 4, 3).unwrap(), vec![(0, 4), (3, 7), (6, 10)]);
        assert_eq!(ranges(4, 4, 1).unwrap(), vec![(0, 4)]);
        assert!(matches!(
            ranges(3, 5, 1),
            Err(MarketDataError::WindowTooLong { .. })
        ));
        assert!(ranges(10, 1, 1).is_err());
        assert!(ranges(10, 2, 0).is_err());
    }

    fn panel_from(values: Vec<Vec<f64>>) -> ReturnsPanel {
        let t = values[0].len();
        let dates = (0..t)
            .map(|k| d("2021-01-01") + chrono::Days::new(k as u64))
            .collect();
        let ids = (0..values.len()).map(|i| format!("A{i}")).collect();
        ReturnsPanel::new(dates, ids, values, 0).unwrap()
    }

    #[test]
    fn constant_series_has_zero_stats() {
        let panel = panel_from(vec![vec![0.0; 3], vec![0.0; 3]]);
        let s = window_stats(&panel, 0..3, 0).unwrap();
        assert_eq!(s.mu, vec![0.0, 0.0]);
        assert!(s.cov.iter().flatten().all(|c| *c == 0.0));
        assert_eq!(s.benchmark_sigma, 0.0);
    }

    #[test]
    fn two_identical_assets_hand_values() {
        let panel = panel_from(vec![vec![0.01, -0.01], vec![0.01, -0.01]]);
        let s = window_stats(&panel, 0..2, 0).unwrap();
        assert_eq!(s.mu, vec![0.0, 0.0]);
        for c in s.cov.iter().flatten() {
            assert!((c - 0.0002).abs() < 1e-18, "{c}");
        }
        assert!((s.benchmark_sigma - 0.0002f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn short_range_rejected() {
        let panel = panel_from(vec![vec![0.01, -0.01], vec![0.01, -0.01]]);
        assert!(window_stats(&panel, 0..1, 0).is_err());
        assert!(window_stats(&panel, 0..3, 0).is_err());
    }

    #[test]
    fn date_range_lookup() {
        let panel = load_returns(TINY.as_bytes(), "SPY").unwrap();
        assert_eq!(panel.date_range(d("2020-01-02"), d("2020-01-05")), 1..3);
        assert_eq!(panel.date_range(d("2019-01-01"), d("2019-12-31")), 0..0);
        assert_eq!(panel.date_range(d("2020-01-01"), d("2030-01-01")), 0..4);
    }
}
