//! Daily return / realized-variance files, intraday realized variance, and
//! dataset validation.

use std::collections::HashMap;
use std::path::Path;

use chrono::{NaiveDate, NaiveDateTime};
use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::JointSeries;

/// Realized variances below this are raised to it so that `log x` stays finite.
pub const RV_FLOOR: f64 = 1e-8;

/// Calendar days between consecutive records beyond which a gap is reported.
pub const GAP_DAYS: i64 = 5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriceBar {
    pub timestamp: NaiveDateTime,
    pub price: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DailyRecord {
    pub date: NaiveDate,
    pub close: f64,
    pub rv: f64,
}

/// Percentage log returns `100 (log C_t - log C_{t-1})`.
pub fn compute_returns(closes: &[f64]) -> Result<Vec<f64>> {
    if closes.len() < 2 {
        return Err(Error::InsufficientData(format!("need at least 2 closes, got {}", closes.len())));
    }
    if let Some(i) = closes.iter().position(|c| !(*c > 0.0 && c.is_finite())) {
        return Err(Error::data(format!("close {i} is not a positive number: {}", closes[i])));
    }
    Ok(closes.windows(2).map(|w| 100.0 * (w[1].ln() - w[0].ln())).collect())
}

/// Sum of squared intraday percentage log returns over one day.
pub fn compute_rv(bars: &[PriceBar]) -> Result<f64> {
    if bars.len() < 2 {
        return Err(Error::InsufficientData(format!("need at least 2 bars, got {}", bars.len())));
    }
    for w in bars.windows(2) {
        if w[1].timestamp <= w[0].timestamp {
            return Err(Error::data(format!("bar timestamps not increasing at {}", w[1].timestamp)));
        }
    }
    let prices: Vec<f64> = bars.iter().map(|b| b.price).collect();
    Ok(compute_returns(&prices)?.iter().map(|r| r * r).sum())
}

pub fn floor_rv(date: NaiveDate, rv: f64) -> f64 {
    if rv < RV_FLOOR {
        warn!("{date}: realized variance {rv} raised to {RV_FLOOR}");
        RV_FLOOR
    } else {
        rv
    }
}

/// Daily records from intraday bars: the last price of each day is its close.
pub fn daily_from_bars(bars: &[PriceBar]) -> Result<Vec<DailyRecord>> {
    let mut by_day: Vec<(NaiveDate, Vec<PriceBar>)> = Vec::new();
    for b in bars {
        let d = b.timestamp.date();
        match by_day.last_mut() {
            Some((day, v)) if *day == d => v.push(*b),
            Some((day, _)) if *day > d => {
                return Err(Error::data(format!("bars out of order: {d} after {day}")));
            }
            _ => by_day.push((d, vec![*b])),
        }
    }
    by_day
        .into_iter()
        .map(|(date, v)| {
            let rv = floor_rv(date, compute_rv(&v)?);
            Ok(DailyRecord { date, close: v.last().expect("non-empty day").price, rv })
        })
        .collect()
}

/// Which value column a daily file carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Schema {
    Close,
    Return,
}

impl Schema {
    fn column(self) -> &'static str {
        match self {
            Schema::Close => "close",
            Schema::Return => "return",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawRow {
    /// 1-based line in the source file.
    pub line: usize,
    pub date: NaiveDate,
    pub value: f64,
    pub rv: f64,
}

/// Parsed but unvalidated daily file.
#[derive(Debug, Clone, PartialEq)]
pub struct DailyTable {
    pub schema: Schema,
    pub rows: Vec<RawRow>,
}

pub fn read_daily_csv(path: &Path) -> Result<DailyTable> {
    let mut rd = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Schema { path: path.to_path_buf(), message: format!("{other:?}") },
    })?;
    let header: Vec<String> = rd.headers()?.iter().map(|h| h.to_ascii_lowercase()).collect();
    let schema = match header.iter().map(String::as_str).collect::<Vec<_>>().as_slice() {
        ["date", "close", "rv"] => Schema::Close,
        ["date", "return", "rv"] => Schema::Return,
        _ => {
            return Err(Error::Schema {
                path: path.to_path_buf(),
                message: format!("expected columns (date, close, rv) or (date, return, rv), found {header:?}"),
            })
        }
    };
    let mut rows = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let bad = |message: String| Error::Parse { path: path.to_path_buf(), line, message };
        if rec.len() != 3 {
            return Err(bad(format!("expected 3 fields, found {}", rec.len())));
        }
        let date =
            NaiveDate::parse_from_str(&rec[0], "%Y-%m-%d").map_err(|e| bad(format!("date '{}': {e}", &rec[0])))?;
        let num = |i: usize, name: &str| -> Result<f64> {
            rec[i].parse::<f64>().map_err(|e| bad(format!("{name} '{}': {e}", &rec[i])))
        };
        rows.push(RawRow { line, date, value: num(1, schema.column())?, rv: num(2, "rv")? });
    }
    Ok(DailyTable { schema, rows })
}

/// Writes the table in canonical form; floats use the shortest exact representation.
pub fn write_daily_csv(path: &Path, table: &DailyTable) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["date", table.schema.column(), "rv"])?;
    for r in &table.rows {
        w.write_record([r.date.format("%Y-%m-%d").to_string(), format!("{}", r.value), format!("{}", r.rv)])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_series_csv(path: &Path, series: &JointSeries) -> Result<()> {
    let table = DailyTable {
        schema: Schema::Return,
        rows: series
            .dates()
            .iter()
            .zip(series.returns())
            .zip(series.realized())
            .enumerate()
            .map(|(i, ((&date, &value), &rv))| RawRow { line: i + 2, date, value, rv })
            .collect(),
    };
    write_daily_csv(path, &table)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum IssueKind {
    NonPositiveRv,
    NonPositiveClose,
    NonFinite,
    DuplicateDate,
    OutOfOrder,
    Gap,
}

impl IssueKind {
    /// Gaps are reported but do not invalidate the file.
    pub fn is_failure(self) -> bool {
        !matches!(self, IssueKind::Gap)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Issue {
    pub line: usize,
    pub date: NaiveDate,
    pub kind: IssueKind,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub schema: Schema,
    pub rows: usize,
    pub valid: bool,
    pub first_date: Option<NaiveDate>,
    pub last_date: Option<NaiveDate>,
    pub issues: Vec<Issue>,
}

impl ValidationReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Issue> {
        self.issues.iter().filter(|i| i.kind.is_failure())
    }
}

pub fn validate(table: &DailyTable) -> ValidationReport {
    let mut issues = Vec::new();
    let mut push = |r: &RawRow, kind, message: String| issues.push(Issue { line: r.line, date: r.date, kind, message });
    let mut seen: HashMap<NaiveDate, usize> = HashMap::new();
    for (i, r) in table.rows.iter().enumerate() {
        if !r.value.is_finite() || !r.rv.is_finite() {
            push(r, IssueKind::NonFinite, format!("non-finite value ({}, {})", r.value, r.rv));
        }
        if !(r.rv > 0.0) {
            push(r, IssueKind::NonPositiveRv, format!("rv = {}", r.rv));
        }
        if table.schema == Schema::Close && !(r.value > 0.0) {
            push(r, IssueKind::NonPositiveClose, format!("close = {}", r.value));
        }
        if let Some(first) = seen.insert(r.date, r.line) {
            push(r, IssueKind::DuplicateDate, format!("{} already on line {first}", r.date));
        }
        if i > 0 {
            let prev = &table.rows[i - 1];
            let days = (r.date - prev.date).num_days();
            if days < 0 {
                push(r, IssueKind::OutOfOrder, format!("{} follows {}", r.date, prev.date));
            } else if days > GAP_DAYS {
                push(r, IssueKind::Gap, format!("{days} calendar days since {}", prev.date));
            }
        }
    }
    let valid = !issues.iter().any(|i: &Issue| i.kind.is_failure());
    ValidationReport {
        schema: table.schema,
        rows: table.rows.len(),
        valid,
        first_date: table.rows.first().map(|r| r.date),
        last_date: table.rows.last().map(|r| r.date),
        issues,
    }
}

/// Aligned return / realized-variance series. Close-price files lose their
/// first row to differencing.
pub fn to_series(table: &DailyTable) -> Result<JointSeries> {
    match table.schema {
        Schema::Return => JointSeries::new(
            table.rows.iter().map(|r| r.date).collect(),
            table.rows.iter().map(|r| r.value).collect(),
            table.rows.iter().map(|r| r.rv).collect(),
        ),
        Schema::Close => {
            let closes: Vec<f64> = table.rows.iter().map(|r| r.value).collect();
            let r = compute_returns(&closes)?;
            let rest = &table.rows[1..];
            JointSeries::new(rest.iter().map(|r| r.date).collect(), r, rest.iter().map(|r| r.rv).collect())
        }
    }
}

/// Reads, validates, and aligns a daily file; any failing row is an error.
pub fn load_joint_csv(path: &Path) -> Result<JointSeries> {
    let table = read_daily_csv(path)?;
    let report = validate(&table);
    for gap in report.issues.iter().filter(|i| !i.kind.is_failure()) {
        warn!("{}:{}: {}", path.display(), gap.line, gap.message);
    }
    if !report.valid {
        let listed: Vec<String> = report.failures().map(|i| format!("line {}: {}", i.line, i.message)).collect();
        return Err(Error::Schema { path: path.to_path_buf(), message: listed.join("; ") });
    }
    to_series(&table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn ts(d: u32, h: u32, m: u32) -> NaiveDateTime {
        NaiveDate::from_ymd_opt(2020, 3, d).unwrap().and_hms_opt(h, m, 0).unwrap()
    }

    #[test]
    fn returns_examples() {
        assert_eq!(compute_returns(&[100.0, 100.0]).unwrap(), vec![0.0]);
        assert_relative_eq!(compute_returns(&[100.0, 101.0]).unwrap()[0], 0.995_033, epsilon = 1e-6);
        assert!(compute_returns(&[100.0, 0.0]).is_err());
        assert!(compute_returns(&[100.0]).is_err());
    }

    #[test]
    fn reversed_prices_negate_returns() {
        let c = [100.0, 103.0, 99.5, 101.2, 100.7];
        let fwd = compute_returns(&c).unwrap();
        let mut rc = c;
        rc.reverse();
        let back = compute_returns(&rc).unwrap();
        for (a, b) in fwd.iter().rev().zip(&back) {
            assert_relative_eq!(*a, -b, epsilon = 1e-12);
        }
    }

    #[test]
    fn rv_examples() {
        let bars =
            [PriceBar { timestamp: ts(2, 10, 0), price: 100.0 }, PriceBar { timestamp: ts(2, 10, 5), price: 101.0 }];
        assert_relative_eq!(compute_rv(&bars).unwrap(), 0.990_091, epsilon = 1e-6);
        let flat =
            [PriceBar { timestamp: ts(2, 10, 0), price: 50.0 }, PriceBar { timestamp: ts(2, 10, 5), price: 50.0 }];
        assert_eq!(compute_rv(&flat).unwrap(), 0.0);
        assert!(matches!(compute_rv(&bars[..1]), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn rv_is_scale_invariant() {
        let prices = [100.0, 100.4, 99.8, 100.9, 101.3];
        let bars: Vec<PriceBar> = prices
            .iter()
            .enumerate()
            .map(|(i, &p)| PriceBar { timestamp: ts(2, 10, 5 * i as u32), price: p })
            .collect();
        let scaled: Vec<PriceBar> = bars.iter().map(|b| PriceBar { price: b.price * 37.0, ..*b }).collect();
        assert_relative_eq!(compute_rv(&bars).unwrap(), compute_rv(&scaled).unwrap(), max_relative = 1e-10);
    }

    #[test]
    fn daily_records_floor_flat_days() {
        let bars = [
            PriceBar { timestamp: ts(2, 10, 0), price: 50.0 },
            PriceBar { timestamp: ts(2, 16, 0), price: 50.0 },
            PriceBar { timestamp: ts(3, 10, 0), price: 50.0 },
            PriceBar { timestamp: ts(3, 16, 0), price: 51.0 },
        ];
        let days = daily_from_bars(&bars).unwrap();
        assert_eq!(days.len(), 2);
        assert_eq!(days[0].rv, RV_FLOOR);
        assert_eq!(days[1].close, 51.0);
    }
}
