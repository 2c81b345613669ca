//! Historical price files: parsing, day paths and train/test selection.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use chrono::{DateTime, Datelike, Duration, NaiveDate, NaiveDateTime, Timelike, Weekday};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::DEFAULT_PRICE_BOUND;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriceRecord {
    /// Market-local wall-clock time.
    pub timestamp: NaiveDateTime,
    pub price: f64,
}

const NAIVE_FORMATS: &[&str] = &[
    "%Y-%m-%d %H:%M:%S",
    "%Y-%m-%dT%H:%M:%S",
    "%Y-%m-%d %H:%M",
    "%Y-%m-%dT%H:%M",
    "%m/%d/%Y %H:%M:%S",
    "%m/%d/%Y %H:%M",
];

/// Parses a timestamp; values with a UTC offset keep their local wall-clock time.
pub fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    let s = s.trim();
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Some(t.naive_local());
    }
    if let Ok(t) = DateTime::parse_from_str(s, "%Y-%m-%d %H:%M:%S%:z") {
        return Some(t.naive_local());
    }
    NAIVE_FORMATS
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
}

/// Reads `timestamp,price` rows. Bad rows are reported together with their
/// line numbers; out-of-order rows are sorted with a warning.
pub fn parse_prices<R: Read>(reader: R, source: &Path) -> Result<Vec<PriceRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let column = |name: &str| headers.iter().position(|h| h.eq_ignore_ascii_case(name));
    let (ts_col, price_col) = match (column("timestamp"), column("price")) {
        (Some(a), Some(b)) => (a, b),
        _ if headers.is_empty() => {
            log::warn!("{}: empty price file", source.display());
            return Ok(Vec::new());
        }
        _ => {
            return Err(Error::Ingestion {
                path: source.to_path_buf(),
                lines: vec![(1, format!("expected columns timestamp,price, found {:?}", headers.iter().collect::<Vec<_>>()))],
            })
        }
    };
    let mut records = Vec::new();
    let mut bad = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let line = i + 2;
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                bad.push((line, e.to_string()));
                continue;
            }
        };
        let ts = row.get(ts_col).and_then(parse_timestamp);
        let price = row
            .get(price_col)
            .and_then(|p| p.parse::<f64>().ok())
            .filter(|p| p.is_finite());
        match (ts, price) {
            (Some(timestamp), Some(price)) => records.push(PriceRecord { timestamp, price }),
            (None, _) => bad.push((line, format!("bad timestamp {:?}", row.get(ts_col).unwrap_or("")))),
            (_, None) => bad.push((line, format!("bad price {:?}", row.get(price_col).unwrap_or("")))),
        }
    }
    if !bad.is_empty() {
        return Err(Error::Ingestion {
            path: source.to_path_buf(),
            lines: bad,
        });
    }
    if records.is_empty() {
        log::warn!("{}: no price rows", source.display());
    }
    if records.windows(2).any(|w| w[0].timestamp > w[1].timestamp) {
        log::warn!("{}: rows out of order, sorting by timestamp", source.display());
        records.sort_by_key(|r| r.timestamp);
    }
    Ok(records)
}

pub fn parse_price_file(path: &Path) -> Result<Vec<PriceRecord>> {
    let file = std::fs::File::open(path)?;
    parse_prices(std::io::BufReader::new(file), path)
}

/// Whether a timestamp marks the start or the end of its settlement interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TimestampConvention {
    #[default]
    IntervalStart,
    IntervalEnd,
}

impl FromStr for TimestampConvention {
    type Err = Error;

    fn from_str(s: &str) -> Result<TimestampConvention> {
        match s {
            "interval-start" | "start" => Ok(TimestampConvention::IntervalStart),
            "interval-end" | "end" => Ok(TimestampConvention::IntervalEnd),
            _ => Err(Error::Config(format!(
                "unknown timestamp convention {s:?}; expected interval-start or interval-end"
            ))),
        }
    }
}

/// One complete trading day: `24 * M` prices in settlement order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayPath {
    pub date: NaiveDate,
    pub prices: Vec<f64>,
}

impl DayPath {
    pub fn is_weekday(&self) -> bool {
        !matches!(self.date.weekday(), Weekday::Sat | Weekday::Sun)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroppedDay {
    pub date: NaiveDate,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BuildSummary {
    pub records: usize,
    pub days_seen: usize,
    pub days_kept: usize,
    /// Negative prices raised to 0.
    pub clamped: usize,
    /// Prices above the bound; their days are dropped.
    pub rejected: usize,
    /// Records off the settlement cadence.
    pub misaligned: usize,
    pub dropped: Vec<DroppedDay>,
}

/// Groups records into days of exactly `24 * M` settlements.
pub fn build_day_paths(
    records: &[PriceRecord],
    m: usize,
    convention: TimestampConvention,
    bound: f64,
) -> Result<(Vec<DayPath>, BuildSummary)> {
    if m == 0 || 60 % m != 0 {
        return Err(Error::Config(format!(
            "settlements per hour must divide 60, got {m}"
        )));
    }
    let step = (60 / m) as i64;
    let slots = 24 * m;
    let mut summary = BuildSummary {
        records: records.len(),
        ..Default::default()
    };
    let mut days: BTreeMap<NaiveDate, Vec<Option<f64>>> = BTreeMap::new();
    let mut duplicates: BTreeMap<NaiveDate, usize> = BTreeMap::new();
    let mut over: BTreeMap<NaiveDate, usize> = BTreeMap::new();
    for r in records {
        let start = match convention {
            TimestampConvention::IntervalStart => r.timestamp,
            TimestampConvention::IntervalEnd => r.timestamp - Duration::minutes(step),
        };
        let minute = (start.hour() * 60 + start.minute()) as i64;
        if start.second() != 0 || minute % step != 0 {
            summary.misaligned += 1;
            continue;
        }
        let day = days.entry(start.date()).or_insert_with(|| vec![None; slots]);
        let slot = (minute / step) as usize;
        let mut price = r.price;
        if price < 0.0 {
            price = 0.0;
            summary.clamped += 1;
        }
        if price > bound {
            summary.rejected += 1;
            *over.entry(start.date()).or_default() += 1;
        }
        if day[slot].replace(price).is_some() {
            *duplicates.entry(start.date()).or_default() += 1;
        }
    }
    summary.days_seen = days.len();
    let mut paths = Vec::new();
    for (date, slots) in days {
        let missing = slots.iter().filter(|s| s.is_none()).count();
        let reason = if let Some(n) = over.get(&date) {
            Some(format!("{n} price(s) above the bound {bound}"))
        } else if let Some(n) = duplicates.get(&date) {
            Some(format!("{n} duplicate settlement(s)"))
        } else if missing > 0 {
            Some(format!("{missing} missing settlement(s)"))
        } else {
            None
        };
        match reason {
            Some(reason) => {
                log::info!("dropping {date}: {reason}");
                summary.dropped.push(DroppedDay { date, reason });
            }
            None => paths.push(DayPath {
                date,
                prices: slots.into_iter().map(|p| p.expect("complete day")).collect(),
            }),
        }
    }
    summary.days_kept = paths.len();
    if summary.clamped > 0 {
        log::warn!("clamped {} negative price(s) to 0", summary.clamped);
    }
    if summary.rejected > 0 {
        log::warn!("rejected {} price(s) above {bound}", summary.rejected);
    }
    if !summary.dropped.is_empty() {
        log::warn!("dropped {} incomplete day(s)", summary.dropped.len());
    }
    Ok((paths, summary))
}

/// Calendar month `YYYY-MM`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct YearMonth {
    pub year: i32,
    pub month: u32,
}

impl YearMonth {
    pub fn new(year: i32, month: u32) -> Result<YearMonth> {
        if !(1..=12).contains(&month) {
            return Err(Error::Config(format!("month must lie in 1..=12, got {month}")));
        }
        Ok(YearMonth { year, month })
    }

    pub fn of(date: NaiveDate) -> YearMonth {
        YearMonth {
            year: date.year(),
            month: date.month(),
        }
    }

    pub fn previous(self) -> YearMonth {
        if self.month == 1 {
            YearMonth { year: self.year - 1, month: 12 }
        } else {
            YearMonth { year: self.year, month: self.month - 1 }
        }
    }

    pub fn prior_year(self) -> YearMonth {
        YearMonth { year: self.year - 1, month: self.month }
    }
}

impl fmt::Display for YearMonth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

impl FromStr for YearMonth {
    type Err = Error;

    fn from_str(s: &str) -> Result<YearMonth> {
        let bad = || Error::Config(format!("expected a month as YYYY-MM, got {s:?}"));
        let (y, m) = s.trim().split_once('-').ok_or_else(bad)?;
        YearMonth::new(y.parse().map_err(|_| bad())?, m.parse().map_err(|_| bad())?)
    }
}

impl Serialize for YearMonth {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for YearMonth {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<YearMonth, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectionMode {
    SameMonthPriorYear,
    PriorMonth,
}

impl FromStr for SelectionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<SelectionMode> {
        match s {
            "same-month-prior-year" => Ok(SelectionMode::SameMonthPriorYear),
            "prior-month" => Ok(SelectionMode::PriorMonth),
            _ => Err(Error::Config(format!(
                "unknown selection mode {s:?}; expected same-month-prior-year or prior-month"
            ))),
        }
    }
}

/// Training months and a test month. Holidays count as weekdays.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub mode: SelectionMode,
    pub target: YearMonth,
    #[serde(default = "default_true")]
    pub weekdays_only: bool,
}

fn default_true() -> bool {
    true
}

impl DatasetSpec {
    pub fn training_month(&self) -> YearMonth {
        match self.mode {
            SelectionMode::SameMonthPriorYear => self.target.prior_year(),
            SelectionMode::PriorMonth => self.target.previous(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub spec: DatasetSpec,
    pub train: Vec<DayPath>,
    pub test: Vec<DayPath>,
}

impl Dataset {
    pub fn train_prices(&self) -> Vec<Vec<f64>> {
        self.train.iter().map(|d| d.prices.clone()).collect()
    }

    pub fn test_prices(&self) -> Vec<Vec<f64>> {
        self.test.iter().map(|d| d.prices.clone()).collect()
    }
}

/// Splits day paths into the training month and the target month.
pub fn select_dataset(paths: &[DayPath], spec: DatasetSpec) -> Result<Dataset> {
    let train_month = spec.training_month();
    let keep = |d: &&DayPath| !spec.weekdays_only || d.is_weekday();
    let pick = |month: YearMonth| -> Vec<DayPath> {
        paths
            .iter()
            .filter(|d| YearMonth::of(d.date) == month)
            .filter(keep)
            .cloned()
            .collect()
    };
    let train = pick(train_month);
    let test = pick(spec.target);
    if train.is_empty() {
        return Err(Error::Config(format!("no training days in {train_month}")));
    }
    if test.is_empty() {
        return Err(Error::Config(format!("no test days in {}", spec.target)));
    }
    Ok(Dataset { spec, train, test })
}

/// Summary of an ingested dataset, written next to training outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub sources: Vec<String>,
    pub settlements_per_hour: usize,
    pub convention: TimestampConvention,
    pub price_bound: f64,
    pub spec: Option<DatasetSpec>,
    pub train_dates: Vec<NaiveDate>,
    pub test_dates: Vec<NaiveDate>,
    pub summary: BuildSummary,
}

/// Everything needed to go from price files to day paths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestOptions {
    pub settlements_per_hour: usize,
    #[serde(default)]
    pub convention: TimestampConvention,
    #[serde(default = "default_bound")]
    pub price_bound: f64,
}

fn default_bound() -> f64 {
    DEFAULT_PRICE_BOUND
}

impl Default for IngestOptions {
    fn default() -> IngestOptions {
        IngestOptions {
            settlements_per_hour: 12,
            convention: TimestampConvention::IntervalStart,
            price_bound: DEFAULT_PRICE_BOUND,
        }
    }
}

/// Parses every file and builds day paths from the combined records.
pub fn load_day_paths(files: &[&Path], opts: &IngestOptions) -> Result<(Vec<DayPath>, BuildSummary)> {
    let mut records = Vec::new();
    for f in files {
        records.extend(parse_price_file(f)?);
    }
    records.sort_by_key(|r| r.timestamp);
    build_day_paths(&records, opts.settlements_per_hour, opts.convention, opts.price_bound)
}
