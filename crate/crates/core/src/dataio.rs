//! CSV ingestion and date alignment for the two input datasets.
//!
//! Price files carry `date,avg,open,low,high`; structural files carry
//! `date,block_size,hash_rate,difficulty,tx_count,miner_revenue`. Both use
//! comma separation, `.` decimals, UTF-8, and one header row; thousands
//! separators are rejected by the numeric parser. Alignment keeps exactly
//! the dates present in both files, sorted ascending. Missing calendar days
//! inside the aligned range are permitted but flagged; windowing later
//! refuses to span a flagged gap.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use chrono::NaiveDate;

use crate::error::{Error, Result};
use crate::ndcore::Matrix;

pub const PRICE_COLUMNS: [&str; 5] = ["date", "avg", "open", "low", "high"];
pub const STRUCT_COLUMNS: [&str; 6] = [
    "date",
    "block_size",
    "hash_rate",
    "difficulty",
    "tx_count",
    "miner_revenue",
];

/// One day of price features, all in USD.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceRow {
    pub date: NaiveDate,
    pub avg: f64,
    pub open: f64,
    pub low: f64,
    pub high: f64,
}

impl PriceRow {
    pub fn features(&self) -> [f64; 4] {
        [self.avg, self.open, self.low, self.high]
    }

    fn validate(&self) -> Result<()> {
        let all = [self.avg, self.open, self.low, self.high];
        if all.iter().any(|&v| v <= 0.0) {
            return Err(Error::validation(format!(
                "price row {}: all prices must be positive",
                self.date
            )));
        }
        if !(self.low <= self.avg && self.avg <= self.high) {
            return Err(Error::validation(format!(
                "price row {}: expected low <= avg <= high, got low={}, avg={}, high={}",
                self.date, self.low, self.avg, self.high
            )));
        }
        if !(self.low <= self.open && self.open <= self.high) {
            return Err(Error::validation(format!(
                "price row {}: expected low <= open <= high, got low={}, open={}, high={}",
                self.date, self.low, self.open, self.high
            )));
        }
        Ok(())
    }
}

/// One day of blockchain network features.
#[derive(Debug, Clone, PartialEq)]
pub struct StructRow {
    pub date: NaiveDate,
    /// 24-hour average block size, MB.
    pub block_size: f64,
    /// Estimated terahashes per second.
    pub hash_rate: f64,
    /// Relative difficulty of finding a new block.
    pub difficulty: f64,
    /// Total daily transactions.
    pub tx_count: f64,
    /// Coinbase rewards plus transaction fees, USD.
    pub miner_revenue: f64,
}

impl StructRow {
    pub fn features(&self) -> [f64; 5] {
        [
            self.block_size,
            self.hash_rate,
            self.difficulty,
            self.tx_count,
            self.miner_revenue,
        ]
    }

    fn validate(&self) -> Result<()> {
        if self.features().iter().any(|&v| v <= 0.0) {
            return Err(Error::validation(format!(
                "structural row {}: all values must be positive",
                self.date
            )));
        }
        if self.tx_count.fract() != 0.0 {
            return Err(Error::validation(format!(
                "structural row {}: tx_count must be integral, got {}",
                self.date, self.tx_count
            )));
        }
        Ok(())
    }
}

/// Date-indexed pair of feature series with equal row counts. `price` is
/// `n x 4` (avg, open, low, high) and `structural` is `n x 5`.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedDataset {
    pub dates: Vec<NaiveDate>,
    pub price: Matrix,
    pub structural: Matrix,
}

impl AlignedDataset {
    pub fn rows(&self) -> usize {
        self.dates.len()
    }

    /// True when the calendar day after row `i` is missing, i.e. rows `i`
    /// and `i + 1` are not consecutive days.
    pub fn gap_after(&self, i: usize) -> bool {
        i + 1 < self.dates.len() && self.dates[i].succ_opt() != Some(self.dates[i + 1])
    }

    /// Indices `i` such that a day is missing between rows `i` and `i + 1`.
    pub fn gap_positions(&self) -> Vec<usize> {
        (0..self.rows().saturating_sub(1))
            .filter(|&i| self.gap_after(i))
            .collect()
    }

    /// Raw average price (column 0 of the price matrix) at row `i`.
    pub fn avg_price(&self, i: usize) -> f64 {
        self.price.get(i, 0)
    }

    /// Rows `[start, end)` as a new dataset.
    pub fn slice(&self, start: usize, end: usize) -> AlignedDataset {
        let price = Matrix::from_rows(
            &(start..end).map(|i| self.price.row(i).to_vec()).collect::<Vec<_>>(),
        )
        .expect("slice of a valid dataset is valid");
        let structural = Matrix::from_rows(
            &(start..end)
                .map(|i| self.structural.row(i).to_vec())
                .collect::<Vec<_>>(),
        )
        .expect("slice of a valid dataset is valid");
        AlignedDataset {
            dates: self.dates[start..end].to_vec(),
            price,
            structural,
        }
    }
}

/// Plain-text summary of a load-and-align run.
#[derive(Debug, Clone)]
pub struct LoadReport {
    pub price_rows: usize,
    pub struct_rows: usize,
    pub aligned_rows: usize,
    pub first_date: NaiveDate,
    pub last_date: NaiveDate,
    /// Dates that are missing inside the aligned range.
    pub gaps: Vec<NaiveDate>,
}

impl LoadReport {
    pub fn new(price_rows: usize, struct_rows: usize, aligned: &AlignedDataset) -> Self {
        let mut gaps = Vec::new();
        for i in aligned.gap_positions() {
            let mut d = aligned.dates[i].succ_opt().expect("date overflow");
            while d < aligned.dates[i + 1] {
                gaps.push(d);
                d = d.succ_opt().expect("date overflow");
            }
        }
        LoadReport {
            price_rows,
            struct_rows,
            aligned_rows: aligned.rows(),
            first_date: *aligned.dates.first().expect("aligned dataset is non-empty"),
            last_date: *aligned.dates.last().expect("aligned dataset is non-empty"),
            gaps,
        }
    }
}

impl fmt::Display for LoadReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "price rows:      {}", self.price_rows)?;
        writeln!(f, "structural rows: {}", self.struct_rows)?;
        writeln!(f, "aligned rows:    {}", self.aligned_rows)?;
        writeln!(f, "date range:      {} .. {}", self.first_date, self.last_date)?;
        if self.gaps.is_empty() {
            write!(f, "gaps:            none")
        } else {
            write!(f, "gaps:            {} missing day(s):", self.gaps.len())?;
            for d in &self.gaps {
                write!(f, " {d}")?;
            }
            Ok(())
        }
    }
}

struct HeaderIndex {
    positions: Vec<usize>,
}

impl HeaderIndex {
    fn resolve(headers: &csv::StringRecord, columns: &[&str], schema: &'static str) -> Result<Self> {
        let mut positions = Vec::with_capacity(columns.len());
        for &name in columns {
            let pos = headers
                .iter()
                .position(|h| h.trim() == name)
                .ok_or(Error::Schema {
                    column: name.to_string(),
                    schema,
                })?;
            positions.push(pos);
        }
        Ok(HeaderIndex { positions })
    }

    fn field<'r>(&self, record: &'r csv::StringRecord, col: usize) -> &'r str {
        record.get(self.positions[col]).unwrap_or("")
    }
}

fn record_line(record: &csv::StringRecord) -> u64 {
    record.position().map_or(0, |p| p.line())
}

fn parse_date(s: &str, line: u64) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d").map_err(|e| Error::Parse {
        line,
        message: format!("bad date '{s}': {e}"),
    })
}

fn parse_number(s: &str, column: &str, line: u64) -> Result<f64> {
    let trimmed = s.trim();
    trimmed.parse::<f64>().map_err(|_| Error::Parse {
        line,
        message: format!("cell '{trimmed}' in column '{column}' is not a number"),
    })
}

fn open_reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    let file = std::fs::File::open(path).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })?;
    Ok(csv::ReaderBuilder::new().has_headers(true).from_reader(file))
}

/// Load and validate a price CSV. Rows come back in file order.
pub fn load_price_csv(path: impl AsRef<Path>) -> Result<Vec<PriceRow>> {
    let mut reader = open_reader(path.as_ref())?;
    let headers = reader.headers().map_err(csv_error)?.clone();
    let idx = HeaderIndex::resolve(&headers, &PRICE_COLUMNS, "price")?;
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(csv_error)?;
        let line = record_line(&record);
        let row = PriceRow {
            date: parse_date(idx.field(&record, 0), line)?,
            avg: parse_number(idx.field(&record, 1), "avg", line)?,
            open: parse_number(idx.field(&record, 2), "open", line)?,
            low: parse_number(idx.field(&record, 3), "low", line)?,
            high: parse_number(idx.field(&record, 4), "high", line)?,
        };
        row.validate()?;
        rows.push(row);
    }
    Ok(rows)
}

/// Load and validate a structural CSV. Rows come back in file order.
pub fn load_struct_csv(path: impl AsRef<Path>) -> Result<Vec<StructRow>> {
    let mut reader = open_reader(path.as_ref())?;
    let headers = reader.headers().map_err(csv_error)?.clone();
    let idx = HeaderIndex::resolve(&headers, &STRUCT_COLUMNS, "structural")?;
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(csv_error)?;
        let line = record_line(&record);
        let row = StructRow {
            date: parse_date(idx.field(&record, 0), line)?,
            block_size: parse_number(idx.field(&record, 1), "block_size", line)?,
            hash_rate: parse_number(idx.field(&record, 2), "hash_rate", line)?,
            difficulty: parse_number(idx.field(&record, 3), "difficulty", line)?,
            tx_count: parse_number(idx.field(&record, 4), "tx_count", line)?,
            miner_revenue: parse_number(idx.field(&record, 5), "miner_revenue", line)?,
        };
        row.validate()?;
        rows.push(row);
    }
    Ok(rows)
}

fn csv_error(e: csv::Error) -> Error {
    let line = match e.position() {
        Some(p) => p.line(),
        None => 0,
    };
    Error::Parse {
        line,
        message: e.to_string(),
    }
}

fn index_by_date<R, F: Fn(&R) -> NaiveDate>(
    rows: &[R],
    date_of: F,
    which: &str,
) -> Result<BTreeMap<NaiveDate, usize>> {
    let mut map = BTreeMap::new();
    for (i, row) in rows.iter().enumerate() {
        if map.insert(date_of(row), i).is_some() {
            return Err(Error::validation(format!(
                "duplicate date {} in {} input",
                date_of(row),
                which
            )));
        }
    }
    Ok(map)
}

/// Join the two row sets on their common dates, sorted ascending.
pub fn align(price_rows: &[PriceRow], struct_rows: &[StructRow]) -> Result<AlignedDataset> {
    if price_rows.is_empty() || struct_rows.is_empty() {
        return Err(Error::validation(
            "alignment requires non-empty inputs".to_string(),
        ));
    }
    let price_by_date = index_by_date(price_rows, |r| r.date, "price")?;
    let struct_by_date = index_by_date(struct_rows, |r| r.date, "structural")?;

    let mut dates = Vec::new();
    let mut price = Vec::new();
    let mut structural = Vec::new();
    for (&date, &pi) in &price_by_date {
        if let Some(&si) = struct_by_date.get(&date) {
            dates.push(date);
            price.push(price_rows[pi].features().to_vec());
            structural.push(struct_rows[si].features().to_vec());
        }
    }
    if dates.is_empty() {
        return Err(Error::validation(
            "alignment error: the two inputs share no dates".to_string(),
        ));
    }
    Ok(AlignedDataset {
        dates,
        price: Matrix::from_rows(&price)?,
        structural: Matrix::from_rows(&structural)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn date(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
    }

    fn price_row(d: &str, avg: f64) -> PriceRow {
        PriceRow {
            date: date(d),
            avg,
            open: avg,
            low: avg * 0.9,
            high: avg * 1.1,
        }
    }

    fn struct_row(d: &str, v: f64) -> StructRow {
        StructRow {
            date: date(d),
            block_size: v,
            hash_rate: v * 10.0,
            difficulty: v * 100.0,
            tx_count: (v * 1000.0).round(),
            miner_revenue: v * 5.0,
        }
    }

    fn write_temp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn load_valid_price_csv() {
        let f = write_temp(
            "date,avg,open,low,high\n\
             2020-01-01,100,101,95,110\n\
             2020-01-02,102,100,96,111\n\
             2020-01-03,104,103,99,112\n",
        );
        let rows = load_price_csv(f.path()).unwrap();
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[0].avg, 100.0);
        assert_eq!(rows[2].date, date("2020-01-03"));
    }

    #[test]
    fn low_above_high_cites_date() {
        let f = write_temp(
            "date,avg,open,low,high\n\
             2020-01-01,100,101,95,110\n\
             2020-01-02,102,100,120,111\n",
        );
        let err = load_price_csv(f.path()).unwrap_err();
        assert!(err.to_string().contains("2020-01-02"), "{err}");
        assert_eq!(err.class(), crate::error::ErrorClass::Validation);
    }

    #[test]
    fn missing_column_names_it() {
        let f = write_temp(
            "date,block_size,hash_rate,tx_count,miner_revenue\n\
             2020-01-01,1.2,100,300000,9000000\n",
        );
        let err = load_struct_csv(f.path()).unwrap_err();
        assert!(err.to_string().contains("difficulty"), "{err}");
    }

    #[test]
    fn unparseable_cell_reports_line() {
        let f = write_temp(
            "date,avg,open,low,high\n\
             2020-01-01,100,101,95,110\n\
             2020-01-02,1_0_2,100,96,111\n",
        );
        let err = load_price_csv(f.path()).unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
    }

    #[test]
    fn thousands_separators_rejected() {
        let f = write_temp(
            "date,avg,open,low,high\n\
             2020-01-01,\"33,515.7\",101,95,34000\n",
        );
        assert!(load_price_csv(f.path()).is_err());
    }

    #[test]
    fn align_intersects_dates() {
        let p = vec![
            price_row("2020-01-01", 100.0),
            price_row("2020-01-02", 101.0),
            price_row("2020-01-03", 102.0),
        ];
        let s = vec![
            struct_row("2020-01-02", 1.0),
            struct_row("2020-01-03", 2.0),
            struct_row("2020-01-04", 3.0),
        ];
        let aligned = align(&p, &s).unwrap();
        assert_eq!(aligned.dates, vec![date("2020-01-02"), date("2020-01-03")]);
        assert_eq!(aligned.price.shape(), (2, 4));
        assert_eq!(aligned.structural.shape(), (2, 5));
        assert_eq!(aligned.avg_price(0), 101.0);
    }

    #[test]
    fn align_identical_inputs_keeps_all_rows_in_order() {
        let days = ["2020-01-01", "2020-01-02", "2020-01-03", "2020-01-04", "2020-01-05"];
        let p: Vec<_> = days.iter().map(|d| price_row(d, 100.0)).collect();
        let s: Vec<_> = days.iter().map(|d| struct_row(d, 1.0)).collect();
        let aligned = align(&p, &s).unwrap();
        assert_eq!(aligned.rows(), 5);
        assert_eq!(aligned.dates, days.iter().map(|d| date(d)).collect::<Vec<_>>());
    }

    #[test]
    fn duplicate_date_rejected() {
        let p = vec![price_row("2020-01-01", 100.0), price_row("2020-01-02", 101.0)];
        let s = vec![struct_row("2020-01-02", 1.0), struct_row("2020-01-02", 2.0)];
        let err = align(&p, &s).unwrap_err();
        assert!(err.to_string().contains("duplicate date 2020-01-02"), "{err}");
    }

    #[test]
    fn empty_intersection_rejected() {
        let p = vec![price_row("2020-01-01", 100.0)];
        let s = vec![struct_row("2020-02-01", 1.0)];
        assert!(align(&p, &s).is_err());
    }

    #[test]
    fn align_is_idempotent() {
        let p = vec![
            price_row("2020-01-01", 100.0),
            price_row("2020-01-03", 102.0),
            price_row("2020-01-04", 103.0),
        ];
        let s = vec![
            struct_row("2020-01-01", 1.0),
            struct_row("2020-01-03", 2.0),
            struct_row("2020-01-04", 3.0),
        ];
        let once = align(&p, &s).unwrap();
        // Re-run alignment on rows reconstructed from the aligned output.
        let p2: Vec<PriceRow> = once
            .dates
            .iter()
            .enumerate()
            .map(|(i, &d)| PriceRow {
                date: d,
                avg: once.price.get(i, 0),
                open: once.price.get(i, 1),
                low: once.price.get(i, 2),
                high: once.price.get(i, 3),
            })
            .collect();
        let s2: Vec<StructRow> = once
            .dates
            .iter()
            .enumerate()
            .map(|(i, &d)| StructRow {
                date: d,
                block_size: once.structural.get(i, 0),
                hash_rate: once.structural.get(i, 1),
                difficulty: once.structural.get(i, 2),
                tx_count: once.structural.get(i, 3),
                miner_revenue: once.structural.get(i, 4),
            })
            .collect();
        let twice = align(&p2, &s2).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn gaps_are_flagged() {
        let p = vec![
            price_row("2020-01-01", 100.0),
            price_row("2020-01-02", 101.0),
            price_row("2020-01-05", 102.0),
        ];
        let s = vec![
            struct_row("2020-01-01", 1.0),
            struct_row("2020-01-02", 2.0),
            struct_row("2020-01-05", 3.0),
        ];
        let aligned = align(&p, &s).unwrap();
        assert_eq!(aligned.gap_positions(), vec![1]);
        let report = LoadReport::new(3, 3, &aligned);
        assert_eq!(report.gaps, vec![date("2020-01-03"), date("2020-01-04")]);
        let text = report.to_string();
        assert!(text.contains("2 missing day(s)"), "{text}");
    }
}
