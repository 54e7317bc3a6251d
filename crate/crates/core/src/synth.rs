//! Deterministic synthetic dataset generator: a geometric trend plus two
//! seasonal components and seeded noise for the price series, and a
//! correlated, positive, trending structural series. Output always passes
//! the loaders' validation.

use std::path::Path;

use chrono::NaiveDate;

use crate::dataio::{PriceRow, StructRow};
use crate::error::{Error, Result};
use crate::ndcore::SeededRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynthProfile {
    /// Gentle trend, clear seasonality, low noise.
    Smooth,
    /// Same structure with markedly stronger noise.
    Volatile,
    /// Very quiet series for quick smoke tests.
    Calm,
}

impl std::str::FromStr for SynthProfile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "smooth" => Ok(SynthProfile::Smooth),
            "volatile" => Ok(SynthProfile::Volatile),
            "calm" => Ok(SynthProfile::Calm),
            other => Err(Error::domain(format!(
                "unknown profile '{other}' (expected smooth, volatile, or calm)"
            ))),
        }
    }
}

impl std::fmt::Display for SynthProfile {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SynthProfile::Smooth => write!(f, "smooth"),
            SynthProfile::Volatile => write!(f, "volatile"),
            SynthProfile::Calm => write!(f, "calm"),
        }
    }
}

struct ProfileParams {
    trend: f64,
    season_long: f64,
    season_short: f64,
    noise: f64,
}

impl SynthProfile {
    fn params(self) -> ProfileParams {
        match self {
            SynthProfile::Smooth => ProfileParams {
                trend: 0.0012,
                season_long: 0.10,
                season_short: 0.04,
                noise: 0.004,
            },
            SynthProfile::Volatile => ProfileParams {
                trend: 0.0015,
                season_long: 0.12,
                season_short: 0.05,
                noise: 0.015,
            },
            SynthProfile::Calm => ProfileParams {
                trend: 0.0008,
                season_long: 0.06,
                season_short: 0.02,
                noise: 0.001,
            },
        }
    }
}

const START_DATE: (i32, u32, u32) = (2016, 1, 1);
const TAU: f64 = std::f64::consts::TAU;

/// Generate `n_days` of paired price and structural rows.
pub fn generate(
    seed: u64,
    n_days: usize,
    profile: SynthProfile,
) -> Result<(Vec<PriceRow>, Vec<StructRow>)> {
    if n_days < 30 {
        return Err(Error::domain(format!(
            "synthetic generation needs at least 30 days, got {n_days}"
        )));
    }
    let p = profile.params();
    let mut rng = SeededRng::new(seed);
    let start = NaiveDate::from_ymd_opt(START_DATE.0, START_DATE.1, START_DATE.2)
        .expect("fixed start date is valid");

    let mut price_rows = Vec::with_capacity(n_days);
    let mut struct_rows = Vec::with_capacity(n_days);
    let mut date = start;
    for t in 0..n_days {
        let tf = t as f64;
        let season_long = (TAU * tf / 90.0).sin();
        let season_short = (TAU * tf / 28.0 + 0.8).sin();
        let log_price = 9.0
            + p.trend * tf
            + p.season_long * season_long
            + p.season_short * season_short
            + rng.uniform(-p.noise, p.noise);
        let avg = log_price.exp();

        let open = avg * (1.0 + rng.uniform(-0.005, 0.005));
        let lo0 = avg.min(open);
        let hi0 = avg.max(open);
        let low = lo0 * (1.0 - rng.uniform(0.0, 0.006));
        let high = hi0 * (1.0 + rng.uniform(0.0, 0.006));
        price_rows.push(PriceRow {
            date,
            avg,
            open,
            low,
            high,
        });

        // Structural series share the seasonal state, so the second stream
        // carries real predictive signal.
        let hash_rate = 9.0e4
            * (0.0018 * tf).exp()
            * (1.0 + 0.2 * (TAU * tf / 90.0 + 0.3).sin())
            * (1.0 + rng.uniform(-0.01, 0.01));
        let difficulty = hash_rate * 13.5 * (1.0 + rng.uniform(-0.005, 0.005));
        let block_size =
            1.0 + 0.25 * season_long + 0.1 * season_short + rng.uniform(-0.02, 0.02);
        let tx_count = (250_000.0
            + 60_000.0 * season_short
            + 30_000.0 * (log_price - 9.0)
            + rng.uniform(-5_000.0, 5_000.0))
        .round()
        .max(1.0);
        let miner_revenue = avg * 900.0 * (1.0 + rng.uniform(-0.02, 0.02));
        struct_rows.push(StructRow {
            date,
            block_size,
            hash_rate,
            difficulty,
            tx_count,
            miner_revenue,
        });

        date = date.succ_opt().expect("date overflow");
    }
    Ok((price_rows, struct_rows))
}

/// Write generated rows as the two CSV files the loaders expect.
pub fn write_csvs(
    price_rows: &[PriceRow],
    struct_rows: &[StructRow],
    price_path: impl AsRef<Path>,
    struct_path: impl AsRef<Path>,
) -> Result<()> {
    let mut pw = csv::Writer::from_path(price_path.as_ref())?;
    pw.write_record(crate::dataio::PRICE_COLUMNS)?;
    for r in price_rows {
        pw.write_record([
            r.date.to_string(),
            r.avg.to_string(),
            r.open.to_string(),
            r.low.to_string(),
            r.high.to_string(),
        ])?;
    }
    pw.flush()?;
    let mut sw = csv::Writer::from_path(struct_path.as_ref())?;
    sw.write_record(crate::dataio::STRUCT_COLUMNS)?;
    for r in struct_rows {
        sw.write_record([
            r.date.to_string(),
            r.block_size.to_string(),
            r.hash_rate.to_string(),
            r.difficulty.to_string(),
            r.tx_count.to_string(),
            r.miner_revenue.to_string(),
        ])?;
    }
    sw.flush()?;
    Ok(())
}
