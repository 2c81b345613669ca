//! Seeded synthetic "historical" 5-minute prices for exercising the
//! data-driven pipeline without market data.

use std::io::Write;

use chrono::{Datelike, Duration, NaiveDate, Weekday};
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::data::PriceRecord;
use crate::error::{Error, Result};
use crate::price::SimRng;

/// Hour-of-day price profile with a morning and an evening peak.
pub const DAILY_PROFILE: [f64; 24] = [
    26.0, 23.0, 21.0, 20.0, 21.0, 26.0, 36.0, 50.0, 58.0, 54.0, 48.0, 45.0, 44.0, 43.0, 45.0,
    50.0, 60.0, 70.0, 66.0, 56.0, 46.0, 38.0, 32.0, 28.0,
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticOptions {
    pub start: NaiveDate,
    /// Number of weekdays to generate; weekends are skipped.
    pub weekdays: usize,
    pub settlements_per_hour: usize,
    pub seed: u64,
    /// Standard deviation of the daily level shift.
    pub day_sigma: f64,
    /// Innovation standard deviation of the AR(1) settlement noise.
    pub noise_sigma: f64,
    /// AR(1) coefficient of the settlement noise.
    pub noise_persistence: f64,
    /// Per-settlement spike probability.
    pub spike_probability: f64,
    pub min_price: f64,
    pub max_price: f64,
}

impl Default for SyntheticOptions {
    /// 30 weekdays from Monday 2012-01-09: 17 in January, 13 in February.
    fn default() -> SyntheticOptions {
        SyntheticOptions {
            start: NaiveDate::from_ymd_opt(2012, 1, 9).expect("valid date"),
            weekdays: 30,
            settlements_per_hour: 12,
            seed: 2012,
            day_sigma: 4.0,
            noise_sigma: 9.0,
            noise_persistence: 0.7,
            spike_probability: 0.01,
            min_price: 1.0,
            max_price: 149.0,
        }
    }
}

/// Prices are profile + daily shift + AR(1) noise + rare spikes, clamped to
/// `[min_price, max_price]` and rounded to cents.
pub fn generate(opts: &SyntheticOptions) -> Result<Vec<PriceRecord>> {
    let m = opts.settlements_per_hour;
    if m == 0 || 60 % m != 0 {
        return Err(Error::Config(format!("settlements per hour must divide 60, got {m}")));
    }
    if !(opts.min_price <= opts.max_price) || opts.min_price < 0.0 {
        return Err(Error::Config("need 0 <= min_price <= max_price".into()));
    }
    if !(0.0..1.0).contains(&opts.noise_persistence) || !(0.0..=1.0).contains(&opts.spike_probability) {
        return Err(Error::Config("noise persistence must lie in [0, 1), spike probability in [0, 1]".into()));
    }
    let day_shift = Normal::new(0.0, opts.day_sigma).map_err(|e| Error::Config(e.to_string()))?;
    let innovation = Normal::new(0.0, opts.noise_sigma).map_err(|e| Error::Config(e.to_string()))?;
    let spike = Uniform::new(40.0, 90.0).map_err(|e| Error::Config(e.to_string()))?;
    let mut rng = SimRng::seed_from_u64(opts.seed);
    let step = Duration::minutes(60 / m as i64);
    let mut out = Vec::with_capacity(opts.weekdays * 24 * m);
    let mut date = opts.start;
    let mut made = 0;
    while made < opts.weekdays {
        if !matches!(date.weekday(), Weekday::Sat | Weekday::Sun) {
            let shift = day_shift.sample(&mut rng);
            let mut noise = 0.0;
            let mut ts = date.and_hms_opt(0, 0, 0).expect("midnight exists");
            for slot in 0..24 * m {
                noise = opts.noise_persistence * noise + innovation.sample(&mut rng);
                let mut p = DAILY_PROFILE[slot / m] + shift + noise;
                if rng.random_bool(opts.spike_probability) {
                    p += spike.sample(&mut rng);
                }
                let p = (p.clamp(opts.min_price, opts.max_price) * 100.0).round() / 100.0;
                out.push(PriceRecord { timestamp: ts, price: p });
                ts += step;
            }
            made += 1;
        }
        date = date.succ_opt().ok_or_else(|| Error::Config("date overflow".into()))?;
    }
    Ok(out)
}

/// Writes `timestamp,price` rows with interval-start timestamps.
pub fn write_csv<W: Write>(records: &[PriceRecord], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["timestamp", "price"])?;
    for r in records {
        out.write_record([
            r.timestamp.format("%Y-%m-%d %H:%M:%S").to_string(),
            format!("{:.2}", r.price),
        ])?;
    }
    out.flush()?;
    Ok(())
}
