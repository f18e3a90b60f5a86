//! Writes the synthetic trip and port fixtures under `data/`.
//!
//! The real bike-share, taxi and port datasets are not redistributed; these
//! files have the same shape and enough structure (hotspots, weekday
//! effects, uneven regional capacity) to exercise every pipeline stage.
//!
//! Usage: `cargo run --example make_fixtures -- [out_dir]` (default `data`).

use std::fmt::Write as _;
use std::path::PathBuf;

use chrono::{Datelike, Duration, NaiveDate, NaiveDateTime, Weekday};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{weighted::WeightedIndex, Distribution, LogNormal, Normal};

const WEEKS: i64 = 24;

fn first_monday() -> NaiveDate {
    NaiveDate::from_ymd_opt(2023, 1, 2).unwrap()
}

fn random_time<R: Rng>(day: NaiveDate, hour_lo: u32, hour_hi: u32, rng: &mut R) -> NaiveDateTime {
    let secs = rng.random_range(hour_lo * 3600..hour_hi * 3600);
    day.and_hms_opt(0, 0, 0).unwrap() + Duration::seconds(secs as i64)
}

fn louvelo<R: Rng>(rng: &mut R) -> String {
    let stations: Vec<String> = (1..=41).map(|i| format!("S{i:02}")).collect();
    let base = LogNormal::new(0.0, 0.9).unwrap();
    let saturday_w: Vec<f64> = (0..41).map(|_| base.sample(rng)).collect();
    let weekday_w: Vec<f64> = (0..41).map(|_| base.sample(rng)).collect();
    let jitter = LogNormal::new(0.0, 0.25).unwrap();

    let mut out = String::from("started_at,start_station_name\n");
    for d in 0..WEEKS * 7 {
        let day = first_monday() + Duration::days(d);
        let saturday = day.weekday() == Weekday::Sat;
        let weights: Vec<f64> =
            if saturday { &saturday_w } else { &weekday_w }.iter().map(|w| w * jitter.sample(rng)).collect();
        let pick = WeightedIndex::new(&weights).unwrap();
        let n = if saturday { rng.random_range(110..160) } else { rng.random_range(30..50) };
        for _ in 0..n {
            let ts = random_time(day, 6, 22, rng);
            let _ = writeln!(out, "{},{}", ts.format("%Y-%m-%d %H:%M:%S"), stations[pick.sample(rng)]);
        }
    }
    // A couple of damaged rows, as real exports have.
    out.push_str("2023-13-45 99:00:00,S01\n,S02\n");
    out
}

fn nyc<R: Rng>(rng: &mut R) -> String {
    // (lat, lon, std, weight); the remainder is uniform over a slightly
    // larger box so some pickups fall outside the service grid.
    let hotspots = [
        (40.754, -73.984, 0.008, 0.32),
        (40.708, -74.011, 0.005, 0.14),
        (40.774, -73.960, 0.010, 0.18),
        (40.728, -73.995, 0.008, 0.18),
        (40.800, -73.950, 0.006, 0.08),
    ];
    let weights: Vec<f64> = hotspots.iter().map(|h| h.3).chain([0.01]).collect();
    let pick = WeightedIndex::new(&weights).unwrap();
    let unit = Normal::new(0.0, 1.0).unwrap();

    let mut out = String::from("pickup_datetime,pickup_latitude,pickup_longitude\n");
    for d in 0..WEEKS * 7 {
        let day = first_monday() + Duration::days(d);
        let friday = day.weekday() == Weekday::Fri;
        let mut emit = |n: usize, hour_lo: u32, hour_hi: u32, rng: &mut R| {
            for _ in 0..n {
                let k = pick.sample(rng);
                let (lat, lon) = match hotspots.get(k) {
                    Some(&(hlat, hlon, s, _)) => (hlat + s * unit.sample(rng), hlon + s * unit.sample(rng)),
                    None => (rng.random_range(40.690..40.830), rng.random_range(-74.030..-73.920)),
                };
                let ts = random_time(day, hour_lo, hour_hi, rng);
                let _ = writeln!(out, "{},{lat:.6},{lon:.6}", ts.format("%m/%d/%Y %H:%M:%S"));
            }
        };
        if friday {
            emit(rng.random_range(280..340), 15, 18, rng);
            emit(120, 6, 15, rng);
        } else {
            emit(60, 6, 23, rng);
        }
    }
    out
}

fn maritime<R: Rng>(rng: &mut R) -> String {
    // Region centres and how many of the 30 ports each holds.
    let regions = [((51.9, 4.5), 10), ((1.3, 103.8), 7), ((29.7, -95.0), 6), ((25.2, 55.3), 4), ((-33.9, 18.4), 3)];
    let capacity = LogNormal::new(0.0, 0.6).unwrap();
    let spread = Normal::new(0.0, 3.0).unwrap();
    let mut out = String::from("label,region,capacity,lat,lon\n");
    let mut id = 0;
    for (r, &((lat, lon), n)) in regions.iter().enumerate() {
        for _ in 0..n {
            id += 1;
            let _ = writeln!(
                out,
                "P{id:02},{r},{:.4},{:.4},{:.4}",
                capacity.sample(rng),
                lat + spread.sample(rng),
                lon + spread.sample(rng)
            );
        }
    }
    out
}

fn main() -> std::io::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "data".into()));
    std::fs::create_dir_all(&dir)?;
    let mut rng = ChaCha8Rng::seed_from_u64(20_240_601);
    std::fs::write(dir.join("louvelo_trips.csv"), louvelo(&mut rng))?;
    std::fs::write(dir.join("nyc_trips.csv"), nyc(&mut rng))?;
    std::fs::write(dir.join("maritime_ports.csv"), maritime(&mut rng))?;
    println!("fixtures written to {}", dir.display());
    Ok(())
}
