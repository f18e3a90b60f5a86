//! Demand estimation on a 22-Saturday count fixture, checked against values
//! computed independently with exact rational arithmetic.

use chrono::{Duration, NaiveDate};
use mfbo::data::{estimate_demand, DemandEstimateConfig, Discretiser, Location, TripRecord};

fn fixture_trips() -> Vec<TripRecord> {
    let text = include_str!("fixtures/weekly_counts.csv");
    let mut trips = Vec::new();
    for line in text.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let date = NaiveDate::parse_from_str(f[0], "%Y-%m-%d").unwrap();
        let n: i64 = f[2].parse().unwrap();
        for i in 0..n {
            trips.push(TripRecord {
                timestamp: date.and_hms_opt(10, 0, 0).unwrap() + Duration::minutes(i),
                location: Location::Station(f[1].to_string()),
            });
        }
    }
    trips
}

#[test]
fn twenty_saturday_average_matches_rational_oracle() {
    let stations = ["A", "B", "C", "D", "E"].map(String::from).to_vec();
    let cfg = DemandEstimateConfig { weekday: 5, hour_start: 0, hour_end: 24, num_weeks: 20 };
    let est = estimate_demand(&fixture_trips(), &cfg, &Discretiser::Stations(stations)).unwrap();
    // D only occurs on Fridays and E only in the two oldest Saturdays.
    assert_eq!(est.kept_actions, vec![0, 1, 2]);
    assert_eq!(est.dates.len(), 20);
    assert!(est.warnings.is_empty());
    let oracle = [0.3038921995617042, 0.39367193457557237, 0.3024358658627235];
    for (got, want) in est.demand.iter().zip(oracle) {
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
    }
    assert!((est.demand.iter().sum::<f64>() - 1.0).abs() < 1e-12);
}

#[test]
fn estimate_is_a_simplex_for_any_window() {
    let trips = fixture_trips();
    let stations = Discretiser::stations_from(&trips);
    for weeks in [1, 5, 20, 30] {
        let cfg = DemandEstimateConfig { weekday: 5, hour_start: 10, hour_end: 11, num_weeks: weeks };
        let est = estimate_demand(&trips, &cfg, &stations).unwrap();
        assert!(est.demand.iter().all(|&p| p > 0.0));
        assert!((est.demand.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(est.warnings.is_empty(), weeks <= 22);
    }
}
