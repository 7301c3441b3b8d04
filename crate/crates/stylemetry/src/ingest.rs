//! Parsing, validation, and normalization of raw GPS trips.
//!
//! Input is trip CSV: a header line `driver_id,trip_id,t,lat,lon` followed by
//! one GPS point per row. Rows of one trip need not be contiguous; they are
//! grouped by `(driver_id, trip_id)` and sorted by `t` during validation.
//! After [`validate_trip`] every trip is strictly 1 Hz: consecutive
//! timestamps differ by exactly one second.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Column header of the trip CSV format.
pub const TRIP_CSV_HEADER: &str = "driver_id,trip_id,t,lat,lon";

/// Default maximum timestamp gap (seconds) bridged by interpolation.
pub const DEFAULT_MAX_GAP: i64 = 3;

/// One GPS fix: timestamp in whole seconds, position in decimal degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GpsPoint {
    pub t: i64,
    pub lat: f64,
    pub lon: f64,
}

/// A driver-labeled sequence of GPS points.
///
/// `driver_id` and `trip_id` are opaque strings so external datasets can be
/// ingested unchanged.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTrip {
    pub driver_id: String,
    pub trip_id: String,
    pub points: Vec<GpsPoint>,
}

impl RawTrip {
    pub fn new(driver_id: impl Into<String>, trip_id: impl Into<String>) -> Self {
        RawTrip {
            driver_id: driver_id.into(),
            trip_id: trip_id.into(),
            points: Vec::new(),
        }
    }
}

/// Parses trip CSV text into trips grouped by `(driver_id, trip_id)`.
///
/// Trips appear in order of first occurrence; points keep file order. No
/// validation happens here beyond field parsing; empty input (or a header
/// with no rows) yields an empty list.
pub fn parse_trips<R: BufRead>(reader: R) -> Result<Vec<RawTrip>> {
    let mut trips: Vec<RawTrip> = Vec::new();
    let mut index: HashMap<(String, String), usize> = HashMap::new();

    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let line_no = i + 1;
        let trimmed = line.trim_end_matches('\r');
        if trimmed.is_empty() || (line_no == 1 && trimmed == TRIP_CSV_HEADER) {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').collect();
        if fields.len() != 5 {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected 5 columns, got {}", fields.len()),
            });
        }
        let t = fields[2].trim().parse::<i64>().map_err(|e| Error::Parse {
            line: line_no,
            message: format!("bad timestamp {:?}: {e}", fields[2]),
        })?;
        let lat = fields[3].trim().parse::<f64>().map_err(|e| Error::Parse {
            line: line_no,
            message: format!("bad latitude {:?}: {e}", fields[3]),
        })?;
        let lon = fields[4].trim().parse::<f64>().map_err(|e| Error::Parse {
            line: line_no,
            message: format!("bad longitude {:?}: {e}", fields[4]),
        })?;

        let key = (fields[0].to_string(), fields[1].to_string());
        let slot = *index.entry(key.clone()).or_insert_with(|| {
            trips.push(RawTrip::new(key.0, key.1));
            trips.len() - 1
        });
        trips[slot].points.push(GpsPoint { t, lat, lon });
    }
    Ok(trips)
}

/// Writes trips in trip CSV format. Coordinates are printed with shortest
/// round-trip precision, so `parse_trips` recovers them exactly.
pub fn serialize_trips<W: Write>(trips: &[RawTrip], mut out: W) -> Result<()> {
    writeln!(out, "{TRIP_CSV_HEADER}")?;
    for trip in trips {
        for p in &trip.points {
            writeln!(out, "{},{},{},{},{}", trip.driver_id, trip.trip_id, p.t, p.lat, p.lon)?;
        }
    }
    Ok(())
}

/// Reads and parses a trip CSV file.
pub fn read_trips_csv(path: &Path) -> Result<Vec<RawTrip>> {
    parse_trips(BufReader::new(File::open(path)?))
}

/// Serializes trips to a trip CSV file.
pub fn write_trips_csv(path: &Path, trips: &[RawTrip]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    serialize_trips(trips, &mut out)?;
    out.flush()?;
    Ok(())
}

/// Normalizes one trip to the strict 1 Hz contract.
///
/// Points are sorted by timestamp and exact-duplicate timestamps collapse to
/// their first occurrence. The trip splits wherever consecutive timestamps
/// differ by more than `max_gap` seconds; within a piece, gaps of 2..=max_gap
/// seconds are bridged by linear interpolation of lat/lon at 1 Hz. When the
/// trip splits, each output trip_id gains a `_<index>` suffix; an unsplit
/// trip keeps its id unchanged.
pub fn validate_trip(trip: &RawTrip, max_gap: i64) -> Result<Vec<RawTrip>> {
    if trip.points.is_empty() {
        return Err(Error::Validation(format!(
            "trip {}/{} has no points",
            trip.driver_id, trip.trip_id
        )));
    }
    for p in &trip.points {
        if !p.lat.is_finite() || !p.lon.is_finite() {
            return Err(Error::Validation(format!(
                "trip {}/{} point t={} has non-finite coordinates",
                trip.driver_id, trip.trip_id, p.t
            )));
        }
        if !(-90.0..=90.0).contains(&p.lat) || !(-180.0..=180.0).contains(&p.lon) {
            return Err(Error::Validation(format!(
                "trip {}/{} point t={} out of range: lat={} lon={}",
                trip.driver_id, trip.trip_id, p.t, p.lat, p.lon
            )));
        }
    }

    let mut points = trip.points.clone();
    points.sort_by_key(|p| p.t);
    points.dedup_by_key(|p| p.t);

    // Split into runs whose internal gaps never exceed max_gap.
    let mut pieces: Vec<Vec<GpsPoint>> = Vec::new();
    let mut current = vec![points[0]];
    for pair in points.windows(2) {
        if pair[1].t - pair[0].t > max_gap {
            pieces.push(std::mem::take(&mut current));
        }
        current.push(pair[1]);
    }
    pieces.push(current);

    let split = pieces.len() > 1;
    let mut out = Vec::with_capacity(pieces.len());
    for (i, piece) in pieces.into_iter().enumerate() {
        let mut filled = Vec::with_capacity(piece.len());
        filled.push(piece[0]);
        for pair in piece.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            let gap = b.t - a.t;
            for step in 1..gap {
                let frac = step as f64 / gap as f64;
                filled.push(GpsPoint {
                    t: a.t + step,
                    lat: a.lat + frac * (b.lat - a.lat),
                    lon: a.lon + frac * (b.lon - a.lon),
                });
            }
            filled.push(b);
        }
        let trip_id = if split {
            format!("{}_{i}", trip.trip_id)
        } else {
            trip.trip_id.clone()
        };
        out.push(RawTrip {
            driver_id: trip.driver_id.clone(),
            trip_id,
            points: filled,
        });
    }
    Ok(out)
}

/// Validates every trip in a batch, flattening the split results.
pub fn validate_trips(trips: &[RawTrip], max_gap: i64) -> Result<Vec<RawTrip>> {
    let mut out = Vec::with_capacity(trips.len());
    for trip in trips {
        out.extend(validate_trip(trip, max_gap)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn trip_with_times(times: &[i64]) -> RawTrip {
        RawTrip {
            driver_id: "d1".into(),
            trip_id: "t1".into(),
            points: times
                .iter()
                .map(|&t| GpsPoint { t, lat: t as f64 * 1e-5, lon: t as f64 * 2e-5 })
                .collect(),
        }
    }

    #[test]
    fn parse_groups_by_driver_and_trip() {
        let text = "driver_id,trip_id,t,lat,lon\n\
                    d1,t1,0,1.0,2.0\nd1,t1,1,1.1,2.1\nd1,t1,2,1.2,2.2\n\
                    d1,t2,0,3.0,4.0\nd1,t2,1,3.1,4.1\n";
        let trips = parse_trips(text.as_bytes()).unwrap();
        assert_eq!(trips.len(), 2);
        assert_eq!(trips[0].points.len(), 3);
        assert_eq!(trips[1].points.len(), 2);
        assert_eq!(trips[1].trip_id, "t2");
    }

    #[test]
    fn parse_header_only_is_empty() {
        let trips = parse_trips("driver_id,trip_id,t,lat,lon\n".as_bytes()).unwrap();
        assert!(trips.is_empty());
    }

    #[test]
    fn parse_reports_bad_field_with_line() {
        let text = "driver_id,trip_id,t,lat,lon\nd1,t1,0,abc,2.0\n";
        match parse_trips(text.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn validate_keeps_contiguous_trip_unchanged() {
        let trip = trip_with_times(&[0, 1, 2, 3]);
        let out = validate_trip(&trip, DEFAULT_MAX_GAP).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0], trip);
    }

    #[test]
    fn validate_splits_on_large_gap() {
        let trip = trip_with_times(&[0, 1, 2, 10]);
        let out = validate_trip(&trip, DEFAULT_MAX_GAP).unwrap();
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].trip_id, "t1_0");
        assert_eq!(out[1].trip_id, "t1_1");
        assert_eq!(out[0].points.iter().map(|p| p.t).collect::<Vec<_>>(), vec![0, 1, 2]);
        assert_eq!(out[1].points.iter().map(|p| p.t).collect::<Vec<_>>(), vec![10]);
    }

    #[test]
    fn validate_interpolates_short_gap() {
        let trip = RawTrip {
            driver_id: "d1".into(),
            trip_id: "t1".into(),
            points: vec![
                GpsPoint { t: 0, lat: 10.0, lon: 20.0 },
                GpsPoint { t: 2, lat: 10.2, lon: 20.4 },
            ],
        };
        let out = validate_trip(&trip, DEFAULT_MAX_GAP).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].points.len(), 3);
        let mid = out[0].points[1];
        assert_eq!(mid.t, 1);
        assert!((mid.lat - 10.1).abs() < 1e-12);
        assert!((mid.lon - 20.2).abs() < 1e-12);
    }

    #[test]
    fn validate_sorts_and_collapses_duplicate_timestamps() {
        let mut trip = trip_with_times(&[2, 0, 1]);
        trip.points.push(GpsPoint { t: 1, lat: 0.05, lon: 0.05 });
        let out = validate_trip(&trip, DEFAULT_MAX_GAP).unwrap();
        assert_eq!(out.len(), 1);
        let times: Vec<i64> = out[0].points.iter().map(|p| p.t).collect();
        assert_eq!(times, vec![0, 1, 2]);
        // First occurrence in sorted order wins; the stable sort keeps the
        // original t=1 point ahead of the duplicate appended later.
        assert!((out[0].points[1].lat - 1e-5).abs() < 1e-12);
    }

    #[test]
    fn validate_rejects_out_of_range_latitude() {
        let mut trip = trip_with_times(&[0, 1]);
        trip.points[1].lat = 91.0;
        assert!(matches!(validate_trip(&trip, 3), Err(Error::Validation(_))));
    }

    #[test]
    fn validated_trips_are_strictly_one_hertz() {
        let trip = trip_with_times(&[0, 2, 3, 5, 9, 10, 30]);
        for out in validate_trip(&trip, DEFAULT_MAX_GAP).unwrap() {
            for pair in out.points.windows(2) {
                assert_eq!(pair[1].t - pair[0].t, 1);
            }
        }
    }

    proptest! {
        #[test]
        fn serialize_parse_roundtrip(
            raw_times in proptest::collection::vec(0i64..5000, 1..40),
            lat0 in -80.0f64..80.0,
            lon0 in -170.0f64..170.0,
        ) {
            let mut times = raw_times;
            times.sort_unstable();
            times.dedup();
            let trips = vec![RawTrip {
                driver_id: "d7".into(),
                trip_id: "t3".into(),
                points: times
                    .iter()
                    .map(|&t| GpsPoint { t, lat: lat0 + t as f64 * 1e-6, lon: lon0 - t as f64 * 1e-6 })
                    .collect(),
            }];
            let mut buf = Vec::new();
            serialize_trips(&trips, &mut buf).unwrap();
            let back = parse_trips(buf.as_slice()).unwrap();
            prop_assert_eq!(back, trips);
        }

        #[test]
        fn splitting_conserves_points(raw_times in proptest::collection::vec(0i64..2000, 1..60)) {
            let mut times = raw_times;
            times.sort_unstable();
            times.dedup();
            let trip = trip_with_times(&times);
            let out = validate_trip(&trip, DEFAULT_MAX_GAP).unwrap();
            let originals: usize = out
                .iter()
                .flat_map(|t| t.points.iter())
                .filter(|p| times.binary_search(&p.t).is_ok())
                .count();
            prop_assert_eq!(originals, times.len());
        }
    }
}
