//! Synthetic telematics: a persona-driven kinematic point-mass simulator
//! that stands in for a private GPS fleet.
//!
//! Each driver is a [`PersonaConfig`]. A trip integrates speed and heading
//! at 1 Hz: speed is pulled toward the persona's cruise speed and kicked by
//! sparse acceleration events, heading changes only at waypoints and never
//! faster than `turn_sharpness` radians per second, and the resulting track
//! is perturbed by Gaussian GPS jitter. Everything is a pure function of
//! (seed, driver index, trip index), so regeneration is byte-identical.

use std::f64::consts::PI;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::featurize::EARTH_RADIUS_M;
use crate::ingest::{GpsPoint, RawTrip};

use super::mix_seed;

/// Mean-reversion rate of the speed process, per second.
const SPEED_PULL: f64 = 0.1;

/// Hard physical clamp on simulated speed, m/s.
const MAX_SPEED: f64 = 65.0;

/// Stream tag separating persona draws from trip draws.
const PERSONA_STREAM: u64 = 0x5045_5253_4f4e_4131;

/// Behavioral parameters of one synthetic driver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PersonaConfig {
    /// Preferred speed the trip keeps returning to, m/s.
    pub cruise_speed: f64,
    /// Scale of event-driven accelerations, m/s^2.
    pub accel_aggressiveness: f64,
    /// Upper bound on heading change per second, rad/s.
    pub turn_sharpness: f64,
    /// Acceleration events per minute.
    pub speed_change_rate: f64,
    /// GPS noise standard deviation, meters.
    pub jitter: f64,
}

impl PersonaConfig {
    /// Checks physical plausibility. The noise-like fields may be zero
    /// (a zero-jitter, zero-event persona drives perfectly smoothly);
    /// cruise speed must be positive and at most 60 m/s.
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("cruise_speed", self.cruise_speed),
            ("accel_aggressiveness", self.accel_aggressiveness),
            ("turn_sharpness", self.turn_sharpness),
            ("speed_change_rate", self.speed_change_rate),
            ("jitter", self.jitter),
        ];
        for (name, v) in fields {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Config(format!(
                    "persona field {name} must be finite and nonnegative, got {v}"
                )));
            }
        }
        if self.cruise_speed <= 0.0 || self.cruise_speed > 60.0 {
            return Err(Error::Config(format!(
                "cruise_speed must lie in (0, 60] m/s, got {}",
                self.cruise_speed
            )));
        }
        Ok(())
    }
}

/// Spreads `n` personas across the parameter box with a small per-driver
/// perturbation. Cruise speeds cover 6..38 m/s evenly (the dominant
/// separating dimension); the remaining fields cycle through their ranges
/// at irrational rates so no two dimensions correlate.
pub fn auto_personas(n: usize, seed: u64) -> Vec<PersonaConfig> {
    let hop = |i: usize, rate: f64, lo: f64, hi: f64| {
        lo + (hi - lo) * (i as f64 * rate).fract()
    };
    (0..n)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, i as u64, PERSONA_STREAM));
            let frac = if n == 1 { 0.5 } else { i as f64 / (n - 1) as f64 };
            let wobble = 1.0 + 0.04 * (rng.gen::<f64>() - 0.5);
            PersonaConfig {
                cruise_speed: (6.0 + 32.0 * frac) * wobble,
                accel_aggressiveness: hop(i, 0.618_033_988_749_895, 0.6, 2.8),
                turn_sharpness: hop(i, 0.414_213_562_373_095, 0.06, 0.36),
                speed_change_rate: hop(i, 0.732_050_807_568_877, 1.5, 7.5),
                jitter: hop(i, 0.259_921_049_894_873, 0.2, 0.8),
            }
        })
        .collect()
}

/// Generates `n_drivers * trips_per_driver` validated 1 Hz trips. Driver
/// ids are `d000`.. and trip ids `t000`.. in generation order. With
/// `personas = None` the drivers get [`auto_personas`]; otherwise exactly
/// one persona per driver must be supplied.
pub fn generate_synthetic(
    n_drivers: usize,
    trips_per_driver: usize,
    trip_seconds: usize,
    personas: Option<&[PersonaConfig]>,
    seed: u64,
) -> Result<Vec<RawTrip>> {
    if n_drivers == 0 || trips_per_driver == 0 {
        return Err(Error::Config(
            "n_drivers and trips_per_driver must be at least 1".into(),
        ));
    }
    if trip_seconds < 3 {
        return Err(Error::Config(format!(
            "trip_seconds must be at least 3, got {trip_seconds}"
        )));
    }
    let personas: Vec<PersonaConfig> = match personas {
        Some(given) => {
            if given.len() != n_drivers {
                return Err(Error::Config(format!(
                    "{} personas supplied for {n_drivers} drivers",
                    given.len()
                )));
            }
            given.to_vec()
        }
        None => auto_personas(n_drivers, seed),
    };
    for p in &personas {
        p.validate()?;
    }

    let mut trips = Vec::with_capacity(n_drivers * trips_per_driver);
    for (i, persona) in personas.iter().enumerate() {
        for j in 0..trips_per_driver {
            let rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, i as u64, j as u64));
            trips.push(simulate_trip(
                format!("d{i:03}"),
                format!("t{j:03}"),
                trip_seconds,
                persona,
                rng,
            ));
        }
    }
    Ok(trips)
}

/// Integrates one trip. The per-second update order (waypoint, speed
/// event, speed pull, heading, position, jitter) is fixed; changing it
/// would silently change every generated dataset.
fn simulate_trip(
    driver_id: String,
    trip_id: String,
    trip_seconds: usize,
    persona: &PersonaConfig,
    mut rng: ChaCha8Rng,
) -> RawTrip {
    let lat0 = 35.0 + 10.0 * rng.gen::<f64>();
    let lon0 = -80.0 + 10.0 * rng.gen::<f64>();
    let meters_per_deg_lat = EARTH_RADIUS_M.to_radians();
    let meters_per_deg_lon = meters_per_deg_lat * lat0.to_radians().cos();

    let mut heading = rng.gen_range(-PI..PI);
    let mut speed = persona.cruise_speed;
    let (mut east, mut north) = (0.0f64, 0.0f64);

    let mut turn_rate = 0.0;
    let mut turn_left = 0usize;
    let mut until_waypoint = rng.gen_range(15usize..=45);

    let mut accel = 0.0;
    let mut accel_left = 0usize;
    let event_prob = (persona.speed_change_rate / 60.0).min(1.0);

    let point = |east: f64, north: f64, t: i64, rng: &mut ChaCha8Rng| {
        let (mut e, mut n) = (east, north);
        if persona.jitter > 0.0 {
            let de: f64 = StandardNormal.sample(rng);
            let dn: f64 = StandardNormal.sample(rng);
            e += persona.jitter * de;
            n += persona.jitter * dn;
        }
        GpsPoint {
            t,
            lat: lat0 + n / meters_per_deg_lat,
            lon: lon0 + e / meters_per_deg_lon,
        }
    };

    let mut points = Vec::with_capacity(trip_seconds);
    points.push(point(east, north, 0, &mut rng));
    for t in 1..trip_seconds {
        if persona.turn_sharpness > 0.0 {
            if until_waypoint == 0 && turn_left == 0 {
                let total = rng.gen_range(-0.5 * PI..=0.5 * PI);
                let steps = (total.abs() / persona.turn_sharpness).ceil().max(1.0) as usize;
                turn_rate = total / steps as f64;
                turn_left = steps;
                until_waypoint = rng.gen_range(15usize..=45);
            } else {
                until_waypoint = until_waypoint.saturating_sub(1);
            }
        }

        if persona.speed_change_rate > 0.0
            && accel_left == 0
            && rng.gen::<f64>() < event_prob
        {
            let amplitude: f64 = StandardNormal.sample(&mut rng);
            accel = persona.accel_aggressiveness * amplitude;
            accel_left = rng.gen_range(2usize..=6);
        }

        speed += SPEED_PULL * (persona.cruise_speed - speed);
        if accel_left > 0 {
            speed += accel;
            accel_left -= 1;
        }
        speed = speed.clamp(0.0, MAX_SPEED);

        if turn_left > 0 {
            heading += turn_rate;
            if heading > PI {
                heading -= 2.0 * PI;
            } else if heading < -PI {
                heading += 2.0 * PI;
            }
            turn_left -= 1;
        }

        east += speed * heading.sin();
        north += speed * heading.cos();
        points.push(point(east, north, t as i64, &mut rng));
    }

    RawTrip { driver_id, trip_id, points }
}
