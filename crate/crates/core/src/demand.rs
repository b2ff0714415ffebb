//! Per-station demand rates, deterministic forecast curves, and stochastic
//! scenario sampling.
//!
//! Rentals and returns at each station follow independent inhomogeneous
//! Poisson processes with piecewise-constant rates. Sampling is exact: per
//! piece the event count is Poisson and the timestamps are i.i.d. uniform.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Layout, Seconds, StationId};

/// Name of the generator and sub-stream scheme, recorded in run manifests so
/// scenarios can be reproduced.
pub const RNG_ALGORITHM: &str = "chacha8/splitmix64-substreams-v1";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DemandError {
    #[error("time {t_s}s outside horizon [0, {horizon_s}]")]
    TimeOutOfHorizon { t_s: f64, horizon_s: Seconds },
    #[error("unknown station {0}")]
    UnknownStation(StationId),
    #[error("rate function breakpoints must start at 0, end at the horizon, and increase")]
    InvalidBreakpoints,
    #[error("rates must be finite and non-negative")]
    InvalidRate,
    #[error("demand model must define exactly the layout stations; problem at station {0}")]
    StationMismatch(StationId),
}

/// Piecewise-constant, right-continuous event rate over `[0, H]`,
/// in events per hour.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFunction {
    /// `m + 1` breakpoints: `0 = t_0 < t_1 < ... < t_m = H`.
    breakpoints: Vec<Seconds>,
    /// Rate on `[t_k, t_{k+1})`, events/hour.
    rates_per_hour: Vec<f64>,
    /// Cumulative expected events at each breakpoint.
    cum_events: Vec<f64>,
}

impl RateFunction {
    pub fn new(breakpoints: Vec<Seconds>, rates_per_hour: Vec<f64>) -> Result<Self, DemandError> {
        if breakpoints.len() < 2
            || breakpoints.len() != rates_per_hour.len() + 1
            || breakpoints[0] != 0
            || breakpoints.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(DemandError::InvalidBreakpoints);
        }
        if rates_per_hour.iter().any(|r| !r.is_finite() || *r < 0.0) {
            return Err(DemandError::InvalidRate);
        }
        let mut cum_events = Vec::with_capacity(breakpoints.len());
        let mut acc = 0.0;
        cum_events.push(0.0);
        for (k, rate) in rates_per_hour.iter().enumerate() {
            let width_s = (breakpoints[k + 1] - breakpoints[k]) as f64;
            acc += rate * width_s / 3600.0;
            cum_events.push(acc);
        }
        Ok(RateFunction { breakpoints, rates_per_hour, cum_events })
    }

    /// Constant rate over the whole horizon.
    pub fn constant(rate_per_hour: f64, horizon_s: Seconds) -> Result<Self, DemandError> {
        RateFunction::new(vec![0, horizon_s], vec![rate_per_hour])
    }

    /// Uniform pieces of `piece_width_s`, one rate each; the last piece is
    /// truncated at the horizon when it does not divide evenly.
    pub fn from_pieces(
        piece_width_s: Seconds,
        rates_per_hour: Vec<f64>,
        horizon_s: Seconds,
    ) -> Result<Self, DemandError> {
        if piece_width_s <= 0 || rates_per_hour.is_empty() {
            return Err(DemandError::InvalidBreakpoints);
        }
        if (rates_per_hour.len() as i64 - 1) * piece_width_s >= horizon_s
            || rates_per_hour.len() as i64 * piece_width_s < horizon_s
        {
            return Err(DemandError::InvalidBreakpoints);
        }
        let mut breakpoints: Vec<Seconds> =
            (0..rates_per_hour.len() as i64).map(|k| k * piece_width_s).collect();
        breakpoints.push(horizon_s);
        RateFunction::new(breakpoints, rates_per_hour)
    }

    pub fn horizon_s(&self) -> Seconds {
        *self.breakpoints.last().unwrap()
    }

    pub fn breakpoints(&self) -> &[Seconds] {
        &self.breakpoints
    }

    pub fn rates_per_hour(&self) -> &[f64] {
        &self.rates_per_hour
    }

    fn piece_index(&self, t: f64) -> usize {
        // Right-continuous: t exactly on a breakpoint belongs to the piece
        // that starts there; t == H falls back to the last piece.
        let k = self.breakpoints.partition_point(|&b| (b as f64) <= t);
        k.saturating_sub(1).min(self.rates_per_hour.len() - 1)
    }

    /// Rate at time `t` (events/hour), right-continuous.
    pub fn rate_at(&self, t: f64) -> f64 {
        self.rates_per_hour[self.piece_index(t)]
    }

    /// Expected events in `[0, t]`: the exact integral of the rate.
    pub fn cumulative(&self, t: f64) -> Result<f64, DemandError> {
        let horizon = self.horizon_s();
        if !(0.0..=horizon as f64).contains(&t) {
            return Err(DemandError::TimeOutOfHorizon { t_s: t, horizon_s: horizon });
        }
        let k = self.piece_index(t);
        let within = t - self.breakpoints[k] as f64;
        Ok(self.cum_events[k] + self.rates_per_hour[k] * within / 3600.0)
    }

    /// Expected events in `[a, b]`; bounds are clamped to the horizon.
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        let h = self.horizon_s() as f64;
        let a = a.clamp(0.0, h);
        let b = b.clamp(0.0, h);
        if b <= a {
            return 0.0;
        }
        self.cumulative(b).unwrap() - self.cumulative(a).unwrap()
    }

    /// Largest rate over the horizon.
    pub fn max_rate(&self) -> f64 {
        self.rates_per_hour.iter().cloned().fold(0.0, f64::max)
    }
}

/// Expected events in `[0, t]` under the given rate function.
pub fn cumulative_forecast(rate: &RateFunction, t_s: f64) -> Result<f64, DemandError> {
    rate.cumulative(t_s)
}

/// Descriptive tags of the day a demand model represents.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DemandTags {
    pub day_type: Option<String>,
    pub month: Option<String>,
    pub weather: Option<String>,
}

/// Rental and return rates for one station.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StationDemand {
    pub station: StationId,
    /// Rate of bike returns, events/hour.
    pub return_rate: RateFunction,
    /// Rate of bike rentals, events/hour.
    pub rental_rate: RateFunction,
}

/// Per-station demand processes for one kind of day.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DemandModel {
    pub tags: DemandTags,
    pub stations: Vec<StationDemand>,
}

impl DemandModel {
    pub fn horizon_s(&self) -> Seconds {
        self.stations.first().map_or(0, |s| s.return_rate.horizon_s())
    }

    pub fn station(&self, id: StationId) -> Option<&StationDemand> {
        self.stations.iter().find(|s| s.station == id)
    }

    /// Checks the model covers exactly the stations of the layout, with one
    /// pair of rate functions per station on the layout horizon.
    pub fn validate_against(&self, layout: &Layout) -> Result<(), DemandError> {
        if self.stations.len() != layout.station_count() {
            let id = self
                .stations
                .iter()
                .map(|s| s.station)
                .find(|id| layout.station(*id).is_none())
                .unwrap_or(StationId(layout.station_count() as u32));
            return Err(DemandError::StationMismatch(id));
        }
        for (idx, sd) in self.stations.iter().enumerate() {
            if sd.station.0 != idx as u32 + 1
                || sd.return_rate.horizon_s() != layout.horizon_s
                || sd.rental_rate.horizon_s() != layout.horizon_s
            {
                return Err(DemandError::StationMismatch(sd.station));
            }
        }
        Ok(())
    }
}

/// Cumulative expected returns, rentals, and their balance for one station,
/// as explicit piecewise-linear curves. The balance ignores stock and
/// capacity entirely, so it may go negative or exceed the station size.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ForecastCurve {
    pub station: StationId,
    /// Union of the two rate functions' breakpoints.
    breakpoints: Vec<Seconds>,
    /// Return rate per piece, events/hour.
    return_rates: Vec<f64>,
    /// Rental rate per piece, events/hour.
    rental_rates: Vec<f64>,
    /// Cumulative expected returns at each breakpoint.
    cum_returns: Vec<f64>,
    /// Cumulative expected rentals at each breakpoint.
    cum_rentals: Vec<f64>,
}

impl ForecastCurve {
    pub fn new(
        station: StationId,
        return_rate: &RateFunction,
        rental_rate: &RateFunction,
    ) -> ForecastCurve {
        let mut breakpoints: Vec<Seconds> = return_rate
            .breakpoints()
            .iter()
            .chain(rental_rate.breakpoints())
            .cloned()
            .collect();
        breakpoints.sort_unstable();
        breakpoints.dedup();
        let n = breakpoints.len() - 1;
        let mut return_rates = Vec::with_capacity(n);
        let mut rental_rates = Vec::with_capacity(n);
        let mut cum_returns = vec![0.0];
        let mut cum_rentals = vec![0.0];
        for k in 0..n {
            let t0 = breakpoints[k];
            let width_h = (breakpoints[k + 1] - t0) as f64 / 3600.0;
            let rr = return_rate.rate_at(t0 as f64);
            let lr = rental_rate.rate_at(t0 as f64);
            return_rates.push(rr);
            rental_rates.push(lr);
            cum_returns.push(cum_returns[k] + rr * width_h);
            cum_rentals.push(cum_rentals[k] + lr * width_h);
        }
        ForecastCurve { station, breakpoints, return_rates, rental_rates, cum_returns, cum_rentals }
    }

    pub fn horizon_s(&self) -> Seconds {
        *self.breakpoints.last().unwrap()
    }

    pub fn breakpoints(&self) -> &[Seconds] {
        &self.breakpoints
    }

    fn piece_index(&self, t: f64) -> usize {
        let k = self.breakpoints.partition_point(|&b| (b as f64) <= t);
        k.saturating_sub(1).min(self.return_rates.len() - 1)
    }

    /// Expected cumulative returns in `[0, t]`.
    pub fn returns_at(&self, t: f64) -> f64 {
        let k = self.piece_index(t);
        self.cum_returns[k] + self.return_rates[k] * (t - self.breakpoints[k] as f64) / 3600.0
    }

    /// Expected cumulative rentals in `[0, t]`.
    pub fn rentals_at(&self, t: f64) -> f64 {
        let k = self.piece_index(t);
        self.cum_rentals[k] + self.rental_rates[k] * (t - self.breakpoints[k] as f64) / 3600.0
    }

    /// The balance of desired flows: expected returns minus rentals in `[0, t]`.
    pub fn balance_at(&self, t: f64) -> f64 {
        self.returns_at(t) - self.rentals_at(t)
    }

    /// Net drift of the balance on the piece starting at breakpoint `k`,
    /// events/hour (positive when returns dominate).
    pub fn net_rate_per_hour(&self, k: usize) -> f64 {
        self.return_rates[k] - self.rental_rates[k]
    }
}

/// Balance forecast for one station of the model.
pub fn balance_forecast(model: &DemandModel, station: StationId) -> Result<ForecastCurve, DemandError> {
    let sd = model.station(station).ok_or(DemandError::UnknownStation(station))?;
    Ok(ForecastCurve::new(station, &sd.return_rate, &sd.rental_rate))
}

/// One sampled day of user requests for a station, timestamps sorted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StationScenario {
    pub station: StationId,
    pub rentals: Vec<Seconds>,
    pub returns: Vec<Seconds>,
}

/// A realization of all station request processes: one simulated day.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scenario {
    pub seed: u64,
    pub stations: Vec<StationScenario>,
}

impl Scenario {
    pub fn total_rentals(&self) -> usize {
        self.stations.iter().map(|s| s.rentals.len()).sum()
    }

    pub fn total_returns(&self) -> usize {
        self.stations.iter().map(|s| s.returns.len()).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RequestKind {
    Rental,
    Return,
}

/// SplitMix64 step; used to derive independent sub-stream seeds.
fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

/// Seed for the (station, kind) sub-stream. Each process gets its own
/// generator so a scenario does not depend on station iteration order or on
/// the presence of other stations.
fn substream_seed(master: u64, station: StationId, kind: RequestKind) -> u64 {
    let tag = ((station.0 as u64) << 1)
        | match kind {
            RequestKind::Rental => 0,
            RequestKind::Return => 1,
        };
    splitmix64(master ^ splitmix64(tag))
}

fn sample_process(rate: &RateFunction, seed: u64) -> Vec<Seconds> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut events = Vec::new();
    let bps = rate.breakpoints();
    for (k, &lambda) in rate.rates_per_hour().iter().enumerate() {
        let (t0, t1) = (bps[k], bps[k + 1]);
        let mean = lambda * (t1 - t0) as f64 / 3600.0;
        if mean <= 0.0 {
            continue;
        }
        let count = Poisson::new(mean).expect("valid Poisson mean").sample(&mut rng) as u64;
        for _ in 0..count {
            events.push(rng.random_range(t0..t1));
        }
    }
    events.sort_unstable();
    events
}

/// Samples one scenario: for every station and request kind, per rate piece,
/// a Poisson count of events placed uniformly in the piece. Deterministic
/// given `(model, seed)`.
pub fn sample_scenario(model: &DemandModel, seed: u64) -> Scenario {
    let stations = model
        .stations
        .iter()
        .map(|sd| StationScenario {
            station: sd.station,
            rentals: sample_process(
                &sd.rental_rate,
                substream_seed(seed, sd.station, RequestKind::Rental),
            ),
            returns: sample_process(
                &sd.return_rate,
                substream_seed(seed, sd.station, RequestKind::Return),
            ),
        })
        .collect();
    Scenario { seed, stations }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    const H: Seconds = 86_400;

    /// Fine-grid Riemann-sum oracle for the cumulative rate integral.
    fn riemann_cumulative(rate: &RateFunction, t: f64, steps: usize) -> f64 {
        let dt = t / steps as f64;
        (0..steps).map(|i| rate.rate_at((i as f64 + 0.5) * dt) * dt / 3600.0).sum()
    }

    #[test]
    fn constant_rate_integral() {
        let rate = RateFunction::constant(4.0, 2 * 3600).unwrap();
        assert_eq!(cumulative_forecast(&rate, 7200.0).unwrap(), 8.0);
        let zero = RateFunction::constant(0.0, H).unwrap();
        assert_eq!(cumulative_forecast(&zero, 50_000.0).unwrap(), 0.0);
    }

    #[test]
    fn two_piece_integral_matches_riemann_oracle() {
        let rate = RateFunction::new(vec![0, 3600, 7200], vec![2.0, 6.0]).unwrap();
        let exact = cumulative_forecast(&rate, 5400.0).unwrap();
        assert_abs_diff_eq!(exact, 5.0, epsilon = 1e-12);
        let oracle = riemann_cumulative(&rate, 5400.0, 200_000);
        assert_abs_diff_eq!(exact, oracle, epsilon = 1e-6);
    }

    #[test]
    fn cumulative_rejects_times_outside_horizon() {
        let rate = RateFunction::constant(1.0, H).unwrap();
        assert!(matches!(
            cumulative_forecast(&rate, -1.0),
            Err(DemandError::TimeOutOfHorizon { .. })
        ));
        assert!(matches!(
            cumulative_forecast(&rate, (H + 1) as f64),
            Err(DemandError::TimeOutOfHorizon { .. })
        ));
        assert!(cumulative_forecast(&rate, H as f64).is_ok());
    }

    fn model_of(stations: Vec<(f64, f64)>) -> DemandModel {
        DemandModel {
            tags: DemandTags::default(),
            stations: stations
                .into_iter()
                .enumerate()
                .map(|(i, (ret, rent))| StationDemand {
                    station: StationId(i as u32 + 1),
                    return_rate: RateFunction::constant(ret, H).unwrap(),
                    rental_rate: RateFunction::constant(rent, H).unwrap(),
                })
                .collect(),
        }
    }

    #[test]
    fn balance_is_zero_under_symmetric_rates() {
        let model = model_of(vec![(3.0, 3.0)]);
        let curve = balance_forecast(&model, StationId(1)).unwrap();
        for t in [0.0, 1000.0, 40_000.0, H as f64] {
            assert_abs_diff_eq!(curve.balance_at(t), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn returns_only_balance() {
        let model = model_of(vec![(3.0, 0.0)]);
        let curve = balance_forecast(&model, StationId(1)).unwrap();
        assert_abs_diff_eq!(curve.balance_at(7200.0), 6.0, epsilon = 1e-12);
        assert!(matches!(
            balance_forecast(&model, StationId(9)),
            Err(DemandError::UnknownStation(StationId(9)))
        ));
    }

    #[test]
    fn mixed_piecewise_balance_matches_grid_oracle() {
        let ret = RateFunction::new(vec![0, 7200, 20_000, H], vec![1.5, 4.0, 0.5]).unwrap();
        let rent = RateFunction::new(vec![0, 3600, 50_000, H], vec![3.0, 1.0, 2.5]).unwrap();
        let curve = ForecastCurve::new(StationId(1), &ret, &rent);
        for i in 0..=1000 {
            let t = H as f64 * i as f64 / 1000.0;
            let oracle = ret.cumulative(t).unwrap() - rent.cumulative(t).unwrap();
            assert_abs_diff_eq!(curve.balance_at(t), oracle, epsilon = 1e-9);
        }
    }

    #[test]
    fn cumulative_is_additive_over_adjacent_intervals() {
        let rate = RateFunction::new(vec![0, 10_000, 30_000, H], vec![2.0, 0.0, 5.5]).unwrap();
        for (t1, t2) in [(5000.0, 20_000.0), (10_000.0, 10_000.0), (0.0, H as f64)] {
            let whole = rate.cumulative(t2).unwrap();
            let split = rate.cumulative(t1).unwrap() + rate.integral(t1, t2);
            assert_abs_diff_eq!(whole, split, epsilon = 1e-12);
        }
    }

    #[test]
    fn zero_rates_sample_empty_scenario() {
        let model = model_of(vec![(0.0, 0.0), (0.0, 0.0)]);
        let scenario = sample_scenario(&model, 12345);
        assert_eq!(scenario.total_rentals() + scenario.total_returns(), 0);
    }

    #[test]
    fn same_seed_gives_identical_scenarios() {
        let model = model_of(vec![(2.0, 3.0), (1.0, 0.5)]);
        let a = sample_scenario(&model, 999);
        let b = sample_scenario(&model, 999);
        assert_eq!(a, b);
        let c = sample_scenario(&model, 1000);
        assert_ne!(a, c);
    }

    #[test]
    fn sampled_mean_matches_poisson_mean() {
        // lambda = 2/h over 10h: mean count 20, sigma = sqrt(20). The mean
        // over 10^4 seeds must fall within 3 sigma / sqrt(10^4).
        let model = DemandModel {
            tags: DemandTags::default(),
            stations: vec![StationDemand {
                station: StationId(1),
                return_rate: RateFunction::constant(0.0, 36_000).unwrap(),
                rental_rate: RateFunction::constant(2.0, 36_000).unwrap(),
            }],
        };
        let n = 10_000u64;
        let total: usize = (0..n).map(|s| sample_scenario(&model, s).total_rentals()).sum();
        let mean = total as f64 / n as f64;
        let tol = 3.0 * 20.0f64.sqrt() / (n as f64).sqrt();
        assert!((mean - 20.0).abs() < tol, "mean {mean} outside 20 +- {tol}");
    }

    #[test]
    fn substreams_are_independent_of_other_stations() {
        let small = model_of(vec![(2.0, 3.0)]);
        let big = model_of(vec![(2.0, 3.0), (9.0, 1.0), (0.25, 7.0)]);
        for seed in [7u64, 8, 1 << 40] {
            let a = sample_scenario(&small, seed);
            let b = sample_scenario(&big, seed);
            assert_eq!(a.stations[0], b.stations[0]);
        }
    }

    #[test]
    fn timestamps_are_sorted_and_inside_pieces() {
        let rate = RateFunction::new(vec![0, 900, 1800, H], vec![30.0, 0.0, 4.0]).unwrap();
        let model = DemandModel {
            tags: DemandTags::default(),
            stations: vec![StationDemand {
                station: StationId(1),
                return_rate: rate.clone(),
                rental_rate: rate,
            }],
        };
        let s = sample_scenario(&model, 4242);
        let evs = &s.stations[0].rentals;
        assert!(evs.windows(2).all(|w| w[0] <= w[1]));
        assert!(evs.iter().all(|&t| (0..H).contains(&t)));
        // No events in the zero-rate piece.
        assert!(evs.iter().all(|&t| !(900..1800).contains(&t)));
    }
}
