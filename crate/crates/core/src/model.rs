//! Static problem data: stations and their travel network, the relocation
//! fleet, and the dynamic system state shared by the simulation engine.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Seconds since midnight. The whole simulation timeline is integer seconds.
pub type Seconds = i64;

/// Default day length: the service runs around the clock.
pub const DEFAULT_HORIZON_S: Seconds = 86_400;

/// Station identifier; stations are numbered contiguously `1..=n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StationId(pub u32);

impl std::fmt::Display for StationId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Vehicle identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VehicleId(pub u32);

impl std::fmt::Display for VehicleId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Node in the travel network: node 0 is the depot, node `i >= 1` is station `i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl NodeId {
    pub const DEPOT: NodeId = NodeId(0);

    pub fn station(id: StationId) -> NodeId {
        NodeId(id.0)
    }

    pub fn as_station(self) -> Option<StationId> {
        (self.0 > 0).then_some(StationId(self.0))
    }

    pub fn is_depot(self) -> bool {
        self.0 == 0
    }
}

impl std::fmt::Display for NodeId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.is_depot() {
            write!(f, "depot")
        } else {
            write!(f, "station {}", self.0)
        }
    }
}

/// Mean earth radius in meters, for haversine distances.
const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// Great-circle distance in meters between two (lat, lon) points in degrees.
pub fn haversine_m(a: (f64, f64), b: (f64, f64)) -> f64 {
    let (lat1, lon1) = (a.0.to_radians(), a.1.to_radians());
    let (lat2, lon2) = (b.0.to_radians(), b.1.to_radians());
    let dlat = lat2 - lat1;
    let dlon = lon2 - lon1;
    let h = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * h.sqrt().asin()
}

/// Complete directed travel network over the depot (node 0) and `n` stations.
///
/// Travel times are whole seconds, distances meters. Every ordered pair is
/// defined; the diagonal is zero.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TravelNetwork {
    station_count: usize,
    travel_time_s: Vec<Seconds>,
    distance_m: Vec<f64>,
}

impl TravelNetwork {
    /// Builds a network from explicit `(n+1) x (n+1)` matrices, row-major,
    /// node 0 first. A missing distance matrix defaults to zero distances.
    pub fn from_matrices(
        travel_time_s: &[Vec<Seconds>],
        distance_m: Option<&[Vec<f64>]>,
    ) -> Result<Self, Vec<ValidationError>> {
        let nodes = travel_time_s.len();
        let mut errors = Vec::new();
        if nodes == 0 {
            errors.push(ValidationError::MissingTravelEntry {
                from: NodeId::DEPOT,
                to: NodeId::DEPOT,
            });
            return Err(errors);
        }
        let mut times = vec![0i64; nodes * nodes];
        let mut dists = vec![0f64; nodes * nodes];
        for (i, row) in travel_time_s.iter().enumerate() {
            for j in 0..nodes {
                match row.get(j) {
                    Some(&c) if c < 0 => errors.push(ValidationError::NegativeTravelTime {
                        from: NodeId(i as u32),
                        to: NodeId(j as u32),
                    }),
                    Some(&c) => {
                        if i == j && c != 0 {
                            errors.push(ValidationError::NonZeroDiagonal { node: NodeId(i as u32) });
                        }
                        times[i * nodes + j] = c;
                    }
                    None => errors.push(ValidationError::MissingTravelEntry {
                        from: NodeId(i as u32),
                        to: NodeId(j as u32),
                    }),
                }
            }
        }
        if let Some(dm) = distance_m {
            for i in 0..nodes {
                for j in 0..nodes {
                    match dm.get(i).and_then(|row| row.get(j)) {
                        Some(&d) if d < 0.0 => {
                            errors.push(ValidationError::NegativeTravelTime {
                                from: NodeId(i as u32),
                                to: NodeId(j as u32),
                            })
                        }
                        Some(&d) => {
                            if i == j && d != 0.0 {
                                errors
                                    .push(ValidationError::NonZeroDiagonal { node: NodeId(i as u32) });
                            }
                            dists[i * nodes + j] = d;
                        }
                        None => errors.push(ValidationError::MissingTravelEntry {
                            from: NodeId(i as u32),
                            to: NodeId(j as u32),
                        }),
                    }
                }
            }
        }
        if errors.is_empty() {
            Ok(TravelNetwork {
                station_count: nodes - 1,
                travel_time_s: times,
                distance_m: dists,
            })
        } else {
            Err(errors)
        }
    }

    /// Builds a network from node coordinates and a constant vehicle speed.
    /// Times are haversine distance over speed, rounded to whole seconds.
    pub fn from_coordinates(
        depot: (f64, f64),
        stations: &[(f64, f64)],
        speed_kmh: f64,
    ) -> Result<Self, Vec<ValidationError>> {
        if !(speed_kmh > 0.0) {
            return Err(vec![ValidationError::NonPositiveSpeed { speed_kmh }]);
        }
        let nodes = stations.len() + 1;
        let coord = |i: usize| if i == 0 { depot } else { stations[i - 1] };
        let speed_ms = speed_kmh / 3.6;
        let mut times = vec![0i64; nodes * nodes];
        let mut dists = vec![0f64; nodes * nodes];
        for i in 0..nodes {
            for j in 0..nodes {
                if i == j {
                    continue;
                }
                let d = haversine_m(coord(i), coord(j));
                dists[i * nodes + j] = d;
                times[i * nodes + j] = (d / speed_ms).round() as i64;
            }
        }
        Ok(TravelNetwork {
            station_count: nodes - 1,
            travel_time_s: times,
            distance_m: dists,
        })
    }

    pub fn station_count(&self) -> usize {
        self.station_count
    }

    fn index(&self, i: NodeId, j: NodeId) -> Result<usize, ModelError> {
        let nodes = self.station_count + 1;
        if (i.0 as usize) >= nodes {
            return Err(ModelError::UnknownNode(i));
        }
        if (j.0 as usize) >= nodes {
            return Err(ModelError::UnknownNode(j));
        }
        Ok(i.0 as usize * nodes + j.0 as usize)
    }

    /// Travel time `c_ij` in seconds for a vehicle going directly `i -> j`.
    pub fn travel_time(&self, i: NodeId, j: NodeId) -> Result<Seconds, ModelError> {
        Ok(self.travel_time_s[self.index(i, j)?])
    }

    /// Distance `d_ij` in meters for the direct `i -> j` leg.
    pub fn distance(&self, i: NodeId, j: NodeId) -> Result<f64, ModelError> {
        Ok(self.distance_m[self.index(i, j)?])
    }
}

/// A rental station: a row of lockable stands.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Station {
    pub id: StationId,
    /// Number of stands; the stock can never exceed this.
    pub capacity: u32,
    pub name: Option<String>,
    pub coordinates: Option<(f64, f64)>,
}

/// Stations, their capacities, and the travel network, plus the day horizon.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Layout {
    pub network: TravelNetwork,
    pub stations: Vec<Station>,
    pub horizon_s: Seconds,
}

impl Layout {
    pub fn station_count(&self) -> usize {
        self.stations.len()
    }

    pub fn station(&self, id: StationId) -> Option<&Station> {
        self.stations.get(id.0 as usize - 1)
    }

    pub fn capacities(&self) -> Vec<u32> {
        self.stations.iter().map(|s| s.capacity).collect()
    }
}

/// A relocation vehicle and the work shift of its operator.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Vehicle {
    pub id: VehicleId,
    /// Maximum number of bikes on board.
    pub capacity: u32,
    pub shift_start_s: Seconds,
    pub shift_end_s: Seconds,
}

/// The relocation fleet. May be empty: a zero-vehicle baseline is a
/// supported configuration.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Fleet {
    pub vehicles: Vec<Vehicle>,
}

impl Fleet {
    pub fn len(&self) -> usize {
        self.vehicles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vehicles.is_empty()
    }
}

/// A validated (layout, fleet) pair under evaluation.
#[derive(Debug, Clone)]
pub struct Setting {
    layout: Layout,
    fleet: Fleet,
}

impl Setting {
    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn fleet(&self) -> &Fleet {
        &self.fleet
    }
}

/// A single invariant violation found while validating a setting.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ValidationError {
    #[error("station {station} has non-positive capacity {capacity}")]
    NonPositiveCapacity { station: StationId, capacity: u32 },
    #[error("vehicle {vehicle} has non-positive capacity {capacity}")]
    NonPositiveVehicleCapacity { vehicle: VehicleId, capacity: u32 },
    #[error("duplicate station id {0}")]
    DuplicateStationId(StationId),
    #[error("station ids must be contiguous 1..=n: expected {expected}, found {found}")]
    NonContiguousStationIds { expected: u32, found: u32 },
    #[error("vehicle {vehicle} shift [{start_s}, {end_s}] is empty or outside [0, {horizon_s}]")]
    ShiftOutsideHorizon {
        vehicle: VehicleId,
        start_s: Seconds,
        end_s: Seconds,
        horizon_s: Seconds,
    },
    #[error("duplicate vehicle id {0}")]
    DuplicateVehicleId(VehicleId),
    #[error("travel entry {from} -> {to} is missing")]
    MissingTravelEntry { from: NodeId, to: NodeId },
    #[error("negative travel time or distance for {from} -> {to}")]
    NegativeTravelTime { from: NodeId, to: NodeId },
    #[error("non-zero travel time or distance on the diagonal at {node}")]
    NonZeroDiagonal { node: NodeId },
    #[error("travel speed must be positive, got {speed_kmh}")]
    NonPositiveSpeed { speed_kmh: f64 },
    #[error("network has {network} stations but the layout lists {stations}")]
    StationCountMismatch { network: usize, stations: usize },
    #[error("horizon must be positive, got {0}")]
    NonPositiveHorizon(Seconds),
}

/// Errors from lookups against a validated model.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
}

/// Checks every type invariant of a layout/fleet combination and returns the
/// setting only if all hold. Violations are collected, not fail-fast.
pub fn validate_setting(layout: Layout, fleet: Fleet) -> Result<Setting, Vec<ValidationError>> {
    let mut errors = Vec::new();
    if layout.horizon_s <= 0 {
        errors.push(ValidationError::NonPositiveHorizon(layout.horizon_s));
    }
    if layout.network.station_count() != layout.stations.len() {
        errors.push(ValidationError::StationCountMismatch {
            network: layout.network.station_count(),
            stations: layout.stations.len(),
        });
    }
    let mut seen = std::collections::HashSet::new();
    for (idx, station) in layout.stations.iter().enumerate() {
        if station.capacity == 0 {
            errors.push(ValidationError::NonPositiveCapacity {
                station: station.id,
                capacity: station.capacity,
            });
        }
        if !seen.insert(station.id) {
            errors.push(ValidationError::DuplicateStationId(station.id));
        } else if station.id.0 != idx as u32 + 1 {
            errors.push(ValidationError::NonContiguousStationIds {
                expected: idx as u32 + 1,
                found: station.id.0,
            });
        }
    }
    let mut seen_vehicles = std::collections::HashSet::new();
    for vehicle in &fleet.vehicles {
        if vehicle.capacity == 0 {
            errors.push(ValidationError::NonPositiveVehicleCapacity {
                vehicle: vehicle.id,
                capacity: vehicle.capacity,
            });
        }
        if !seen_vehicles.insert(vehicle.id) {
            errors.push(ValidationError::DuplicateVehicleId(vehicle.id));
        }
        let ok = 0 <= vehicle.shift_start_s
            && vehicle.shift_start_s < vehicle.shift_end_s
            && vehicle.shift_end_s <= layout.horizon_s;
        if !ok {
            errors.push(ValidationError::ShiftOutsideHorizon {
                vehicle: vehicle.id,
                start_s: vehicle.shift_start_s,
                end_s: vehicle.shift_end_s,
                horizon_s: layout.horizon_s,
            });
        }
    }
    if errors.is_empty() {
        Ok(Setting { layout, fleet })
    } else {
        Err(errors)
    }
}

/// One planned stop of a vehicle tour: where, when, and the signed exchange.
/// Positive amounts unload bikes to the station.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlannedVisit {
    pub station: StationId,
    pub planned_arrival_s: Seconds,
    /// Planned intervention amount; positive unloads bikes to the station.
    pub amount: i32,
}

/// Where a vehicle currently is in its duty cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VehicleLocation {
    /// Shift has not started yet.
    OffDuty,
    /// Parked at the depot, free to be dispatched.
    AtDepot,
    /// Loading its initial half-capacity at the depot until the given time.
    LoadingAtDepot { until: Seconds },
    /// Standing at a station, idle or holding for a timed departure.
    AtStation { station: StationId },
    /// Loading/unloading bikes at a station until the given time.
    Serving { station: StationId, until: Seconds },
    /// Driving toward a committed station visit.
    EnRoute { from: NodeId, to: StationId, arrive_at: Seconds },
    /// Driving back to the depot for the end of the shift.
    ReturningToDepot { from: NodeId, arrive_at: Seconds },
    /// Shift over, bikes handed back to the depot pool.
    Done,
}

/// Dynamic state of one vehicle during a simulation.
#[derive(Debug, Clone)]
pub struct VehicleState {
    pub vehicle: Vehicle,
    pub load: u32,
    pub location: VehicleLocation,
    /// Upcoming planned visits; when en route, the first entry is the
    /// committed leg and only its amount may still change.
    pub tour: Vec<PlannedVisit>,
}

/// Full dynamic state of the system at one instant.
#[derive(Debug, Clone)]
pub struct SystemState {
    pub clock: Seconds,
    /// Bikes parked per station, indexed by station id - 1.
    pub stocks: Vec<u32>,
    pub depot_pool: u64,
    pub vehicles: Vec<VehicleState>,
}

impl SystemState {
    pub fn stock(&self, id: StationId) -> u32 {
        self.stocks[id.0 as usize - 1]
    }
}
