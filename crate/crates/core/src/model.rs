//! Shared domain types and straight-line kinematics.
//!
//! Positions are planar coordinates in meters. All travel is along straight
//! lines at a constant per-vehicle speed.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Seconds of simulated time.
pub type Seconds = f64;
/// Planar distance.
pub type Meters = f64;
/// Signed monetary amount.
pub type Euros = f64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("speed must be positive and finite, got {0}")]
    NonPositiveSpeed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2D {
    pub x: Meters,
    pub y: Meters,
}

impl Point2D {
    pub const fn new(x: Meters, y: Meters) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn distance(&self, other: &Point2D) -> Meters {
        euclidean_distance(*self, *other)
    }

    pub fn distance_sq(&self, other: &Point2D) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }

    /// Moves from `self` toward `target` by at most `max_step` meters.
    ///
    /// Returns the new position and the distance actually covered. When the
    /// target is within reach the returned position is exactly `target`.
    pub fn step_toward(&self, target: &Point2D, max_step: Meters) -> (Point2D, Meters) {
        let d = self.distance(target);
        if d <= max_step {
            (*target, d)
        } else {
            let f = max_step / d;
            (
                Point2D::new(
                    self.x + (target.x - self.x) * f,
                    self.y + (target.y - self.y) * f,
                ),
                max_step,
            )
        }
    }
}

impl fmt::Display for Point2D {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({:.1}, {:.1})", self.x, self.y)
    }
}

pub fn euclidean_distance(a: Point2D, b: Point2D) -> Meters {
    (a.x - b.x).hypot(a.y - b.y)
}

/// Travel time along the straight line between two points.
pub fn expected_travel_time(from: Point2D, to: Point2D, speed: f64) -> Result<Seconds, ModelError> {
    if !(speed > 0.0 && speed.is_finite()) {
        return Err(ModelError::NonPositiveSpeed(speed));
    }
    Ok(euclidean_distance(from, to) / speed)
}

/// Axis-aligned rectangle `[min_x, max_x] x [min_y, max_y]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub min_x: Meters,
    pub min_y: Meters,
    pub max_x: Meters,
    pub max_y: Meters,
}

impl Region {
    pub fn from_size(width: Meters, height: Meters) -> Self {
        Self {
            min_x: 0.0,
            min_y: 0.0,
            max_x: width,
            max_y: height,
        }
    }

    pub fn width(&self) -> Meters {
        self.max_x - self.min_x
    }

    pub fn height(&self) -> Meters {
        self.max_y - self.min_y
    }

    pub fn center(&self) -> Point2D {
        Point2D::new(
            (self.min_x + self.max_x) / 2.0,
            (self.min_y + self.max_y) / 2.0,
        )
    }

    pub fn contains(&self, p: &Point2D) -> bool {
        p.x >= self.min_x && p.x <= self.max_x && p.y >= self.min_y && p.y <= self.max_y
    }
}

macro_rules! id_type {
    ($name:ident, $prefix:literal) => {
        #[derive(
            Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
        )]
        pub struct $name(pub usize);

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, concat!($prefix, "{}"), self.0)
            }
        }
    };
}

id_type!(VehicleId, "v");
id_type!(RequestId, "r");

/// Lifecycle state of a vehicle.
///
/// Legal transitions are `Idle -> Assigned -> Occupied -> Idle`, plus
/// `Assigned -> Idle` when a vehicle is de-assigned and `Assigned -> Assigned`
/// when it is re-assigned to a different request.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VehicleState {
    Idle,
    Assigned(RequestId),
    Occupied(RequestId),
}

impl VehicleState {
    pub fn is_idle(&self) -> bool {
        matches!(self, VehicleState::Idle)
    }

    pub fn is_occupied(&self) -> bool {
        matches!(self, VehicleState::Occupied(_))
    }

    pub fn request(&self) -> Option<RequestId> {
        match self {
            VehicleState::Idle => None,
            VehicleState::Assigned(r) | VehicleState::Occupied(r) => Some(*r),
        }
    }

    pub fn can_transition_to(&self, next: &VehicleState) -> bool {
        use VehicleState::*;
        match (self, next) {
            (Idle, Assigned(_)) => true,
            (Assigned(_), Assigned(_)) => true,
            (Assigned(_), Idle) => true,
            (Assigned(a), Occupied(b)) => a == b,
            (Occupied(_), Idle) => true,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VehicleKind {
    Ambulance,
    Taxi,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vehicle {
    pub id: VehicleId,
    pub position: Point2D,
    pub state: VehicleState,
    /// Meters per second, always positive.
    pub speed: f64,
    pub home_station: Option<Point2D>,
    pub kind: VehicleKind,
}

impl Vehicle {
    pub fn new(id: VehicleId, position: Point2D, speed: f64, kind: VehicleKind) -> Result<Self, ModelError> {
        if !(speed > 0.0 && speed.is_finite()) {
            return Err(ModelError::NonPositiveSpeed(speed));
        }
        Ok(Self {
            id,
            position,
            state: VehicleState::Idle,
            speed,
            home_station: None,
            kind,
        })
    }

    pub fn with_home(mut self, station: Point2D) -> Self {
        self.home_station = Some(station);
        self
    }

    pub fn travel_time_to(&self, to: Point2D) -> Seconds {
        euclidean_distance(self.position, to) / self.speed
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RequestState {
    Waiting,
    PickedUp,
    Completed,
}

/// A patient or a taxi customer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceRequest {
    pub id: RequestId,
    /// Where the request was raised. Never changes while waiting.
    pub origin: Point2D,
    pub destination: Option<Point2D>,
    pub created_at: Seconds,
    pub state: RequestState,
    pub urgency_deadline: Option<Seconds>,
}

impl ServiceRequest {
    pub fn new(id: RequestId, origin: Point2D, created_at: Seconds) -> Self {
        Self {
            id,
            origin,
            destination: None,
            created_at,
            state: RequestState::Waiting,
            urgency_deadline: None,
        }
    }

    pub fn with_destination(mut self, destination: Point2D) -> Self {
        self.destination = Some(destination);
        self
    }

    /// Origin-to-destination length, zero when there is no destination.
    pub fn trip_length(&self) -> Meters {
        self.destination
            .map(|d| euclidean_distance(self.origin, d))
            .unwrap_or(0.0)
    }
}
