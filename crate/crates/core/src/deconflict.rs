//! State-based conflict detection and Modified Voltage Potential resolution.
//!
//! Detection extrapolates both aircraft at constant velocity and flags a
//! conflict when the closest point of approach (CPA) falls inside the
//! protected zone within the look-ahead horizon. Resolution pushes the
//! ownship along the CPA miss vector far enough that the predicted relative
//! track just touches the protected-zone boundary. Each aircraft resolves
//! independently, so a conflicting pair produces mirrored manoeuvres.
//!
//! Relative quantities are always ownship minus intruder.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::geometry::{wrap_angle, Vec2};
use crate::units::{nautical_miles, METERS_PER_NAUTICAL_MILE};

pub type AgentId = usize;

/// Relative speeds at or below this are treated as parallel flight, m/s.
pub const PARALLEL_EPS: f64 = 1e-9;

const DEGENERATE_MISS: f64 = 1e-9;

/// Time constant of the severity weighting as a fraction of the look-ahead.
pub const SEVERITY_TIME_FRACTION: f64 = 0.35;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct KinematicState {
    pub position: Vec2,
    pub velocity: Vec2,
}

impl KinematicState {
    pub fn new(position: Vec2, velocity: Vec2) -> Self {
        Self { position, velocity }
    }

    pub fn speed(&self) -> f64 {
        self.velocity.norm()
    }

    pub fn with_velocity(&self, velocity: Vec2) -> Self {
        Self {
            position: self.position,
            velocity,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionParams {
    /// Protected-zone radius, m.
    pub protected_radius: f64,
    /// Look-ahead horizon, s.
    pub lookahead: f64,
}

impl Default for DetectionParams {
    fn default() -> Self {
        Self {
            protected_radius: nautical_miles(0.6),
            lookahead: 90.0,
        }
    }
}

impl DetectionParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.protected_radius > 0.0 && self.lookahead > 0.0) {
            return Err(domain("protected radius and look-ahead must be positive"));
        }
        Ok(())
    }

    pub fn protected_radius_nm(&self) -> f64 {
        self.protected_radius / METERS_PER_NAUTICAL_MILE
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResolutionParams {
    /// Enlarge the push so the new relative track is tangent to the
    /// protected zone instead of merely placing the old CPA point on it.
    pub grazing_correction: bool,
    /// Time step used to size the push when already inside the zone, s.
    pub intrusion_dt: f64,
}

impl Default for ResolutionParams {
    fn default() -> Self {
        Self {
            grazing_correction: true,
            intrusion_dt: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cpa {
    pub t_cpa: f64,
    /// Relative position (ownship minus intruder) at the CPA.
    pub d_cpa_vec: Vec2,
}

impl Cpa {
    pub fn d_cpa(&self) -> f64 {
        self.d_cpa_vec.norm()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConflictPair {
    pub intruder: AgentId,
    pub t_cpa: f64,
    pub d_cpa_vec: Vec2,
    pub d_cpa: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResolutionCommand {
    /// Summed MVP velocity change before the speed clamp.
    pub delta_v: Vec2,
    /// Own velocity plus `delta_v`, magnitude clamped into the speed band.
    pub resulting_velocity: Vec2,
}

impl ResolutionCommand {
    /// Signed heading change from `from` to the commanded velocity, rad.
    pub fn heading_change(&self, from: Vec2) -> f64 {
        wrap_angle(self.resulting_velocity.angle() - from.angle())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeedBounds {
    pub min: f64,
    pub max: f64,
}

/// A conflict remembered for recovery: who, and the absolute CPA time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConflictMemory {
    pub intruder: AgentId,
    pub cpa_time: f64,
}

/// Closest point of approach under constant-velocity extrapolation.
pub fn cpa(own: &KinematicState, intruder: &KinematicState) -> Cpa {
    let d = own.position - intruder.position;
    let v = own.velocity - intruder.velocity;
    let v2 = v.norm_sq();
    let t_cpa = if v2.sqrt() > PARALLEL_EPS {
        (-d.dot(v) / v2).max(0.0)
    } else {
        0.0
    };
    Cpa {
        t_cpa,
        d_cpa_vec: d + v * t_cpa,
    }
}

/// Conflict test for one intruder; current intrusions always count.
pub fn detect_pair(
    own: &KinematicState,
    intruder_id: AgentId,
    intruder: &KinematicState,
    params: &DetectionParams,
) -> Option<ConflictPair> {
    let c = cpa(own, intruder);
    let d_cpa = c.d_cpa();
    if d_cpa < params.protected_radius && c.t_cpa < params.lookahead {
        return Some(ConflictPair {
            intruder: intruder_id,
            t_cpa: c.t_cpa,
            d_cpa_vec: c.d_cpa_vec,
            d_cpa,
        });
    }
    let d = own.position - intruder.position;
    (d.norm() < params.protected_radius).then(|| ConflictPair {
        intruder: intruder_id,
        t_cpa: 0.0,
        d_cpa_vec: d,
        d_cpa: d.norm(),
    })
}

/// All conflicts of `own` against `others`. The caller excludes `own`.
pub fn detect<'a, I>(own: &KinematicState, others: I, params: &DetectionParams) -> Vec<ConflictPair>
where
    I: IntoIterator<Item = (AgentId, &'a KinematicState)>,
{
    others
        .into_iter()
        .filter_map(|(id, s)| detect_pair(own, id, s, params))
        .collect()
}

/// Direction used when the miss vector vanishes: perpendicular to the
/// relative velocity on the side that turns the ownship clockwise.
fn degenerate_direction(own: &KinematicState, intruder: &KinematicState) -> Vec2 {
    let rel = own.velocity - intruder.velocity;
    rel.perp_cw()
        .unit()
        .or_else(|| own.velocity.perp_cw().unit())
        .unwrap_or(Vec2::new(1.0, 0.0))
}

/// MVP velocity change for a single conflict.
pub fn mvp_resolve(
    own: &KinematicState,
    intruder: &KinematicState,
    conflict: &ConflictPair,
    params: &DetectionParams,
    resolution: &ResolutionParams,
) -> Vec2 {
    let r = params.protected_radius;
    let direction = if conflict.d_cpa > DEGENERATE_MISS {
        conflict.d_cpa_vec / conflict.d_cpa
    } else {
        degenerate_direction(own, intruder)
    };
    if conflict.t_cpa <= 0.0 {
        // already inside and not closing: push straight out
        let depth = (r - conflict.d_cpa).max(0.0);
        return direction * (depth / resolution.intrusion_dt);
    }
    let dist = own.position.distance(intruder.position);
    let mut target = r;
    if resolution.grazing_correction && r < dist && conflict.d_cpa < dist {
        let erratum = ((r / dist).asin() - (conflict.d_cpa / dist).asin()).cos();
        target = r / erratum;
    }
    direction * ((target - conflict.d_cpa).max(0.0) / conflict.t_cpa)
}

/// Sums the MVP vectors of every conflict and clamps the resulting speed.
pub fn combine(
    own: &KinematicState,
    conflicts: &[(KinematicState, ConflictPair)],
    params: &DetectionParams,
    resolution: &ResolutionParams,
    bounds: SpeedBounds,
) -> ResolutionCommand {
    let mut delta_v = Vec2::ZERO;
    for (intruder, conflict) in conflicts {
        delta_v += mvp_resolve(own, intruder, conflict, params, resolution);
    }
    let raw = own.velocity + delta_v;
    let resulting_velocity = match raw.unit() {
        Some(u) => u * raw.norm().clamp(bounds.min, bounds.max),
        // exact cancellation of speed: keep the old heading at minimum speed
        None => own.velocity.unit().unwrap_or(Vec2::new(1.0, 0.0)) * bounds.min,
    };
    ResolutionCommand {
        delta_v,
        resulting_velocity,
    }
}

/// Whether a manoeuvring aircraft may return to `resume_velocity`: every
/// remembered CPA time has passed and the resumed track is conflict free.
pub fn recovery_check<'a, I>(
    own: &KinematicState,
    others: I,
    resume_velocity: Vec2,
    memory: &[ConflictMemory],
    now: f64,
    params: &DetectionParams,
) -> bool
where
    I: IntoIterator<Item = (AgentId, &'a KinematicState)>,
{
    if memory.iter().any(|m| now <= m.cpa_time) {
        return false;
    }
    let resumed = own.with_velocity(resume_velocity);
    others
        .into_iter()
        .all(|(id, s)| detect_pair(&resumed, id, s, params).is_none())
}

/// Conflict-severity weight: imminence times intrusion depth, averaged over
/// the other `n_aircraft - 1` aircraft.
pub fn severity(conflicts: &[ConflictPair], n_aircraft: usize, params: &DetectionParams) -> Result<f64> {
    if n_aircraft < 2 {
        return Err(domain(format!(
            "severity needs at least two aircraft, got {n_aircraft}"
        )));
    }
    let r = params.protected_radius;
    let tau = SEVERITY_TIME_FRACTION * params.lookahead;
    let sum: f64 = conflicts
        .iter()
        .map(|c| (-c.t_cpa / tau).exp() * ((r - c.d_cpa) / r).max(0.0))
        .sum();
    Ok(sum / (n_aircraft - 1) as f64)
}
