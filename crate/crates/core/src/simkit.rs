//! Batch-spawn free-flight sector simulation with MVP deconfliction.
//!
//! `N` aircraft appear at once inside a circular sector, each bound for an
//! exit waypoint on the boundary. Every step freezes a snapshot, computes
//! each aircraft's command from it, then moves everyone. Energy and path
//! length are integrated with the trapezoidal rule over the speed sampled at
//! step boundaries; the overhead of a transit is its energy per metre
//! relative to steady flight at the best-range speed.

use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::deconflict::{
    combine, detect_pair, recovery_check, AgentId, ConflictMemory, ConflictPair, DetectionParams, KinematicState,
    ResolutionCommand, ResolutionParams, SpeedBounds,
};
use crate::error::{domain, Error, Result};
use crate::features::{extract_features, FeatureContext, FeatureVector, TransitRecord};
use crate::geometry::Vec2;
use crate::powerplant::CruiseModel;
use crate::units::{feet, knots, nautical_miles};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub n_aircraft: usize,
    /// m
    pub sector_radius: f64,
    /// Initial-spacing factor in `d_min = alpha * R / sqrt(N)`.
    pub alpha: f64,
    /// Exit bearing offset range from the entry bearing, rad.
    pub exit_bearing_min: f64,
    pub exit_bearing_max: f64,
    /// Spawn radius as a fraction of the sector radius is drawn from this range.
    pub radial_scale_min: f64,
    pub radial_scale_max: f64,
    /// s
    pub dt: f64,
    /// s
    pub max_sim_time: f64,
    pub seed: u64,
    pub runs: usize,
    pub detection: DetectionParams,
    pub grazing_correction: bool,
    /// m
    pub nmac_threshold: f64,
    /// m
    pub neighbor_radius: f64,
    pub max_spawn_attempts: usize,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        let sector_radius = nautical_miles(10.0);
        Self {
            n_aircraft: 10,
            sector_radius,
            alpha: 0.9 * PI.sqrt(),
            exit_bearing_min: 60f64.to_radians(),
            exit_bearing_max: 180f64.to_radians(),
            radial_scale_min: 0.6,
            radial_scale_max: 1.0,
            dt: 1.0,
            max_sim_time: 3.0 * 2.0 * sector_radius / knots(85.0),
            seed: 42,
            runs: 30,
            detection: DetectionParams::default(),
            grazing_correction: true,
            nmac_threshold: feet(500.0),
            neighbor_radius: nautical_miles(5.0),
            max_spawn_attempts: 10_000,
        }
    }
}

impl ScenarioConfig {
    /// Minimum initial pairwise separation, m.
    pub fn d_min(&self) -> f64 {
        self.alpha * self.sector_radius / (self.n_aircraft as f64).sqrt()
    }

    pub fn with_n(&self, n: usize) -> Self {
        Self {
            n_aircraft: n,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.detection.validate()?;
        if self.n_aircraft < 2 {
            return Err(domain("n_aircraft must be at least 2"));
        }
        if !(self.dt > 0.0 && self.max_sim_time > self.dt) {
            return Err(domain("dt must be positive and below max_sim_time"));
        }
        if !(self.sector_radius > 0.0 && self.alpha > 0.0) {
            return Err(domain("sector_radius and alpha must be positive"));
        }
        if !(0.0 <= self.radial_scale_min
            && self.radial_scale_min <= self.radial_scale_max
            && self.radial_scale_max <= 1.0)
        {
            return Err(domain("radial scale range must satisfy 0 <= min <= max <= 1"));
        }
        if !(0.0 <= self.exit_bearing_min
            && self.exit_bearing_min <= self.exit_bearing_max
            && self.exit_bearing_max <= PI)
        {
            return Err(domain("exit bearing range must lie within [0, 180] degrees"));
        }
        if !(self.d_min() > 2.0 * self.nmac_threshold) {
            return Err(domain(format!(
                "d_min {:.1} m must exceed twice the NMAC threshold ({:.1} m)",
                self.d_min(),
                self.nmac_threshold
            )));
        }
        if self.max_spawn_attempts == 0 || self.runs == 0 {
            return Err(domain("runs and max_spawn_attempts must be at least 1"));
        }
        Ok(())
    }

    /// Seed for run `run` of this density.
    pub fn run_rng(&self, run: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed.wrapping_add(run as u64));
        rng.set_stream(self.n_aircraft as u64);
        rng
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Agent {
    pub id: AgentId,
    pub state: KinematicState,
    pub exit_waypoint: Vec2,
    /// Velocity the aircraft flies when not manoeuvring: best-range speed
    /// toward its exit from where it currently is.
    pub original_velocity: Vec2,
    pub maneuvering: bool,
    pub conflict_memory: Vec<ConflictMemory>,
    /// J
    pub energy_acc: f64,
    /// m
    pub path_length_acc: f64,
    pub active: bool,
    pub start_features_captured: bool,
    pub features: Option<FeatureVector>,
    pub started_in_conflict: bool,
    pub min_separation: f64,
    pub time_in_sector: f64,
    pub timed_out: bool,
    /// Placed below `d_min` because the spacing could not be met.
    pub relaxed_spawn: bool,
    last_sample: Option<(f64, f64)>,
}

impl Agent {
    pub fn new(id: AgentId, position: Vec2, exit_waypoint: Vec2, speed: f64) -> Self {
        let velocity = (exit_waypoint - position).unit().unwrap_or(Vec2::new(1.0, 0.0)) * speed;
        Self {
            id,
            state: KinematicState::new(position, velocity),
            exit_waypoint,
            original_velocity: velocity,
            maneuvering: false,
            conflict_memory: Vec::new(),
            energy_acc: 0.0,
            path_length_acc: 0.0,
            active: true,
            start_features_captured: false,
            features: None,
            started_in_conflict: false,
            min_separation: f64::INFINITY,
            time_in_sector: 0.0,
            timed_out: false,
            relaxed_spawn: false,
            last_sample: None,
        }
    }

    fn nominal_velocity(&self, speed: f64) -> Vec2 {
        (self.exit_waypoint - self.state.position)
            .unit()
            .map(|u| u * speed)
            .unwrap_or(self.original_velocity)
    }

    /// Adds the trapezoid from the previous speed sample to `(speed, power)`.
    fn integrate_to(&mut self, speed: f64, power: f64, dt: f64) {
        if let Some((s0, p0)) = self.last_sample {
            self.energy_acc += 0.5 * (p0 + power) * dt;
            self.path_length_acc += 0.5 * (s0 + speed) * dt;
        }
        self.last_sample = Some((speed, power));
    }
}

/// Draws an exit waypoint on the boundary, 60-180 degrees (by default) from
/// the entry bearing in a random direction.
pub fn assign_exit<R: Rng>(entry: Vec2, config: &ScenarioConfig, rng: &mut R) -> Result<Vec2> {
    if entry.norm() < 1e-9 {
        return Err(domain("entry position must be away from the sector centre"));
    }
    let beta = rng.random_range(config.exit_bearing_min..=config.exit_bearing_max);
    let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    Ok(Vec2::from_angle(entry.angle() + sign * beta) * config.sector_radius)
}

#[derive(Debug, Clone)]
pub struct Spawn {
    pub agents: Vec<Agent>,
    pub relaxed: usize,
}

/// Places `N` aircraft on randomly scaled radials with pairwise spacing of
/// at least `d_min`, resampling only the aircraft being placed.
///
/// When no sample in `max_spawn_attempts` meets `d_min`, the sample with the
/// largest clearance is kept and the agent is flagged; near `N = 60` the
/// spacing rule is beyond what random sequential placement can satisfy.
/// Clearances below the protected-zone radius are rejected outright.
pub fn spawn_scenario<R: Rng>(config: &ScenarioConfig, speed: f64, rng: &mut R) -> Result<Spawn> {
    config.validate()?;
    let d_min = config.d_min();
    let floor = config.detection.protected_radius.max(2.0 * config.nmac_threshold);
    let mut positions: Vec<Vec2> = Vec::with_capacity(config.n_aircraft);
    let mut relaxed_flags = Vec::with_capacity(config.n_aircraft);
    for i in 0..config.n_aircraft {
        let mut best: Option<(f64, Vec2)> = None;
        for _ in 0..config.max_spawn_attempts {
            let theta = rng.random_range(0.0..TAU);
            let u = rng.random_range(config.radial_scale_min..=config.radial_scale_max);
            let p = Vec2::from_angle(theta) * (u * config.sector_radius);
            let clearance = positions.iter().map(|q| q.distance(p)).fold(f64::INFINITY, f64::min);
            if best.is_none_or(|(c, _)| clearance > c) {
                best = Some((clearance, p));
            }
            if clearance >= d_min {
                break;
            }
        }
        let (clearance, p) = best.expect("at least one spawn attempt");
        if clearance < floor || p.norm() < 1e-9 {
            return Err(Error::ScenarioInfeasible {
                agent: i,
                attempts: config.max_spawn_attempts,
            });
        }
        relaxed_flags.push(clearance < d_min);
        positions.push(p);
    }
    let mut agents = Vec::with_capacity(positions.len());
    for (i, p) in positions.into_iter().enumerate() {
        let exit = assign_exit(p, config, rng)?;
        let mut a = Agent::new(i, p, exit, speed);
        a.relaxed_spawn = relaxed_flags[i];
        agents.push(a);
    }
    let relaxed = relaxed_flags.iter().filter(|r| **r).count();
    Ok(Spawn { agents, relaxed })
}

/// What happened during one step.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepEvents {
    pub new_los: usize,
    pub new_nmac: usize,
    pub exited: Vec<AgentId>,
    pub maneuvering: usize,
    pub min_separation: f64,
}

/// A single run in progress.
pub struct Simulation<'a> {
    pub config: &'a ScenarioConfig,
    pub cruise: &'a CruiseModel,
    pub agents: Vec<Agent>,
    pub time: f64,
    pub step_index: usize,
    pub los_count: usize,
    pub nmac_count: usize,
    pub min_separation: f64,
    resolution: ResolutionParams,
    bounds: SpeedBounds,
    // per pair: currently in LoS, and whether this LoS episode reached NMAC
    los_pairs: Vec<(bool, bool)>,
    profiles: Option<Vec<Vec<(f64, f64)>>>,
}

impl<'a> Simulation<'a> {
    pub fn new(config: &'a ScenarioConfig, cruise: &'a CruiseModel, agents: Vec<Agent>) -> Self {
        let n = agents.len();
        Self {
            config,
            cruise,
            agents,
            time: 0.0,
            step_index: 0,
            los_count: 0,
            nmac_count: 0,
            min_separation: f64::INFINITY,
            resolution: ResolutionParams {
                grazing_correction: config.grazing_correction,
                intrusion_dt: config.dt,
            },
            bounds: SpeedBounds {
                min: cruise.config.speed_min,
                max: cruise.config.speed_max,
            },
            los_pairs: vec![(false, false); n * n],
            profiles: None,
        }
    }

    /// Keep every agent's `(time, speed)` samples for inspection.
    pub fn record_profiles(mut self) -> Self {
        self.profiles = Some(vec![Vec::new(); self.agents.len()]);
        self
    }

    pub fn profiles(&self) -> Option<&[Vec<(f64, f64)>]> {
        self.profiles.as_deref()
    }

    pub fn active_count(&self) -> usize {
        self.agents.iter().filter(|a| a.active).count()
    }

    pub fn is_finished(&self) -> bool {
        self.active_count() == 0
    }

    /// Advances every active aircraft by one step.
    pub fn step(&mut self) -> Result<StepEvents> {
        let dt = self.config.dt;
        let vbr = self.cruise.best_range_speed;
        let params = self.config.detection;

        // phase 1: commands from a frozen snapshot
        let snapshot: Vec<(AgentId, KinematicState, Vec2)> = self
            .agents
            .iter()
            .filter(|a| a.active)
            .map(|a| (a.id, a.state, a.exit_waypoint))
            .collect();
        let index_of: Vec<Option<usize>> = {
            let mut v = vec![None; self.agents.len()];
            for (k, (id, _, _)) in snapshot.iter().enumerate() {
                v[*id] = Some(k);
            }
            v
        };
        let others = |k: usize| {
            snapshot
                .iter()
                .enumerate()
                .filter(move |(j, _)| *j != k)
                .map(|(_, (id, s, _))| (*id, s))
        };

        let first_step = self.step_index == 0;
        let conflict_matrix: Vec<Vec<ConflictPair>> = snapshot
            .iter()
            .enumerate()
            .map(|(k, (_, s, _))| others(k).filter_map(|(id, o)| detect_pair(s, id, o, &params)).collect())
            .collect();

        let mut new_velocities = Vec::with_capacity(snapshot.len());
        let mut commands: Vec<Option<ResolutionCommand>> = Vec::with_capacity(snapshot.len());
        for (k, (id, state, _)) in snapshot.iter().enumerate() {
            let agent = &self.agents[*id];
            let nominal = agent.nominal_velocity(vbr);
            let conflicts = &conflict_matrix[k];
            let (velocity, cmd) = if !conflicts.is_empty() {
                let pairs: Vec<(KinematicState, ConflictPair)> = conflicts
                    .iter()
                    .map(|c| (snapshot[index_of[c.intruder].expect("active intruder")].1, *c))
                    .collect();
                let cmd = combine(state, &pairs, &params, &self.resolution, self.bounds);
                (cmd.resulting_velocity, Some(cmd))
            } else if agent.maneuvering {
                if recovery_check(state, others(k), nominal, &agent.conflict_memory, self.time, &params) {
                    (nominal, None)
                } else {
                    (state.velocity, None)
                }
            } else {
                (nominal, None)
            };
            new_velocities.push((velocity, nominal));
            commands.push(cmd);
        }

        if first_step {
            let ctx = FeatureContext {
                n_aircraft: self.config.n_aircraft,
                sector_radius: self.config.sector_radius,
                best_range_speed: vbr,
                neighbor_radius: self.config.neighbor_radius,
                detection: params,
            };
            let in_conflict = |i: usize, j: usize| {
                let target = snapshot[j].0;
                conflict_matrix[i].iter().any(|c| c.intruder == target)
            };
            for (k, (id, _, _)) in snapshot.iter().enumerate() {
                if self.agents[*id].start_features_captured {
                    continue;
                }
                let fv = extract_features(
                    k,
                    &snapshot,
                    &conflict_matrix[k],
                    commands[k].as_ref(),
                    in_conflict,
                    &ctx,
                )?;
                let a = &mut self.agents[*id];
                a.features = Some(fv);
                a.started_in_conflict = !conflict_matrix[k].is_empty();
                a.start_features_captured = true;
            }
        }

        // phase 2: write
        let mut events = StepEvents {
            min_separation: f64::INFINITY,
            ..Default::default()
        };
        for (k, (id, _, _)) in snapshot.iter().enumerate() {
            let (velocity, nominal) = new_velocities[k];
            let conflicts = &conflict_matrix[k];
            let time = self.time;
            let agent = &mut self.agents[*id];
            agent.original_velocity = nominal;
            if !conflicts.is_empty() {
                agent.maneuvering = true;
                for c in conflicts {
                    if !agent.conflict_memory.iter().any(|m| m.intruder == c.intruder) {
                        agent.conflict_memory.push(ConflictMemory {
                            intruder: c.intruder,
                            cpa_time: time + c.t_cpa,
                        });
                    }
                }
            } else if agent.maneuvering && velocity == nominal {
                agent.maneuvering = false;
                agent.conflict_memory.clear();
            }
            if agent.maneuvering {
                events.maneuvering += 1;
            }
            agent.state.velocity = velocity;
            let speed = velocity.norm();
            let power = self.cruise.power(speed)?;
            agent.integrate_to(speed, power, dt);
            if let Some(p) = self.profiles.as_mut() {
                p[*id].push((time, speed));
            }
            agent.state.position += velocity * dt;
            agent.time_in_sector += dt;
        }
        self.time += dt;
        self.step_index += 1;

        self.monitor_separation(&mut events);

        let timeout = self.time >= self.config.max_sim_time;
        let capture_time = self.time;
        for a in self.agents.iter_mut().filter(|a| a.active) {
            let speed = a.state.speed();
            let to_exit = a.exit_waypoint.distance(a.state.position);
            let outbound =
                a.state.position.norm() >= self.config.sector_radius && a.state.position.dot(a.state.velocity) > 0.0;
            if to_exit <= speed * dt || outbound || timeout {
                // closing sample: speed held to the end of the step
                let (s, p) = a.last_sample.expect("an active agent has been integrated");
                a.integrate_to(s, p, dt);
                if let Some(prof) = self.profiles.as_mut() {
                    prof[a.id].push((capture_time, s));
                }
                a.active = false;
                a.timed_out = timeout && !(to_exit <= speed * dt || outbound);
                events.exited.push(a.id);
            }
        }
        Ok(events)
    }

    fn monitor_separation(&mut self, events: &mut StepEvents) {
        let n = self.agents.len();
        let r = self.config.detection.protected_radius;
        let nmac = self.config.nmac_threshold;
        for i in 0..n {
            if !self.agents[i].active {
                continue;
            }
            for j in (i + 1)..n {
                if !self.agents[j].active {
                    continue;
                }
                let d = self.agents[i].state.position.distance(self.agents[j].state.position);
                events.min_separation = events.min_separation.min(d);
                self.agents[i].min_separation = self.agents[i].min_separation.min(d);
                self.agents[j].min_separation = self.agents[j].min_separation.min(d);
                let pair = &mut self.los_pairs[i * n + j];
                if d < r {
                    if !pair.0 {
                        *pair = (true, false);
                        self.los_count += 1;
                        events.new_los += 1;
                    }
                    if d < nmac && !pair.1 {
                        pair.1 = true;
                        self.nmac_count += 1;
                        events.new_nmac += 1;
                    }
                } else {
                    *pair = (false, false);
                }
            }
        }
        self.min_separation = self.min_separation.min(events.min_separation);
    }

    /// Steps until every aircraft has left the sector or timed out.
    pub fn run_to_completion(&mut self) -> Result<()> {
        // the initial geometry counts toward minimum separation
        let mut ev = StepEvents {
            min_separation: f64::INFINITY,
            ..Default::default()
        };
        if self.step_index == 0 {
            self.monitor_separation(&mut ev);
        }
        while !self.is_finished() {
            self.step()?;
        }
        Ok(())
    }
}

/// Fractional energy-per-metre overhead of a finished transit.
pub fn compute_overhead(agent: &Agent, cruise: &CruiseModel) -> Result<f64> {
    if agent.active {
        return Err(domain(format!("agent {} has not finished its transit", agent.id)));
    }
    if !(agent.path_length_acc > 0.0) {
        return Err(domain(format!("agent {} has zero path length", agent.id)));
    }
    let actual = agent.energy_acc / agent.path_length_acc;
    let baseline = cruise.baseline_energy_per_metre;
    Ok((actual - baseline) / baseline)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitOutcome {
    pub agent: AgentId,
    pub delta_e: f64,
    pub features: FeatureVector,
    pub started_in_conflict: bool,
    pub min_separation: f64,
    pub time_in_sector: f64,
    pub incomplete: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub n_aircraft: usize,
    pub run: usize,
    pub transits: Vec<TransitOutcome>,
    pub los_count: usize,
    pub nmac_count: usize,
    pub relaxed_spawns: usize,
    pub min_separation: f64,
}

impl RunResult {
    pub fn records(&self) -> impl Iterator<Item = TransitRecord> + '_ {
        self.transits.iter().map(|t| TransitRecord {
            n_aircraft: self.n_aircraft,
            run: self.run,
            agent: t.agent,
            started_in_conflict: t.started_in_conflict,
            incomplete: t.incomplete,
            features: t.features,
            delta_e: t.delta_e,
        })
    }

    pub fn completed_overheads(&self) -> impl Iterator<Item = f64> + '_ {
        self.transits.iter().filter(|t| !t.incomplete).map(|t| t.delta_e)
    }

    pub fn median_overhead(&self) -> f64 {
        let mut v: Vec<f64> = self.completed_overheads().collect();
        crate::report::percentile(&mut v, 50.0).unwrap_or(f64::NAN)
    }
}

/// Spawns and flies run `run` of `config`.
pub fn run_scenario(config: &ScenarioConfig, cruise: &CruiseModel, run: usize) -> Result<RunResult> {
    let mut rng = config.run_rng(run);
    let spawn = spawn_scenario(config, cruise.best_range_speed, &mut rng)?;
    let mut sim = Simulation::new(config, cruise, spawn.agents);
    sim.run_to_completion()?;
    let mut transits = Vec::with_capacity(sim.agents.len());
    for a in &sim.agents {
        transits.push(TransitOutcome {
            agent: a.id,
            delta_e: compute_overhead(a, cruise)?,
            features: a
                .features
                .ok_or_else(|| domain("features were not captured at step 0"))?,
            started_in_conflict: a.started_in_conflict,
            min_separation: a.min_separation,
            time_in_sector: a.time_in_sector,
            incomplete: a.timed_out,
        });
    }
    Ok(RunResult {
        n_aircraft: config.n_aircraft,
        run,
        transits,
        los_count: sim.los_count,
        nmac_count: sim.nmac_count,
        relaxed_spawns: spawn.relaxed,
        min_separation: sim.min_separation,
    })
}

/// All `config.runs` runs at one density, in run order.
pub fn batch_runs(config: &ScenarioConfig, cruise: &CruiseModel) -> Result<Vec<RunResult>> {
    config.validate()?;
    (0..config.runs)
        .into_par_iter()
        .map(|run| run_scenario(config, cruise, run))
        .collect()
}

/// Batches for each density in `densities`, in the order given.
pub fn density_sweep(base: &ScenarioConfig, cruise: &CruiseModel, densities: &[usize]) -> Result<Vec<RunResult>> {
    let mut out = Vec::new();
    for &n in densities {
        out.extend(batch_runs(&base.with_n(n), cruise)?);
    }
    Ok(out)
}
