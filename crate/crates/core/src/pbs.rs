//! Particle-based reference simulator.
//!
//! Molecules move in a circular pipe of radius `r0` wrapped into a loop of
//! length `L`: isotropic Brownian motion plus a Poiseuille axial drift with
//! mean velocity `v_eff`, a reflecting pipe wall (see [`WallRule`]), and removal with
//! probability `1 - exp(-f(x) dt)` per step.
//!
//! The population is split into one independent ChaCha8 stream per worker,
//! so results depend on `(seed, n_workers)` but not on thread scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, InvalidParameter, Result};
use crate::model::{integral_ratio, into_result, ChannelConfig, ReceiverSpec, TimeGrid};
use crate::series::TimeSeries;

/// Attempts at redrawing a transverse step before giving up on the reflection.
const MAX_RESAMPLES: usize = 64;

/// Treatment of a transverse step that leaves the pipe.
///
/// Mirroring the radius is only unbiased for steps much smaller than `r0`.
/// At `sqrt(2 D dt) ≈ 0.16 r0` it depletes the region near the wall enough to
/// speed the cloud up by about 1%, which is clearly visible against 10⁴
/// particles. Rejection is a Metropolis step with a symmetric proposal, so the
/// uniform cross-section stays stationary for any step size.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WallRule {
    /// Keep the previous transverse position.
    #[default]
    Reject,
    /// `r -> 2 r0 - r` with the angle kept; the step is redrawn if that still
    /// leaves the pipe.
    Mirror,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PbsConfig {
    pub dt: f64,
    pub t_end: f64,
    pub seed: u64,
    pub n_workers: usize,
    /// Molecular diffusion coefficient; `None` uses the channel's `d_eff`.
    pub d_mol: Option<f64>,
    pub wall: WallRule,
}

impl PbsConfig {
    pub fn new(dt: f64, t_end: f64, seed: u64) -> Self {
        Self {
            dt,
            t_end,
            seed,
            n_workers: 1,
            d_mol: None,
            wall: WallRule::Reject,
        }
    }

    pub fn diffusion(&self, channel: &ChannelConfig) -> f64 {
        self.d_mol.unwrap_or(channel.d_eff)
    }

    pub fn violations(&self) -> Vec<InvalidParameter> {
        let mut v = Vec::new();
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            v.push(InvalidParameter::new("pbs.dt", "dt > 0 violated"));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            v.push(InvalidParameter::new("pbs.t_end", "t_end ≥ 0 violated"));
        }
        if self.n_workers == 0 {
            v.push(InvalidParameter::new("pbs.n_workers", "at least one worker required"));
        }
        if let Some(d) = self.d_mol {
            if !(d > 0.0 && d.is_finite()) {
                v.push(InvalidParameter::new("pbs.d_mol", "d_mol > 0 violated"));
            }
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        into_result(self.violations())
    }

    /// Step-size diagnostics; the simulation still runs when these fire.
    pub fn warnings(&self, channel: &ChannelConfig) -> Vec<String> {
        let mut w = Vec::new();
        let l = channel.loop_length;
        if channel.v_eff * self.dt > l / 1000.0 {
            w.push(format!(
                "advective step v·dt = {:.3e} m exceeds L/1000 = {:.3e} m",
                channel.v_eff * self.dt,
                l / 1000.0
            ));
        }
        if channel.damping.max_rate() * self.dt > 0.01 {
            w.push(format!(
                "removal per step alpha·dt = {:.3e} exceeds 0.01",
                channel.damping.max_rate() * self.dt
            ));
        }
        let sigma = (2.0 * self.diffusion(channel) * self.dt).sqrt();
        if sigma > channel.pipe_radius / 10.0 {
            w.push(format!(
                "diffusive step {sigma:.3e} m exceeds r0/10 = {:.3e} m",
                channel.pipe_radius / 10.0
            ));
        }
        w
    }
}

/// Struct-of-arrays particle state. `laps` counts net forward wraps, so the
/// unwrapped axial position is `x + laps·L`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Population {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    pub alive: Vec<bool>,
    pub laps: Vec<i64>,
}

impl Population {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn alive_count(&self) -> usize {
        self.alive.iter().filter(|&&a| a).count()
    }

    /// Live particles with `a ≤ x ≤ b`.
    pub fn count_in(&self, a: f64, b: f64) -> usize {
        self.x
            .iter()
            .zip(&self.alive)
            .filter(|&(&x, &alive)| alive && x >= a && x <= b)
            .count()
    }

    pub fn unwrapped_x(&self, i: usize, loop_length: f64) -> f64 {
        self.x[i] + self.laps[i] as f64 * loop_length
    }

    fn append(&mut self, other: Population) {
        self.x.extend(other.x);
        self.y.extend(other.y);
        self.z.extend(other.z);
        self.alive.extend(other.alive);
        self.laps.extend(other.laps);
    }
}

/// Per-step constants derived from a channel and particle configuration.
#[derive(Debug, Clone, Copy)]
pub struct StepParams {
    pub dt: f64,
    pub sigma: f64,
    pub v_eff: f64,
    pub pipe_radius: f64,
    pub loop_length: f64,
    pub x_a: f64,
    pub x_b: f64,
    pub wall: WallRule,
    survive_inside: f64,
    survive_outside: f64,
}

impl StepParams {
    pub fn new(channel: &ChannelConfig, pbs: &PbsConfig) -> Self {
        let d = &channel.damping;
        Self {
            dt: pbs.dt,
            sigma: (2.0 * pbs.diffusion(channel) * pbs.dt).sqrt(),
            v_eff: channel.v_eff,
            pipe_radius: channel.pipe_radius,
            loop_length: channel.loop_length,
            x_a: d.x_a,
            x_b: d.x_b,
            wall: pbs.wall,
            survive_inside: (-d.alpha * pbs.dt).exp(),
            survive_outside: (-d.beta * pbs.dt).exp(),
        }
    }

    fn survival(&self, x: f64) -> f64 {
        if x >= self.x_a && x <= self.x_b {
            self.survive_inside
        } else {
            self.survive_outside
        }
    }
}

/// Places `n` particles according to the channel's source. The distributed
/// source spreads them uniformly in `[0, x_w]`; both use a uniform disc
/// cross-section.
pub fn pbs_init<R: Rng>(channel: &ChannelConfig, n: usize, rng: &mut R) -> Population {
    let x_w = channel.source.release_width();
    let r0 = channel.pipe_radius;
    let mut pop = Population {
        x: Vec::with_capacity(n),
        y: Vec::with_capacity(n),
        z: Vec::with_capacity(n),
        alive: vec![true; n],
        laps: vec![0; n],
    };
    for _ in 0..n {
        let x = if x_w > 0.0 { x_w * rng.random::<f64>() } else { 0.0 };
        let r = r0 * rng.random::<f64>().sqrt();
        let theta = std::f64::consts::TAU * rng.random::<f64>();
        pop.x.push(x);
        pop.y.push(r * theta.cos());
        pop.z.push(r * theta.sin());
    }
    pop
}

/// Advances every live particle by one step.
pub fn pbs_step<R: Rng>(pop: &mut Population, p: &StepParams, rng: &mut R) {
    let r0 = p.pipe_radius;
    let r0_sq = r0 * r0;
    for i in 0..pop.len() {
        if !pop.alive[i] {
            continue;
        }
        let (y, z) = (pop.y[i], pop.z[i]);
        let drift = 2.0 * p.v_eff * (1.0 - (y * y + z * z) / r0_sq) * p.dt;
        let dx = p.sigma * rng.sample::<f64, _>(StandardNormal);
        let mut dy = p.sigma * rng.sample::<f64, _>(StandardNormal);
        let mut dz = p.sigma * rng.sample::<f64, _>(StandardNormal);

        let mut attempts = 0;
        let (ny, nz) = loop {
            let (ty, tz) = (y + dy, z + dz);
            let r = (ty * ty + tz * tz).sqrt();
            if r <= r0 {
                break (ty, tz);
            }
            if p.wall == WallRule::Reject {
                break (y, z);
            }
            let reflected = 2.0 * r0 - r;
            if reflected >= 0.0 {
                let s = reflected / r;
                break (ty * s, tz * s);
            }
            attempts += 1;
            if attempts >= MAX_RESAMPLES {
                break (y, z);
            }
            dy = p.sigma * rng.sample::<f64, _>(StandardNormal);
            dz = p.sigma * rng.sample::<f64, _>(StandardNormal);
        };
        pop.y[i] = ny;
        pop.z[i] = nz;

        let raw = pop.x[i] + dx + drift;
        let wrapped = raw.rem_euclid(p.loop_length);
        pop.laps[i] += ((raw - wrapped) / p.loop_length).round() as i64;
        pop.x[i] = wrapped;

        let keep = p.survival(wrapped);
        if keep < 1.0 && rng.random::<f64>() >= keep {
            pop.alive[i] = false;
        }
    }
}

/// Particle state at a requested time.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub t: f64,
    pub population: Population,
}

#[derive(Debug, Clone)]
pub struct PbsOutput {
    /// Live particles in the receiver divided by `n_molecules`.
    pub rx: TimeSeries,
    /// Live fraction of all released particles.
    pub alive_fraction: TimeSeries,
    pub snapshots: Vec<Snapshot>,
    pub warnings: Vec<String>,
}

fn worker_sizes(total: u64, workers: usize) -> Vec<usize> {
    let w = workers as u64;
    (0..w)
        .map(|k| (total / w + u64::from(k < total % w)) as usize)
        .collect()
}

fn steps_to(t: f64, dt: f64, what: &str) -> Result<usize> {
    integral_ratio(t, dt).ok_or_else(|| {
        Error::GridMismatch(format!("{what} = {t} is not an integer multiple of pbs dt = {dt}"))
    })
}

pub fn pbs_run(
    channel: &ChannelConfig,
    pbs: &PbsConfig,
    rx: &ReceiverSpec,
    out_grid: &TimeGrid,
) -> Result<PbsOutput> {
    pbs_run_with_snapshots(channel, pbs, rx, out_grid, &[])
}

/// Runs the particle simulation, sampling the receiver on `out_grid` and
/// recording full snapshots at `snapshot_times`.
pub fn pbs_run_with_snapshots(
    channel: &ChannelConfig,
    pbs: &PbsConfig,
    rx: &ReceiverSpec,
    out_grid: &TimeGrid,
    snapshot_times: &[f64],
) -> Result<PbsOutput> {
    let mut violations = channel.violations();
    violations.extend(pbs.violations());
    violations.extend(rx.violations(channel.loop_length));
    violations.extend(out_grid.violations());
    into_result(violations)?;
    let (a, b) = match *rx {
        ReceiverSpec::Interval { x_rx_a, x_rx_b } => (x_rx_a, x_rx_b),
        ReceiverSpec::PointSample { .. } => {
            return Err(Error::invalid(
                "receiver",
                "particle simulation needs an interval receiver (a point holds no particles)",
            ))
        }
    };
    if out_grid.t_start < 0.0 {
        return Err(Error::invalid("grid.t_start", "t_start ≥ 0 violated"));
    }
    let first = steps_to(out_grid.t_start, pbs.dt, "grid t_start")?;
    let stride = steps_to(out_grid.dt, pbs.dt, "grid dt")?;
    if stride == 0 {
        return Err(Error::GridMismatch("grid dt is zero".into()));
    }
    let sample_steps: Vec<usize> = (0..out_grid.n_samples).map(|k| first + k * stride).collect();
    let mut snap_steps = snapshot_times
        .iter()
        .map(|&t| steps_to(t, pbs.dt, "snapshot time"))
        .collect::<Result<Vec<_>>>()?;
    snap_steps.sort_unstable();
    snap_steps.dedup();
    let last_step = sample_steps
        .last()
        .copied()
        .unwrap_or(0)
        .max(snap_steps.last().copied().unwrap_or(0));

    let params = StepParams::new(channel, pbs);
    let sizes = worker_sizes(channel.n_molecules, pbs.n_workers);

    let results: Vec<(Vec<u64>, Vec<u64>, Vec<Population>)> = sizes
        .par_iter()
        .enumerate()
        .map(|(worker, &n)| {
            let mut rng = ChaCha8Rng::seed_from_u64(pbs.seed);
            rng.set_stream(worker as u64);
            let mut pop = pbs_init(channel, n, &mut rng);
            let mut in_rx = Vec::with_capacity(sample_steps.len());
            let mut alive = Vec::with_capacity(sample_steps.len());
            let mut snaps = Vec::with_capacity(snap_steps.len());
            let (mut next_sample, mut next_snap) = (0, 0);
            for step in 0..=last_step {
                if step > 0 {
                    pbs_step(&mut pop, &params, &mut rng);
                }
                while next_sample < sample_steps.len() && sample_steps[next_sample] == step {
                    in_rx.push(pop.count_in(a, b) as u64);
                    alive.push(pop.alive_count() as u64);
                    next_sample += 1;
                }
                if next_snap < snap_steps.len() && snap_steps[next_snap] == step {
                    snaps.push(pop.clone());
                    next_snap += 1;
                }
            }
            (in_rx, alive, snaps)
        })
        .collect();

    let n_p = channel.n_molecules as f64;
    let mut rx_counts = vec![0u64; sample_steps.len()];
    let mut alive_counts = vec![0u64; sample_steps.len()];
    let mut snapshots: Vec<Snapshot> = snap_steps
        .iter()
        .map(|&s| Snapshot {
            t: s as f64 * pbs.dt,
            population: Population::default(),
        })
        .collect();
    for (in_rx, alive, snaps) in results {
        for (acc, c) in rx_counts.iter_mut().zip(in_rx) {
            *acc += c;
        }
        for (acc, c) in alive_counts.iter_mut().zip(alive) {
            *acc += c;
        }
        for (snap, pop) in snapshots.iter_mut().zip(snaps) {
            snap.population.append(pop);
        }
    }
    let to_frac = |v: Vec<u64>| v.into_iter().map(|c| c as f64 / n_p).collect::<Vec<_>>();
    Ok(PbsOutput {
        rx: TimeSeries::on_grid(out_grid, to_frac(rx_counts)),
        alive_fraction: TimeSeries::on_grid(out_grid, to_frac(alive_counts)),
        snapshots,
        warnings: pbs.warnings(channel),
    })
}
