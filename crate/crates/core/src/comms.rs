//! On-off keying on top of the channel model: impulse-train sequences,
//! superposition of single-shot responses, and the split of the received
//! signal into desired signal, channel ISI, inter-loop ISI and offset ISI.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{integral_ratio, ChannelConfig, ReceiverSpec, TimeGrid};
use crate::series::TimeSeries;
use crate::spectral::{open_loop_reference, rx_signal, solve};

pub const DEFAULT_EPSILON: f64 = 0.8;

/// Relative floor below which the recirculating signal counts as absent.
pub const DENOMINATOR_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BitSequence {
    pub bits: Vec<bool>,
    pub symbol_duration: f64,
    pub t_start: f64,
}

impl BitSequence {
    pub fn new(bits: Vec<bool>, symbol_duration: f64, t_start: f64) -> Result<Self> {
        let mut v = Vec::new();
        if bits.is_empty() {
            v.push(crate::InvalidParameter::new("sequence.bits", "at least one bit required"));
        }
        if !(symbol_duration > 0.0 && symbol_duration.is_finite()) {
            v.push(crate::InvalidParameter::new("sequence.symbol_duration", "T_S > 0 violated"));
        }
        if !t_start.is_finite() {
            v.push(crate::InvalidParameter::new("sequence.t_start", "must be finite"));
        }
        crate::model::into_result(v)?;
        Ok(Self {
            bits,
            symbol_duration,
            t_start,
        })
    }

    /// Independent fair bits from a seeded ChaCha8 stream.
    pub fn random(len: usize, symbol_duration: f64, t_start: f64, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bits = (0..len).map(|_| rng.random::<bool>()).collect();
        Self::new(bits, symbol_duration, t_start)
    }

    /// Random bits where every aligned pair holds exactly one 1, so the ones
    /// fraction is exactly 1/2 (a trailing odd bit is drawn fairly).
    pub fn random_balanced(len: usize, symbol_duration: f64, t_start: f64, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut bits = Vec::with_capacity(len);
        while bits.len() + 1 < len {
            let first = rng.random::<bool>();
            bits.push(first);
            bits.push(!first);
        }
        if bits.len() < len {
            bits.push(rng.random::<bool>());
        }
        Self::new(bits, symbol_duration, t_start)
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn release_time(&self, p: usize) -> f64 {
        self.t_start + p as f64 * self.symbol_duration
    }

    /// Release times of the 1-bits.
    pub fn ones(&self) -> impl Iterator<Item = f64> + '_ {
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(p, _)| self.release_time(p))
    }

    pub fn ones_fraction(&self) -> f64 {
        self.bits.iter().filter(|&&b| b).count() as f64 / self.bits.len() as f64
    }

    pub fn end_time(&self) -> f64 {
        self.release_time(self.bits.len())
    }

    pub fn as_digits(&self) -> String {
        self.bits.iter().map(|&b| if b { '1' } else { '0' }).collect()
    }
}

/// Time of the first concentration peak at distance `x_rx - x_tx` downstream
/// of a release at `t0`.
pub fn peak_time(config: &ChannelConfig, x_tx: f64, x_rx: f64, t0: f64) -> Result<f64> {
    let (d_eff, v) = (config.d_eff, config.v_eff);
    if !(v > 0.0) {
        return Err(Error::invalid("channel.v_eff", "peak time requires v_eff > 0"));
    }
    let d = x_rx - x_tx;
    if d < 0.0 {
        return Err(Error::UpstreamUnsupported(d));
    }
    // (-D + sqrt(D² + d²v²)) / v², rationalized to avoid cancellation
    Ok(t0 + d * d / (d_eff + (d_eff * d_eff + d * d * v * v).sqrt()))
}

/// Grid offset of every 1-bit release relative to `grid.t_start`, in samples.
fn release_offsets(seq: &BitSequence, grid_start: f64, dt: f64) -> Result<Vec<i64>> {
    if integral_ratio(seq.symbol_duration, dt).is_none() {
        return Err(Error::GridAlignment(format!(
            "symbol duration {} is not an integer multiple of dt = {dt}",
            seq.symbol_duration
        )));
    }
    seq.ones()
        .map(|t| {
            let r = (t - grid_start) / dt;
            let n = r.round();
            if (r - n).abs() <= 1e-9 * n.abs().max(1.0) {
                Ok(n as i64)
            } else {
                Err(Error::GridAlignment(format!("release at t = {t} is off the output grid")))
            }
        })
        .collect()
}

fn superpose(shot: &[f64], offsets: &[i64], n: usize) -> Result<Vec<f64>> {
    let mut out = vec![0.0; n];
    for &s in offsets {
        for (i, o) in out.iter_mut().enumerate() {
            let j = i as i64 - s;
            if j < 0 {
                continue;
            }
            let j = j as usize;
            if j >= shot.len() {
                return Err(Error::Dimension(format!(
                    "single-shot series has {} samples, needs {}",
                    shot.len(),
                    j + 1
                )));
            }
            *o += shot[j];
        }
    }
    Ok(out)
}

/// Superposes time-shifted copies of a single-shot response (sampled from
/// `t = 0` after release) onto `grid`.
pub fn received_signal_on(single_shot: &TimeSeries, seq: &BitSequence, grid: &TimeGrid) -> Result<TimeSeries> {
    if (single_shot.dt - grid.dt).abs() > 1e-12 * grid.dt || single_shot.t_start.abs() > 1e-12 {
        return Err(Error::GridAlignment(
            "single-shot series must start at 0 with the output dt".into(),
        ));
    }
    let offsets = release_offsets(seq, grid.t_start, grid.dt)?;
    Ok(TimeSeries::on_grid(grid, superpose(&single_shot.values, &offsets, grid.n_samples)?))
}

/// [`received_signal_on`] over the single-shot's own grid.
pub fn received_signal(single_shot: &TimeSeries, seq: &BitSequence) -> Result<TimeSeries> {
    received_signal_on(single_shot, seq, &single_shot.grid())
}

fn equilibrium_denominator(config: &ChannelConfig, symbol_duration: f64) -> Result<f64> {
    let d = &config.damping;
    if d.is_zero() {
        return Err(Error::NoEquilibrium);
    }
    if !(symbol_duration > 0.0) {
        return Err(Error::invalid("sequence.symbol_duration", "T_S > 0 violated"));
    }
    Ok(symbol_duration * d.integral(config.loop_length))
}

/// Mean concentration at which damping removes, on average, the `N_P / 2`
/// molecules released per symbol by an equiprobable sequence.
pub fn equilibrium_concentration(config: &ChannelConfig, symbol_duration: f64) -> Result<f64> {
    equilibrium_with_ones_fraction(config, symbol_duration, 0.5)
}

/// Equilibrium level for a sequence whose fraction of 1-bits is `ones_fraction`.
pub fn equilibrium_with_ones_fraction(
    config: &ChannelConfig,
    symbol_duration: f64,
    ones_fraction: f64,
) -> Result<f64> {
    let den = equilibrium_denominator(config, symbol_duration)?;
    Ok(config.n_molecules as f64 * ones_fraction / den)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransitionTime {
    Reached(f64),
    NotReached,
}

impl TransitionTime {
    pub fn time(&self) -> Option<f64> {
        match *self {
            TransitionTime::Reached(t) => Some(t),
            TransitionTime::NotReached => None,
        }
    }
}

/// Earliest grid time from which the zero-mode excess accounts for at least
/// `epsilon` of the receiver excess at every later sample.
///
/// Samples whose receiver excess is below `1e-12·max|closed_rx|` count as
/// satisfied only from `first_wrap` on.
pub fn transition_time(
    closed_zero: &TimeSeries,
    open_zero: &TimeSeries,
    closed_rx: &TimeSeries,
    open_rx: &TimeSeries,
    epsilon: f64,
    first_wrap: f64,
) -> Result<TransitionTime> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::invalid("epsilon", "0 < epsilon < 1 violated"));
    }
    if ![open_zero, closed_rx, open_rx].iter().all(|s| s.same_grid(closed_zero)) {
        return Err(Error::Dimension("transition_time inputs must share one grid".into()));
    }
    let floor = DENOMINATOR_FLOOR * closed_rx.max_abs();
    let satisfied = |k: usize| {
        let den = closed_rx.values[k] - open_rx.values[k];
        if den.abs() <= floor {
            return closed_zero.time(k) >= first_wrap;
        }
        ((closed_zero.values[k] - open_zero.values[k]) / den).abs() >= epsilon
    };
    let mut start = None;
    for k in (0..closed_zero.len()).rev() {
        if satisfied(k) {
            start = Some(k);
        } else {
            break;
        }
    }
    Ok(match start {
        Some(k) => TransitionTime::Reached(closed_zero.time(k)),
        None => TransitionTime::NotReached,
    })
}

/// Earliest delay after a release at which recirculated molecules can reach
/// the receiver: the 6σ front leaving the transmitter position must cover the
/// distance around the loop to the receiver, either downstream or upstream.
pub fn first_wrap_delay(config: &ChannelConfig, rx: &ReceiverSpec) -> f64 {
    let l = config.loop_length;
    let x_tx = config.source.transmitter_position();
    let d_up = l - rx.upper() + x_tx;
    let d_down = l + rx.lower() - x_tx;
    let (d, v) = (d_up.min(d_down), config.v_eff.max(0.0));
    if d <= 0.0 {
        return 0.0;
    }
    let a = 6.0 * (2.0 * config.d_eff).sqrt();
    if v == 0.0 {
        let s = d / a;
        return s * s;
    }
    // v τ + a sqrt(τ) = d, solved for sqrt(τ)
    let s = (-a + (a * a + 4.0 * v * d).sqrt()) / (2.0 * v);
    s * s
}

/// Closed- and open-loop responses to one release at `t = 0`.
#[derive(Debug, Clone)]
pub struct SingleShot {
    pub closed_rx: TimeSeries,
    pub closed_zero: TimeSeries,
    pub open_rx: TimeSeries,
    pub open_zero: TimeSeries,
    /// Direct-path response: closed loop before [`first_wrap_delay`], open loop after.
    pub direct_rx: TimeSeries,
    pub first_wrap: f64,
}

pub fn single_shot(config: &ChannelConfig, rx: &ReceiverSpec, grid: &TimeGrid) -> Result<SingleShot> {
    if grid.t_start != 0.0 {
        return Err(Error::GridAlignment("single-shot grid must start at t = 0".into()));
    }
    let closed = solve(config, grid)?;
    let closed_rx = rx_signal(&closed, rx)?;
    let closed_zero = closed.zero_mode_series();
    let open = open_loop_reference(config, rx, grid)?;
    let first_wrap = first_wrap_delay(config, rx);
    let direct = closed_rx
        .values
        .iter()
        .zip(&open.rx.values)
        .enumerate()
        .map(|(k, (&c, &o))| if grid.time(k) < first_wrap { c } else { o })
        .collect();
    Ok(SingleShot {
        closed_rx,
        closed_zero,
        open_rx: open.rx,
        open_zero: open.zero_mode,
        direct_rx: TimeSeries::on_grid(grid, direct),
        first_wrap,
    })
}

/// Received signal split into its four interference components, plus the
/// open-loop and zero-mode aggregates the split was derived from.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IsiDecomposition {
    pub total: TimeSeries,
    pub desired: TimeSeries,
    pub channel: TimeSeries,
    pub inter_loop: TimeSeries,
    pub offset: TimeSeries,
    /// Aggregate of the plain open-loop responses.
    pub open: TimeSeries,
    pub closed_zero: TimeSeries,
    pub open_zero: TimeSeries,
    pub transition_time: TransitionTime,
    /// `None` without damping.
    pub equilibrium: Option<f64>,
    pub epsilon: f64,
    /// Release-to-peak delay used to center the desired windows.
    pub peak_delay: f64,
    /// Release of the first 1-bit plus [`first_wrap_delay`].
    pub first_wrap: f64,
}

impl IsiDecomposition {
    /// Largest pointwise `|r - (r_d + r_c + r_i + r_o)|` relative to `max|r|`.
    pub fn sum_defect(&self) -> f64 {
        let scale = self.total.max_abs().max(f64::MIN_POSITIVE);
        (0..self.total.len())
            .map(|k| {
                let parts = self.desired.values[k]
                    + self.channel.values[k]
                    + self.inter_loop.values[k]
                    + self.offset.values[k];
                (self.total.values[k] - parts).abs()
            })
            .fold(0.0, f64::max)
            / scale
    }
}

pub fn isi_decompose(
    config: &ChannelConfig,
    rx: &ReceiverSpec,
    seq: &BitSequence,
    grid: &TimeGrid,
    epsilon: f64,
) -> Result<IsiDecomposition> {
    config.validate()?;
    rx.validate(config.loop_length)?;
    grid.validate()?;
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::invalid("epsilon", "0 < epsilon < 1 violated"));
    }
    let offsets = release_offsets(seq, grid.t_start, grid.dt)?;
    let n = grid.n_samples;
    let shot_len = offsets
        .iter()
        .map(|&s| (n as i64 - s).max(1) as usize)
        .max()
        .unwrap_or(1)
        .max(2);
    let shot_grid = TimeGrid::new(0.0, grid.dt, shot_len);
    let shot = single_shot(config, rx, &shot_grid)?;

    let x_tx = config.source.transmitter_position();
    let peak_delay = peak_time(config, x_tx, rx.center(), 0.0)?;
    let half = 0.5 * seq.symbol_duration;
    let win_lo = ((peak_delay - half).max(0.0) / grid.dt - 1e-9).ceil().max(0.0) as usize;
    let win_hi = ((peak_delay + half) / grid.dt - 1e-9).ceil().max(0.0) as usize;
    let windowed: Vec<f64> = shot
        .direct_rx
        .values
        .iter()
        .enumerate()
        .map(|(j, &v)| if j >= win_lo && j < win_hi { v } else { 0.0 })
        .collect();
    let outside: Vec<f64> = shot.direct_rx.values.iter().zip(&windowed).map(|(d, w)| d - w).collect();
    let recirc: Vec<f64> = shot
        .closed_rx
        .values
        .iter()
        .zip(&shot.direct_rx.values)
        .map(|(c, d)| c - d)
        .collect();

    let agg = |v: &[f64]| superpose(v, &offsets, n).map(|x| TimeSeries::on_grid(grid, x));
    let total = agg(&shot.closed_rx.values)?;
    let desired = agg(&windowed)?;
    let channel = agg(&outside)?;
    let recirculating = agg(&recirc)?;
    let direct = agg(&shot.direct_rx.values)?;
    let open = agg(&shot.open_rx.values)?;
    let closed_zero = agg(&shot.closed_zero.values)?;
    let open_zero = agg(&shot.open_zero.values)?;

    let first_wrap = seq.ones().next().map_or(f64::INFINITY, |t| t + shot.first_wrap);
    let transition = transition_time(&closed_zero, &open_zero, &total, &direct, epsilon, first_wrap)?;
    let t_i = transition.time().unwrap_or(f64::INFINITY);
    let (mut inter_loop, mut offset) = (recirculating.clone(), recirculating);
    for k in 0..n {
        if grid.time(k) <= t_i {
            offset.values[k] = 0.0;
        } else {
            inter_loop.values[k] = 0.0;
        }
    }
    let equilibrium = match equilibrium_concentration(config, seq.symbol_duration) {
        Ok(r) => Some(r),
        Err(Error::NoEquilibrium) => None,
        Err(e) => return Err(e),
    };
    Ok(IsiDecomposition {
        total,
        desired,
        channel,
        inter_loop,
        offset,
        open,
        closed_zero,
        open_zero,
        transition_time: transition,
        equilibrium,
        epsilon,
        peak_delay,
        first_wrap,
    })
}

/// Molecules removed by damping during each symbol interval, from the
/// aggregate zero mode: `L·ĉ_0(t_p) - L·ĉ_0(t_{p+1})` plus the release at `t_{p+1}`.
pub fn interval_losses(
    closed_zero: &TimeSeries,
    seq: &BitSequence,
    loop_length: f64,
    n_molecules: f64,
) -> Result<Vec<f64>> {
    let steps = integral_ratio(seq.symbol_duration, closed_zero.dt).ok_or_else(|| {
        Error::GridAlignment("symbol duration is not an integer multiple of dt".into())
    })?;
    let first = integral_ratio(seq.t_start - closed_zero.t_start, closed_zero.dt)
        .ok_or_else(|| Error::GridAlignment("sequence start is off the grid".into()))?;
    let mass = |p: usize| -> Option<f64> { closed_zero.values.get(first + p * steps).map(|c| loop_length * c) };
    let mut losses = Vec::new();
    for p in 0..seq.len() {
        let (Some(m0), Some(m1)) = (mass(p), mass(p + 1)) else { break };
        let injected = if seq.bits.get(p + 1).copied().unwrap_or(false) {
            n_molecules
        } else {
            0.0
        };
        losses.push(m0 - m1 + injected);
    }
    Ok(losses)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn peak_time_limits() {
        let ch = ChannelConfig::standard();
        assert_eq!(peak_time(&ch, 0.0, 0.0, 3.0).unwrap(), 3.0);
        let tp = peak_time(&ch, 0.0, 1.8, 0.0).unwrap();
        assert!((tp - 17.5069).abs() < 1e-4, "{tp}");
        let mut cold = ch.clone();
        cold.d_eff = 1e-14;
        assert!((peak_time(&cold, 0.0, 1.8, 0.0).unwrap() - 18.0).abs() < 1e-9);
        assert!(matches!(peak_time(&ch, 1.0, 0.5, 0.0), Err(Error::UpstreamUnsupported(_))));
    }

    #[test]
    fn balanced_sequences_are_balanced() {
        let s = BitSequence::random_balanced(300, 5.0, 0.0, 11).unwrap();
        assert_eq!(s.ones_fraction(), 0.5);
        assert!(s.bits.chunks(2).all(|c| c[0] != c[1]));
        assert_eq!(BitSequence::random(50, 5.0, 0.0, 4).unwrap(), BitSequence::random(50, 5.0, 0.0, 4).unwrap());
    }

    #[test]
    fn superposition_of_shifted_copies() {
        let shot = TimeSeries::new(0.0, 1.0, vec![0.0, 1.0, 2.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let seq = BitSequence::new(vec![true, false, true], 2.0, 1.0).unwrap();
        let r = received_signal(&shot, &seq).unwrap();
        assert_eq!(r.values, vec![0.0, 0.0, 1.0, 2.0, 0.0, 0.0, 1.0, 2.0]);
        let zeros = BitSequence::new(vec![false; 3], 2.0, 0.0).unwrap();
        assert!(received_signal(&shot, &zeros).unwrap().values.iter().all(|&v| v == 0.0));
        let bad = BitSequence::new(vec![true], 0.5, 0.0).unwrap();
        assert!(matches!(received_signal(&shot, &bad), Err(Error::GridAlignment(_))));
    }

    #[test]
    fn equilibrium_values() {
        let mut ch = ChannelConfig::standard();
        ch.n_molecules = 1;
        ch.damping = crate::DampingProfile::two_level(0.01, 0.001, 2.0, 3.0);
        let r = equilibrium_concentration(&ch, 5.0).unwrap();
        assert!((r - 1.0 / (2.0 * 5.0 * 0.015)).abs() < 1e-12);
        assert!((equilibrium_concentration(&ch, 10.0).unwrap() - r / 2.0).abs() < 1e-12);
        ch.damping = crate::DampingProfile::none(6.0);
        assert!(matches!(equilibrium_concentration(&ch, 5.0), Err(Error::NoEquilibrium)));
    }

    #[test]
    fn transition_needs_recirculation() {
        let g = TimeGrid::new(0.0, 1.0, 5);
        let z = TimeSeries::zeros(&g);
        let rx = TimeSeries::on_grid(&g, vec![1.0; 5]);
        let t = transition_time(&z, &z, &rx, &rx, 0.8, 10.0).unwrap();
        assert_eq!(t, TransitionTime::NotReached);
        let t = transition_time(&z, &z, &rx, &rx, 0.8, 2.0).unwrap();
        assert_eq!(t, TransitionTime::Reached(2.0));
    }

    #[test]
    fn wrap_delay_is_before_advective_arrival() {
        let ch = ChannelConfig::standard();
        let rx = ReceiverSpec::Interval { x_rx_a: 1.5, x_rx_b: 2.1 };
        let tau = first_wrap_delay(&ch, &rx);
        assert!(tau > 0.0 && tau < (6.0 - 2.1) / 0.1);
        let reach = 0.1 * tau + 6.0 * (2.0 * ch.d_eff * tau).sqrt();
        assert!((reach - 3.9).abs() < 1e-9);
    }
}
