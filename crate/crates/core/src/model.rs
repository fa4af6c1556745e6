//! Channel parameters, damping and source descriptions, receivers and time grids.
//!
//! All quantities are SI. The transmitter sits at `x = 0`; the receiver
//! position is the free geometric parameter of the loop.

use serde::{Deserialize, Serialize};

use crate::error::{Error, InvalidParameter, Result};

/// Default truncation order (number of positive Fourier modes).
pub const DEFAULT_TRUNCATION_ORDER: usize = 100;

/// Two-level first-order degradation rate: `alpha` on `[x_a, x_b]`, `beta` elsewhere.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DampingProfile {
    pub alpha: f64,
    pub beta: f64,
    pub x_a: f64,
    pub x_b: f64,
}

impl DampingProfile {
    pub fn two_level(alpha: f64, beta: f64, x_a: f64, x_b: f64) -> Self {
        Self { alpha, beta, x_a, x_b }
    }

    /// Damping confined to `[x_a, x_b]`; no baseline degradation.
    pub fn localized(alpha: f64, x_a: f64, x_b: f64) -> Self {
        Self::two_level(alpha, 0.0, x_a, x_b)
    }

    /// Homogeneous degradation at rate `beta` over the whole loop.
    pub fn global(beta: f64, loop_length: f64) -> Self {
        Self::two_level(beta, beta, 0.0, loop_length)
    }

    pub fn none(loop_length: f64) -> Self {
        Self::global(0.0, loop_length)
    }

    /// Rate at `x`. The region is closed, so both `x_a` and `x_b` return `alpha`.
    pub fn rate_at(&self, x: f64) -> f64 {
        if x >= self.x_a && x <= self.x_b {
            self.alpha
        } else {
            self.beta
        }
    }

    pub fn region_width(&self) -> f64 {
        self.x_b - self.x_a
    }

    pub fn is_uniform(&self) -> bool {
        self.alpha == self.beta
    }

    pub fn is_zero(&self) -> bool {
        self.alpha == 0.0 && self.beta == 0.0
    }

    /// Integral of the rate over one loop.
    pub fn integral(&self, loop_length: f64) -> f64 {
        self.beta * loop_length + (self.alpha - self.beta) * self.region_width()
    }

    pub fn max_rate(&self) -> f64 {
        self.alpha.max(self.beta)
    }

    pub fn violations(&self, loop_length: f64) -> Vec<InvalidParameter> {
        let mut out = Vec::new();
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta), ("x_a", self.x_a), ("x_b", self.x_b)] {
            if !v.is_finite() {
                out.push(InvalidParameter::new(format!("damping.{name}"), "must be finite"));
            }
        }
        if self.beta < 0.0 {
            out.push(InvalidParameter::new("damping.beta", "beta ≥ 0 violated"));
        }
        if self.alpha < self.beta {
            out.push(InvalidParameter::new("damping.alpha", "alpha ≥ beta violated"));
        }
        if self.x_a < 0.0 {
            out.push(InvalidParameter::new("damping.x_a", "x_a ≥ 0 violated"));
        }
        if self.x_a >= self.x_b {
            out.push(InvalidParameter::new("damping.x_b", "x_a < x_b violated"));
        }
        if self.x_b > loop_length {
            out.push(InvalidParameter::new("damping.x_b", "x_b ≤ L violated"));
        }
        out
    }
}

/// Instantaneous release at `t = 0`, either at `x = 0` or spread uniformly over `[0, x_w]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SourceRecord", into = "SourceRecord")]
pub enum SourceSpec {
    Point,
    Distributed { release_width: f64 },
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum SourceKind {
    Point,
    Distributed,
}

/// Flat JSON form; a derived internally tagged enum would silently accept
/// `release_width` on a point source.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SourceRecord {
    kind: SourceKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    release_width: Option<f64>,
}

impl TryFrom<SourceRecord> for SourceSpec {
    type Error = String;

    fn try_from(r: SourceRecord) -> std::result::Result<Self, String> {
        match (r.kind, r.release_width) {
            (SourceKind::Point, None) => Ok(SourceSpec::Point),
            (SourceKind::Point, Some(_)) => Err("a point source takes no release_width".into()),
            (SourceKind::Distributed, Some(release_width)) => Ok(SourceSpec::Distributed { release_width }),
            (SourceKind::Distributed, None) => Err("a distributed source needs release_width".into()),
        }
    }
}

impl From<SourceSpec> for SourceRecord {
    fn from(s: SourceSpec) -> Self {
        match s {
            SourceSpec::Point => SourceRecord {
                kind: SourceKind::Point,
                release_width: None,
            },
            SourceSpec::Distributed { release_width } => SourceRecord {
                kind: SourceKind::Distributed,
                release_width: Some(release_width),
            },
        }
    }
}

impl SourceSpec {
    /// Downstream edge of the release region.
    pub fn release_width(&self) -> f64 {
        match *self {
            SourceSpec::Point => 0.0,
            SourceSpec::Distributed { release_width } => release_width,
        }
    }

    /// Effective transmitter position used for peak-time estimates.
    pub fn transmitter_position(&self) -> f64 {
        match *self {
            SourceSpec::Point => 0.0,
            SourceSpec::Distributed { release_width } => 0.5 * release_width,
        }
    }

    pub fn violations(&self, loop_length: f64) -> Vec<InvalidParameter> {
        match *self {
            SourceSpec::Point => Vec::new(),
            SourceSpec::Distributed { release_width } => {
                if release_width > 0.0 && release_width < loop_length {
                    Vec::new()
                } else {
                    vec![InvalidParameter::new(
                        "source.release_width",
                        "0 < x_w < L violated",
                    )]
                }
            }
        }
    }
}

/// Transparent receiver: a point sample or an integral over an axial interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ReceiverSpec {
    PointSample { x_rx: f64 },
    Interval { x_rx_a: f64, x_rx_b: f64 },
}

impl ReceiverSpec {
    pub fn center(&self) -> f64 {
        match *self {
            ReceiverSpec::PointSample { x_rx } => x_rx,
            ReceiverSpec::Interval { x_rx_a, x_rx_b } => 0.5 * (x_rx_a + x_rx_b),
        }
    }

    /// Downstream edge of the receiver.
    pub fn upper(&self) -> f64 {
        match *self {
            ReceiverSpec::PointSample { x_rx } => x_rx,
            ReceiverSpec::Interval { x_rx_b, .. } => x_rx_b,
        }
    }

    pub fn lower(&self) -> f64 {
        match *self {
            ReceiverSpec::PointSample { x_rx } => x_rx,
            ReceiverSpec::Interval { x_rx_a, .. } => x_rx_a,
        }
    }

    /// Same receiver shape moved so that its center sits at `center`.
    pub fn recentered(&self, center: f64) -> Self {
        match *self {
            ReceiverSpec::PointSample { .. } => ReceiverSpec::PointSample { x_rx: center },
            ReceiverSpec::Interval { x_rx_a, x_rx_b } => {
                let half = 0.5 * (x_rx_b - x_rx_a);
                ReceiverSpec::Interval {
                    x_rx_a: center - half,
                    x_rx_b: center + half,
                }
            }
        }
    }

    pub fn violations(&self, loop_length: f64) -> Vec<InvalidParameter> {
        let mut out = Vec::new();
        match *self {
            ReceiverSpec::PointSample { x_rx } => {
                if !(0.0..=loop_length).contains(&x_rx) {
                    out.push(InvalidParameter::new("receiver.x_rx", "0 ≤ x_rx ≤ L violated"));
                }
            }
            ReceiverSpec::Interval { x_rx_a, x_rx_b } => {
                if !(x_rx_a >= 0.0) {
                    out.push(InvalidParameter::new("receiver.x_rx_a", "x_rx_a ≥ 0 violated"));
                }
                if !(x_rx_a < x_rx_b) {
                    out.push(InvalidParameter::new("receiver.x_rx_b", "x_rx_a < x_rx_b violated"));
                }
                if !(x_rx_b <= loop_length) {
                    out.push(InvalidParameter::new("receiver.x_rx_b", "x_rx_b ≤ L violated"));
                }
            }
        }
        out
    }

    pub fn validate(&self, loop_length: f64) -> Result<()> {
        into_result(self.violations(loop_length))
    }
}

/// Uniform sampling grid `t_start + k·dt`, `k = 0..n_samples`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeGrid {
    pub t_start: f64,
    pub dt: f64,
    pub n_samples: usize,
}

impl TimeGrid {
    pub fn new(t_start: f64, dt: f64, n_samples: usize) -> Self {
        Self { t_start, dt, n_samples }
    }

    /// Grid from `t_start` to (at least) `t_end` with step `dt`.
    pub fn spanning(t_start: f64, t_end: f64, dt: f64) -> Self {
        let steps = ((t_end - t_start) / dt - 1e-9).ceil().max(1.0) as usize;
        Self::new(t_start, dt, steps + 1)
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t_start + k as f64 * self.dt
    }

    pub fn t_end(&self) -> f64 {
        self.time(self.n_samples.saturating_sub(1))
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_samples).map(|k| self.time(k))
    }

    pub fn violations(&self) -> Vec<InvalidParameter> {
        let mut out = Vec::new();
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            out.push(InvalidParameter::new("grid.dt", "dt > 0 violated"));
        }
        if self.n_samples < 2 {
            out.push(InvalidParameter::new("grid.n_samples", "n_samples ≥ 2 violated"));
        }
        if !self.t_start.is_finite() {
            out.push(InvalidParameter::new("grid.t_start", "must be finite"));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        into_result(self.violations())
    }

    /// Number of grid steps covering `duration`, if it is an integer multiple of `dt`.
    pub fn steps_for(&self, duration: f64) -> Option<usize> {
        integral_ratio(duration, self.dt)
    }
}

/// `a / b` as an integer when it is one to within 1e-9 relative.
pub(crate) fn integral_ratio(a: f64, b: f64) -> Option<usize> {
    let r = a / b;
    let n = r.round();
    if n >= 0.0 && (r - n).abs() <= 1e-9 * n.max(1.0) {
        Some(n as usize)
    } else {
        None
    }
}

/// Physical channel, damping profile and release description.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelConfig {
    pub d_eff: f64,
    pub v_eff: f64,
    pub loop_length: f64,
    pub truncation_order: usize,
    pub pipe_radius: f64,
    pub damping: DampingProfile,
    pub source: SourceSpec,
    pub n_molecules: u64,
}

impl ChannelConfig {
    /// Default physical parameters: D_eff = 5e-3 m²/s, v_eff = 0.1 m/s, L = 6 m,
    /// r0 = 0.02 m, N_P = 10⁴, β = 0.01 1/s, with α = 0.05 1/s on `[3, 3.6]` m.
    pub fn standard() -> Self {
        Self {
            d_eff: 5e-3,
            v_eff: 0.1,
            loop_length: 6.0,
            truncation_order: DEFAULT_TRUNCATION_ORDER,
            pipe_radius: 0.02,
            damping: DampingProfile::two_level(0.05, 0.01, 3.0, 3.6),
            source: SourceSpec::Point,
            n_molecules: 10_000,
        }
    }

    pub fn n_modes(&self) -> usize {
        2 * self.truncation_order + 1
    }

    pub fn violations(&self) -> Vec<InvalidParameter> {
        let mut out = Vec::new();
        if !(self.d_eff > 0.0) || !self.d_eff.is_finite() {
            out.push(InvalidParameter::new("channel.d_eff", "d_eff > 0 violated"));
        }
        if !(self.v_eff >= 0.0) || !self.v_eff.is_finite() {
            out.push(InvalidParameter::new("channel.v_eff", "v_eff ≥ 0 violated"));
        }
        if !(self.loop_length > 0.0) || !self.loop_length.is_finite() {
            out.push(InvalidParameter::new("channel.loop_length", "L > 0 violated"));
        }
        if !(self.pipe_radius > 0.0) || !self.pipe_radius.is_finite() {
            out.push(InvalidParameter::new("channel.pipe_radius", "r0 > 0 violated"));
        }
        if self.truncation_order < 1 {
            out.push(InvalidParameter::new("channel.truncation_order", "N ≥ 1 violated"));
        }
        if self.n_molecules < 1 {
            out.push(InvalidParameter::new("channel.n_molecules", "N_P ≥ 1 violated"));
        }
        out.extend(self.damping.violations(self.loop_length));
        out.extend(self.source.violations(self.loop_length));
        out
    }

    /// Checks every invariant and reports all violations at once.
    pub fn validate(&self) -> Result<()> {
        into_result(self.violations())
    }

    pub fn validated(self) -> Result<Self> {
        self.validate()?;
        Ok(self)
    }

    pub fn damping_at(&self, x: f64) -> f64 {
        self.damping.rate_at(x)
    }

    /// Time for diffusion to smooth one resolved wavelength, `(L/2N)² / (2 D_eff)`.
    /// Pointwise values before this are dominated by the truncation transient.
    pub fn gibbs_time(&self) -> f64 {
        let h = self.loop_length / (2.0 * self.truncation_order as f64);
        h * h / (2.0 * self.d_eff)
    }

    pub fn with_damping(&self, damping: DampingProfile) -> Self {
        Self {
            damping,
            ..self.clone()
        }
    }
}

pub(crate) fn into_result(violations: Vec<InvalidParameter>) -> Result<()> {
    if violations.is_empty() {
        Ok(())
    } else {
        Err(Error::Invalid(violations))
    }
}
