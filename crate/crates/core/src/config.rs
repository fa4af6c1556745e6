//! JSON scenario files.
//!
//! ```json
//! {
//!   "channel":  { "d_eff": 0.005, "v_eff": 0.1, "loop_length": 6.0, "pipe_radius": 0.02,
//!                 "n_molecules": 10000, "truncation_order": 100 },
//!   "damping":  { "alpha": 0.05, "beta": 0.01, "x_a": 3.0, "x_b": 3.6 },
//!   "source":   { "kind": "point" },
//!   "receiver": { "kind": "interval", "x_rx_a": 1.5, "x_rx_b": 2.1 },
//!   "grid":     { "t_start": 0.0, "dt": 0.1, "n_samples": 1001 },
//!   "sequence": { "symbol_duration": 5.0, "length": 300, "seed": 7 },
//!   "pbs":      { "dt": 0.001, "seed": 1, "n_workers": 1 }
//! }
//! ```
//!
//! Unknown keys anywhere are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::comms::{BitSequence, DEFAULT_EPSILON};
use crate::error::{Error, InvalidParameter, Result};
use crate::model::{
    integral_ratio, into_result, ChannelConfig, DampingProfile, ReceiverSpec, SourceSpec, TimeGrid,
    DEFAULT_TRUNCATION_ORDER,
};
use crate::pbs::{PbsConfig, WallRule};

fn default_order() -> usize {
    DEFAULT_TRUNCATION_ORDER
}

fn default_epsilon() -> f64 {
    DEFAULT_EPSILON
}

fn default_workers() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSection {
    pub d_eff: f64,
    pub v_eff: f64,
    pub loop_length: f64,
    pub pipe_radius: f64,
    pub n_molecules: u64,
    #[serde(default = "default_order")]
    pub truncation_order: usize,
}

/// OOK sequence: either explicit `bits`, or `length` bits drawn from a seeded generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceSection {
    pub symbol_duration: f64,
    #[serde(default)]
    pub t_start: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bits: Option<Vec<u8>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub length: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Draw bits in pairs holding exactly one 1 each.
    #[serde(default)]
    pub balanced: bool,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PbsSection {
    pub dt: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_workers")]
    pub n_workers: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_mol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_end: Option<f64>,
    #[serde(default)]
    pub wall: WallRule,
}

/// On-disk layout of a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub channel: ChannelSection,
    pub damping: DampingProfile,
    pub source: SourceSpec,
    pub receiver: ReceiverSpec,
    pub grid: TimeGrid,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sequence: Option<SequenceSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pbs: Option<PbsSection>,
}

impl ScenarioFile {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn channel_config(&self) -> ChannelConfig {
        ChannelConfig {
            d_eff: self.channel.d_eff,
            v_eff: self.channel.v_eff,
            loop_length: self.channel.loop_length,
            truncation_order: self.channel.truncation_order,
            pipe_radius: self.channel.pipe_radius,
            damping: self.damping,
            source: self.source,
            n_molecules: self.channel.n_molecules,
        }
    }

    pub fn from_parts(
        channel: &ChannelConfig,
        receiver: ReceiverSpec,
        grid: TimeGrid,
    ) -> Self {
        Self {
            channel: ChannelSection {
                d_eff: channel.d_eff,
                v_eff: channel.v_eff,
                loop_length: channel.loop_length,
                pipe_radius: channel.pipe_radius,
                n_molecules: channel.n_molecules,
                truncation_order: channel.truncation_order,
            },
            damping: channel.damping,
            source: channel.source,
            receiver,
            grid,
            sequence: None,
            pbs: None,
        }
    }

    /// Validates every section and resolves it into runtime types.
    /// `seed_override` replaces the sequence and particle seeds when given.
    pub fn resolve(&self, seed_override: Option<u64>) -> Result<Scenario> {
        let channel = self.channel_config();
        let mut violations = channel.violations();
        violations.extend(self.receiver.violations(channel.loop_length));
        violations.extend(self.grid.violations());

        let mut sequence = None;
        let mut epsilon = DEFAULT_EPSILON;
        if let Some(seq) = &self.sequence {
            epsilon = seq.epsilon;
            if !(epsilon > 0.0 && epsilon < 1.0) {
                violations.push(InvalidParameter::new("sequence.epsilon", "0 < epsilon < 1 violated"));
            }
            match seq.resolve(seed_override) {
                Ok(s) => {
                    if self.grid.steps_for(s.symbol_duration).is_none() {
                        violations.push(InvalidParameter::new(
                            "sequence.symbol_duration",
                            "symbol duration must be an integer multiple of grid.dt",
                        ));
                    }
                    if integral_ratio(s.t_start - self.grid.t_start, self.grid.dt).is_none() {
                        violations.push(InvalidParameter::new(
                            "sequence.t_start",
                            "sequence start must lie on the output grid",
                        ));
                    }
                    sequence = Some(s);
                }
                Err(Error::Invalid(v)) => violations.extend(v),
                Err(e) => return Err(e),
            }
        }

        let mut pbs = None;
        if let Some(p) = &self.pbs {
            let cfg = PbsConfig {
                dt: p.dt,
                t_end: p.t_end.unwrap_or_else(|| self.grid.t_end()),
                seed: seed_override.unwrap_or(p.seed),
                n_workers: p.n_workers,
                d_mol: p.d_mol,
                wall: p.wall,
            };
            violations.extend(cfg.violations());
            if let Some(t_end) = p.t_end {
                if (t_end - self.grid.t_end()).abs() > 1e-9 * t_end.abs().max(1.0) {
                    violations.push(InvalidParameter::new("pbs.t_end", "must equal the output grid end"));
                }
            }
            pbs = Some(cfg);
        }

        into_result(violations)?;
        Ok(Scenario {
            channel,
            receiver: self.receiver,
            grid: self.grid,
            sequence,
            epsilon,
            pbs,
        })
    }
}

impl SequenceSection {
    pub fn resolve(&self, seed_override: Option<u64>) -> Result<BitSequence> {
        match (&self.bits, self.length) {
            (Some(bits), None) => {
                if let Some(bad) = bits.iter().find(|&&b| b > 1) {
                    return Err(Error::invalid("sequence.bits", format!("bit value {bad} not in {{0, 1}}")));
                }
                BitSequence::new(bits.iter().map(|&b| b == 1).collect(), self.symbol_duration, self.t_start)
            }
            (None, Some(length)) => {
                let seed = seed_override.or(self.seed).unwrap_or(0);
                if self.balanced {
                    BitSequence::random_balanced(length, self.symbol_duration, self.t_start, seed)
                } else {
                    BitSequence::random(length, self.symbol_duration, self.t_start, seed)
                }
            }
            _ => Err(Error::invalid("sequence", "exactly one of `bits` or `length` is required")),
        }
    }
}

/// Validated scenario ready to run.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub channel: ChannelConfig,
    pub receiver: ReceiverSpec,
    pub grid: TimeGrid,
    pub sequence: Option<BitSequence>,
    pub epsilon: f64,
    pub pbs: Option<PbsConfig>,
}

impl Scenario {
    pub fn load(path: impl AsRef<Path>, seed_override: Option<u64>) -> Result<Self> {
        ScenarioFile::load(path)?.resolve(seed_override)
    }
}
