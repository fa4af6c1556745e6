//! Closed-loop molecular communication channels: a Fourier-spectral solver for
//! periodic advection–diffusion with two-level degradation, a 3D particle
//! simulator used as an independent check, and inter-symbol interference
//! analysis for on-off keyed transmissions.

pub mod comms;
pub mod config;
pub mod error;
pub mod io;
pub mod linalg;
pub mod model;
pub mod pbs;
pub mod series;
pub mod spectral;

pub use error::{Error, InvalidParameter, Result};
pub use model::{ChannelConfig, DampingProfile, ReceiverSpec, SourceSpec, TimeGrid};
pub use series::TimeSeries;
