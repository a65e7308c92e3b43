//! Analytic model, proportional-fair allocation and MAC-slot simulator for a
//! scheduled transmitter sharing a channel with CSMA/CA stations.

// `!(x > 0.0)` is how NaN inputs get rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::too_many_arguments, clippy::needless_range_loop)]

pub mod coexistence;
pub mod csma;
pub mod error;
pub mod fair;
pub mod phy;
pub mod sim;
pub mod units;

pub use coexistence::{AccessMode, ChannelContext, ScheduledParams, Sensing};
pub use csma::{SlotProbabilities, StationSet};
pub use error::{CoexError, Result};
pub use fair::{ActivityFactors, FairAllocation, UnsaturatedSpec};
pub use phy::{FrameTimings, McsProfile, PhyParams};
pub use units::Nanos;
