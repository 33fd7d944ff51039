//! Space-time coded continuous phase modulation with L2-orthogonal blocks.
//!
//! Every transmit antenna sends the same CPM data signal during a block of
//! `L_t` symbol slots; antenna `m` additionally carries a data-independent
//! phase correction that drifts by `κ_m` cycles per slot. The drifts are
//! chosen so the antenna signals are orthogonal over each block, which makes
//! the ML metric separable and lets a single CPM trellis decode all antennas.
//!
//! Module map:
//! - [`cpm`]: phase model, pulse shapes, single-slot modulation.
//! - [`encoder`]: correction schemes, Gray mapping, block encoding.
//! - [`channel`]: block Rayleigh fading and AWGN.
//! - [`receiver`]: trellis, separable branch metrics, Viterbi and exhaustive ML.
//! - [`analysis`]: orthogonality, diversity rank, factored form, spectrum.
//! - [`experiment`]: configuration, BER sweeps, certification runs.

pub mod channel;
pub mod cpm;
pub mod encoder;
pub mod error;
pub mod experiment;
pub mod analysis;
pub mod receiver;

pub use channel::{ChannelRealization, SnrSpec};
pub use cpm::{CpmParams, PhaseState, PulseKind, PulseShape};
pub use encoder::{build_correction, CodeBlock, CorrectionKind, CorrectionScheme, SolutionBranch};
pub use error::{Error, Result};
pub use receiver::{build_trellis, exhaustive_ml, Decoded, Receiver, TrellisSpec, TrellisState};
