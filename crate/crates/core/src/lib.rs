//! DLCZ quantum repeater simulation with Gaussian (Bogoliubov) memories.
//!
//! States are truncated Fock density matrices. Every optical element, memory
//! and detector is folded into a generating function whose Taylor
//! coefficients map input to conditional output states.

pub mod analytic;
pub mod bogoliubov;
pub mod error;
pub mod fockstate;
pub mod genfun;
pub mod memories;
pub mod repeater;

pub use bogoliubov::{
    augment_dark_counts, lossy_channel, reduce_memory, BogoliubovMap, Circuit, CircuitElement,
    ReducedMemory,
};
pub use error::{Error, Result};
pub use fockstate::{FockDensityMatrix, TraceMeaning};
pub use genfun::{
    build_genfun, extract_tensor, ModeRole, Projector, ProjectorSpec, QuadraticGenFun,
    TransferTensor,
};
pub use memories::{MemoryModel, OnePassParams, TwoPassParams};
pub use repeater::{
    bell, connect, generate, rate, rate_monte_carlo, run_chain, BellMeasurement, BellResult,
    ChainResult, Connector, DarkCountModel, Detector, RepeaterParams,
};
