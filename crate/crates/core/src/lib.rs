//! Discrete-time simulator for a cell-free massive-MIMO cluster of LEO
//! satellites serving ground terminals.
//!
//! A cluster of satellite access points (SAPs) drifts over a flat service
//! area and jointly serves single-antenna user terminals (UTs). The crate
//! models the Rician air interface with boresight-dependent antenna gain,
//! uplink pilot training with reuse and phase-aware MMSE channel estimation,
//! conjugate-beamforming downlink transmission with a closed-form achievable
//! rate, a genetic-algorithm solver for the joint power-allocation/admission
//! problem, and the handover bookkeeping that turns admission failures into
//! cluster handovers. Two single-satellite baselines (`BestChannel`,
//! `MaxServTime`) share the same rate model for like-for-like comparisons.
//!
//! Everything is deterministic given a base seed: random streams are derived
//! per (run, slot, purpose), so runs and sweeps reproduce byte-identical
//! outputs.

pub mod allocation;
pub mod channel;
pub mod config;
pub mod downlink;
pub mod geometry;
pub mod handover;
pub mod metrics;
pub mod rng;
pub mod sim;
pub mod training;
pub mod verify;

pub use allocation::{AllocationProblem, GaParams, PowerSolution};
pub use channel::{ChannelConfig, ChannelRealization, LargeScaleParams};
pub use config::{Mode, SimConfig};
pub use downlink::{FrameConfig, RateContext, RateInputs, RateReport};
pub use geometry::{ClusterSnapshot, GeometryConfig};
pub use handover::{HandoverEvent, HandoverState};
pub use metrics::MetricsLog;
pub use training::{EstimateSet, PilotAssignment, PilotObservation};
