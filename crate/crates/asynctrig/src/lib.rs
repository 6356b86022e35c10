//! Self-triggered sensor scheduling for sampled-data LTI systems whose
//! sensors are read asynchronously, one block per sampling period.
//!
//! The pipeline: discretise the plant ([`plant`]), enumerate sampling
//! horizons ([`horizon`]), certify a stabilising horizon ([`certificate`]),
//! optionally partition the state space into cones ([`partition`]), select
//! horizons online or from a precomputed table ([`trigger`]) and simulate
//! the closed loop ([`simulation`]).

pub mod certificate;
pub mod error;
pub mod horizon;
pub mod linalg;
pub mod partition;
pub mod plant;
pub mod simulation;
pub mod trigger;

pub use certificate::{
    Certificate, PerturbedOfflineCertificate, PerturbedOnlineCertificate, UnperturbedCertificate,
};
pub use error::{Error, Result};
pub use horizon::{avg_idle_metric, enumerate_horizons, Horizon};
pub use linalg::{Matrix, Vector};
pub use partition::ConicRegion;
pub use plant::{DiscretePlant, GrowthConstants, HorizonBank, PlantModel};
pub use simulation::{prepare, simulate, Disturbance, Scenario, SimConfig, SimTrace};
pub use trigger::{Mode, OfflineTable, Policy, TriggerDecision};
