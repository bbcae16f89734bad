//! Quadrotor simulation and control: plant model, trajectory references,
//! disturbance observers, nonlinear MPC with an INDI rate loop, baseline
//! controllers and a multirate experiment harness.

pub mod error;
pub mod math;
pub mod plant;
pub mod reference;
pub mod disturbance;
pub mod observer;
pub mod mpc;
pub mod inner_loop;
pub mod baselines;
pub mod harness;

pub use error::{Error, Result};
pub use math::{Quat, Vec3};
pub use plant::{QuadParams, QuadState, Wrench};
pub use reference::{FlatOutput, ReferencePoint, Trajectory};
pub use disturbance::{DisturbanceKind, DisturbanceProfile, DisturbanceSample};
pub use observer::{DisturbanceObserver, FxtdoGains, HgdoGains};
pub use mpc::{MpcConfig, MpcWeights, NmpcController, OcpSolution};
pub use inner_loop::{IndiController, IndiGains};
