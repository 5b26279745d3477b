//! Fleet coordination library: optimal assignment, density-driven
//! redeployment, EMS and taxi dispatch strategies, and a deterministic
//! fixed-tick simulator to compare them.

pub mod angioplasty;
pub mod assignment;
pub mod ems;
pub mod model;
pub mod redeployment;
pub mod report;
pub mod sim;
pub mod taxi;
