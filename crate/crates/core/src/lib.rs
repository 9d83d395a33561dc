//! Discrete-event simulation of service shifting: when resources run short,
//! services move to lighter VNF graphs instead of being scaled down.
//!
//! The crate is layered the way an orchestrator is: [`topology`] and
//! [`placement`] own resources, [`servicemodel`] owns service descriptors and
//! SLA accounting, [`monitor`] turns samples into alerts, [`decision`] picks
//! shifts, and [`simengine`] drives everything through simulated time.

pub mod cli;
pub mod decision;
pub mod monitor;
pub mod placement;
pub mod report;
pub mod scenario;
pub mod servicemodel;
pub mod simengine;
pub mod time;
pub mod topology;
