//! Co-design of soft-gripper finger geometry and pre-contact control.

pub mod cmaes;
pub mod codesign;
pub mod control;
pub mod geom;
pub mod gripper;
pub mod ldm;
pub mod posegen;
pub mod seed;
pub mod softsim;
pub mod stats;
