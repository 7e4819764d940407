//! Post-processing, kinematics and evaluation of 2D sprint joint trajectories
//! produced by markerless pose trackers.

pub mod cli;
pub mod config;
pub mod eval;
pub mod fusion;
pub mod kinematics;
pub mod postproc;
pub mod sim;
pub mod svr;
pub mod trajectory;
