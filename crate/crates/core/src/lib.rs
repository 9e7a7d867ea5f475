//! Certified outer approximations of reachable sets of discrete-time
//! polynomial systems through moment-SOS semidefinite relaxations.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod certify;
pub mod io;
pub mod linear;
pub mod moments;
pub mod poly;
pub mod relax;
pub mod scalar;
pub mod sdp;
pub mod semialg;

pub use scalar::Real;

pub type Polynomial = poly::Polynomial<f64>;
pub type DomainGeometry = moments::DomainGeometry<f64>;
pub type MomentSequence = moments::MomentSequence<f64>;
pub type SemialgebraicSet = semialg::SemialgebraicSet<f64>;
pub type DynamicalSystem = semialg::DynamicalSystem<f64>;
pub type ReachProblem = semialg::ReachProblem<f64>;
pub type LinearReachProblem = linear::LinearReachProblem<f64>;
pub type ConicProgram = sdp::ConicProgram<f64>;
pub type Solution = sdp::Solution<f64>;
pub type Relaxation = relax::Relaxation<f64>;
pub type Certificate = relax::Certificate<f64>;
pub type TrajectoryBatch = certify::TrajectoryBatch<f64>;

pub use certify::{CertReport, CertifyConfig};
pub use sdp::{InteriorPoint, SolverOptions};
