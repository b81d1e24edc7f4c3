//! Simulator for MARINA-style compressed communication on distributed
//! cocoercive variational inequalities.
//!
//! * [`problem`]: finite-sum affine VI problems, exact solutions and constants.
//! * [`compressor`]: unbiased compressors (identity, RAND-K, int8) and their bit costs.
//! * [`solver`]: the epoch-restarted MARINA recursion and hyperparameter derivation.
//! * [`ledger`]: per-device and server traffic accounting.
//! * [`experiment`]: configs, sweeps over scenarios/methods/seeds, CSV output.

pub mod analysis;
pub mod check;
pub mod compressor;
pub mod experiment;
pub mod ledger;
pub mod linalg;
pub mod problem;
pub mod solver;
pub mod streams;

pub use compressor::{CompressorKind, CompressorSpec};
pub use ledger::CommLedger;
pub use problem::{ProblemConstants, VIProblem};
pub use solver::{run, RunOutput, SolverConfig};
