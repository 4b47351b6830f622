//! A desk-scale laboratory for the streaming complexity of Unique Games.
//!
//! The crate is split along the lines of the experiments it supports:
//!
//! * [`zp`]: residues, vectors over `Z_p`, matchings and their incidence actions.
//! * [`fourier`]: dense Fourier analysis over `Z_p^n` and the hypercontractive
//!   inequalities that bound Fourier mass.
//! * [`instance`]: samplers for the hidden-matching and multi-stage Unique Games
//!   distributions, plus the `ug v1` text stream format.
//! * [`solver`]: exact evaluation and exhaustive optimisation of small instances.
//! * [`streaming`]: single-pass estimators and small-memory toy algorithms.
//! * [`commlab`]: conditional distributions, total variation distance, one-way
//!   protocol simulation and the hybrid/reduction experiments.
//! * [`verify`]: packaged property suites used by the CLI.

pub mod commlab;
pub mod error;
pub mod fourier;
pub mod instance;
pub mod seed;
pub mod solver;
pub mod streaming;
pub mod verify;
pub mod zp;

pub use commlab::{
    conditional_dist, expected_tvd, hybrid_experiment, preimage_probability, protocol_advantage,
    reduction_protocol, tvd, AdvantageEstimate, DistributionTable, HybridReport, MessagePartition,
    PluginTvd, PreimageMode, ReductionReport, TvdEstimate, TvdMode,
};
pub use error::{Error, Result};
pub use fourier::{FourierSpectrum, FunctionTable};
pub use instance::{
    parse_stream, sample_hm, sample_ug, write_stream, Constraint, ConstraintForm, Dist,
    HiddenMatchingInstance, Label, UgInstance,
};
pub use solver::{evaluate, exact_optimum, optimum_fraction_stats, FractionSummary, SolveResult};
pub use streaming::{
    make_toy_algorithm, run_stream, CountEstimator, MemoryBoundedAlgorithm, SamplingEstimator,
    StreamingEstimator, ToyKind,
};
pub use zp::{count_matchings, sample_matching, Matching, ZpVector};
