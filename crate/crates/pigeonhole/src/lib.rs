//! Subset-based stochastic-gradient Langevin samplers for crossed mixed
//! effects models, with a full-data Gibbs benchmark.
//!
//! The model is a two-factor crossed random effects regression,
//!
//! ```text
//! Y_ij = x_ij' b + alpha_i + beta_j + e_ij
//! ```
//!
//! observed on a sparse R x C table. Exact posterior computation couples all
//! R + C latent effects through the observation pattern, so full-data methods
//! cost at least O(N) per iteration. The samplers here instead work on small
//! r x c subtables: plain SGLD on fully observed subtables, and a pigeonhole
//! variant that augments the subtable with its own latent effects so it
//! tolerates missing cells. Both are Langevin updates around an unbiased
//! stochastic gradient, optionally preconditioned and constrained to a
//! slowly growing sieve box.
//!
//! Module map:
//! - [`model`]: parameter and table types, the stochastic gradient, the sieve.
//! - [`balanced`]: exact marginal likelihood, gradients, and covariance
//!   algebra for fully observed subtables.
//! - [`samplers`]: the two Langevin samplers, the Gibbs benchmark, subset
//!   sampling, preconditioning, and the chain driver.
//! - [`data`]: synthetic table generation, MCAR thinning, pruning, and
//!   ratings-file ingestion.
//! - [`diagnostics`]: Wasserstein-2 distances, quantile barycenters, chain
//!   summaries, and convergence traces.

pub mod balanced;
pub mod data;
pub mod diagnostics;
pub mod error;
pub mod model;
pub mod samplers;

pub use data::{
    apply_mcar, generate_balanced, load_ratings, prune_empty, CovariateDist, CovariateSpec,
    GeneratedData, GeneratorSpec, IngestReport, RatingsSchema,
};
pub use diagnostics::{
    chain_marginals, convergence_trace, summarize, w2_barycenter, w2_empirical, MarginalSamples,
    ParamSummary, TracePoint,
};
pub use error::{Error, Result};
pub use model::{
    Axis, Cell, LatentState, ObservedTable, PriorSpec, SieveBounds, SubsetBatch, Theta,
    VarianceScale,
};
pub use samplers::{
    run_chain, Chain, PreconditionMode, SamplerConfig, SamplerKind, StepSchedule, StepSizes,
};
