//! Pitman-Yor mixture of truncated-normal kernels and its ICS Gibbs sampler.

pub mod chain;
pub mod draw;
pub mod geweke;
pub mod kernel;
pub mod mh;
pub mod state;
pub mod updates;
pub mod urn;

pub use chain::{
    assign_clusters, assign_marginal, run_chain, AssignmentScheme, ChainDiagnostics, ChainOptions,
    ChainOutput, Sampler, Schedule,
};
pub use draw::{AtomRecord, DrawRecord, DrawsRecord, PosteriorDraw};
pub use kernel::{sample_kernel, AtomKernel, LatentMoments, LATENT_LOWER};
pub use mh::{update_mu_sigma_y, MhOutcome, MuSigmaConditional, MuSigmaTarget};
pub use state::{init_state, MhPhase, SamplerState};
pub use updates::{update_eta, update_latent, update_mu_x, update_sigma_c, Member};
pub use urn::{sample_fresh_atoms, sample_mixture_weights, FreshAtoms};
