//! Query-efficient detection of machine-generated text.
//!
//! A candidate passage is perturbed N times; a Gaussian-process surrogate
//! over a text-similarity kernel is fit to a small set of exactly scored
//! perturbations, chosen sequentially by maximal predictive uncertainty;
//! the remaining perturbations get interpolated scores; and the detection
//! measure is the candidate's log-probability minus the mean perturbation
//! log-probability. Under the same query budget this tracks the
//! exhaustive random-perturbation estimate far more closely than scoring
//! random perturbations alone.
//!
//! The crate ships remote batch clients for scoring / perturbation /
//! similarity services plus deterministic offline substitutes, a synthetic
//! "curvature world" for end-to-end offline experiments, and an evaluation
//! harness (AUROC, budget sweeps, cross source/proxy matrices, typicality
//! reports).

pub mod cli;
pub mod config;
pub mod detect;
pub mod error;
pub mod eval;
pub mod gp;
pub mod kernel;
pub mod providers;
pub mod selection;
pub mod sim;
pub mod types;
