//! Desk-scale depth refinement with a conditional diffusion model.
//!
//! This crate implements, end to end and on CPU, a refinement pipeline for
//! monocular depth estimation: a coarse (feed-forward style) depth predictor
//! supplies global scene layout, and a small conditional diffusion model
//! sharpens it while staying faithful to the conditioning. Everything runs
//! on procedurally generated scenes so each numeric claim can be checked
//! against a closed-form oracle.
//!
//! The pieces, in pipeline order:
//!
//! - [`scenegen`] renders deterministic (image, depth) pairs by ray-casting
//!   analytic primitives.
//! - [`coarse`] provides the conditioning models: a controllable degradation
//!   oracle and a small trainable regressor.
//! - [`raster`] / [`pfm`] hold the raster types, `[-1, 1]` normalization,
//!   and bit-exact file formats.
//! - [`align`] solves the closed-form least-squares scale/shift fit used for
//!   global pre-alignment and for affine-invariant evaluation.
//! - [`maskgen`] compares aligned conditioning and label patchwise and keeps
//!   only agreeing regions in the training loss.
//! - [`diffusion`] owns the noise schedule, the velocity-prediction algebra,
//!   the masked training objective, the denoiser network, and DDIM sampling.
//! - [`eval`] computes AbsRel / delta1 after least-squares alignment, plus
//!   ensembling, ablation, sweep, and error-bar harnesses.
//! - [`cli`] wires it all into one `depthlab` command with reproducible,
//!   self-describing artifacts.
//!
//! Start with the runnable examples (`cargo run --example generate_scenes`,
//! `... --example train_refiner`, and friends) for guided tours of each
//! capability.

pub mod align;
pub mod checkpoint;
pub mod cli;
pub mod coarse;
pub mod config;
pub mod diffusion;
pub mod error;
pub mod eval;
pub mod maskgen;
pub mod nn;
pub mod pfm;
pub mod raster;
pub mod rng;
pub mod scenegen;

pub use error::{Error, Result};
pub use raster::{DepthMap, DepthUnits, ImageMap, NormalizationRecord};
