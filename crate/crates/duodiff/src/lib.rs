//! Dual-conditioned denoising diffusion at desk scale.
//!
//! This crate implements a two-condition latent diffusion stack built around
//! dual classifier-free guidance: a score can be steered independently by a
//! *description* condition (a single vector that sets the overall acoustic
//! context) and a *content* condition (a token sequence that sets what is
//! spoken). Everything runs on small abstract latents so that every moving
//! part can be verified against exact references:
//!
//! - [`diffusion`] — noise schedules, the variance-preserving forward
//!   process, deterministic DDIM reverse steps, and the guidance combiners.
//! - [`oracle`] — a labeled Gaussian-mixture world whose diffused conditional
//!   scores are available in closed form; the ground truth used to verify the
//!   guidance algebra and the sampler.
//! - [`tape`] — a minimal reverse-mode automatic differentiation tape backing
//!   the trainable models.
//! - [`scorenet`] — a small trainable noise-prediction network with the two
//!   conditioning paths (description via timestep-embedding concatenation,
//!   content via cross-attention), trained with independent condition
//!   dropout.
//! - [`content`] — content encoder and duration-based upsampler that turns a
//!   token sequence of length `L` into an `N x D` condition with `L <= N`.
//! - [`datapipe`] — corpus curation: dual-ASR speech/non-speech
//!   classification, segment standardization to 10 s @ 16 kHz mono, and SNR
//!   mixing.
//! - [`metrics`] — WER, delta-WER, KL divergence, Frechet distance on
//!   embedding Gaussians, and embedding cosine score.
//! - [`config`] / [`commands`] — the run configuration format and the
//!   operations behind the `duodiff` command-line tool.
//!
//! The `examples/` directory is the front door: each example is a runnable
//! walkthrough of one capability (`oracle_check`, `train_toy`,
//! `sample_guided`, `guidance_sweep`, `curate_fixture`, `metrics_tour`,
//! `content_upsampling`).

pub mod clients;
pub mod commands;
pub mod config;
pub mod content;
pub mod datapipe;
pub mod diffusion;
pub mod fixtures;
pub mod metrics;
pub mod oracle;
pub mod scorenet;
pub mod svg;
pub mod tape;

pub use diffusion::{
    dual_cfg_combine, unified_cfg_combine, ConditionMask, GuidanceWeights, Latent, NoisePrediction,
    NoiseSchedule,
};
pub use oracle::ToyWorld;
