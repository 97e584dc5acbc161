//! Attack workbench for GNN-based social bot detectors.
//!
//! The crate is organised bottom-up:
//!
//! * [`num`]: dense matrices, activations, Adam and a finite-difference oracle.
//! * [`graph`]: the attributed social graph, perturbation ledger, file formats
//!   and degree/connectivity statistics.
//! * [`detectors`]: GCN, SGC and mean-aggregator detectors with training.
//! * [`diffusion`]: the x0-predicting feature diffusion model used to clone
//!   human accounts into evolving bots.
//! * [`cohorts`]: automated, cyborg and evolving bot populations.
//! * [`marl`]: the multi-agent Q-learning edge-injection attack.
//! * [`abstraction`]: structural-entropy encoding trees and pooling.
//! * [`baselines`]: Random and DICE.
//! * [`synth`] and [`experiment`]: benchmark generation and the experiment runner.

pub mod abstraction;
pub mod baselines;
pub mod cohorts;
pub mod detectors;
pub mod diffusion;
pub mod error;
pub mod experiment;
pub mod graph;
pub mod marl;
pub mod num;
pub mod rng;
pub mod synth;

pub use error::{Error, Result};
pub use graph::{Label, SocialGraph};
pub use num::Matrix;
