//! Topic features from charity crowdfunding campaign descriptions, fused with
//! numeric campaign attributes and fed to a random forest that predicts
//! whether a campaign reaches its funding goal.
//!
//! The pipeline has three tiers:
//!
//! * [`corpus`] and [`textprep`] ingest campaign records and turn the two
//!   description channels (campaign and incentive text) into bag-of-words
//!   documents;
//! * [`topicmodel`] fits a seed-word guided LDA model per channel with
//!   collapsed Gibbs sampling, and [`features`] fuses the resulting topic
//!   proportions with the numeric attributes;
//! * [`forest`] trains the classifier and [`eval`] scores it.
//!
//! [`synth`] generates planted corpora and labelled campaigns that serve as
//! ground truth for the statistical tests, and [`cli`] wires everything into
//! the `crowdtopics` command.

pub mod cli;
pub mod config;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod features;
pub mod forest;
pub mod rng;
pub mod synth;
pub mod textprep;
pub mod topicmodel;

pub use error::{Error, Result};
