//! Unsupervised word segmentation with bi-directional segmental language
//! models.
//!
//! The pipeline: [`corpus`] turns raw lines into character sequences, [`slm`]
//! scores every candidate segment in both directions, [`lattice`] sums or
//! maximizes over segmentations, [`trainer`] fits the model by maximizing
//! the marginal likelihood, and [`evaluator`] scores the output against
//! gold segmentations.

pub mod cli;
pub mod corpus;
pub mod error;
pub mod evaluator;
pub mod lattice;
pub mod model;
pub mod slm;
pub mod synthetic;
pub mod trainer;

pub use error::{Error, Result};
