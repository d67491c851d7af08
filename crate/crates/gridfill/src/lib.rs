//! Gap imputation for hourly building-energy meter series.
//!
//! A meter-year is reshaped into a 168x52 time-of-week by week grid and
//! treated as an image: synthetic hole masks are cut into it, convolutional
//! models (a partial-convolution U-Net and two plain conv autoencoders) fill
//! the holes, and a weekly-persistence baseline anchors the comparison.
//! The crate covers the whole pipeline: CSV ingest and cleaning, grid
//! construction, mask generation, hand-rolled conv numerics with exact
//! gradients, Adam training with early stopping, evaluation reports, and a
//! synthetic fleet generator, all behind the `gridfill` CLI.
//!
//! Every seeded entry point is deterministic: identical inputs and seeds
//! produce byte-identical outputs on a given platform.

pub mod cli;
pub mod dataset;
pub mod evaluation;
pub mod masks;
pub mod models;
pub mod numeric;
pub mod parallel;
pub mod rng;
pub mod synth;
pub mod tensor;
#[cfg(test)]
pub(crate) mod testutil;
pub mod training;
