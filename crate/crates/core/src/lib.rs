//! Adversarial robustness evaluation for wind-power forecasters.
//!
//! The crate bundles a small reverse-mode autodiff engine, two differentiable
//! forecasters (an encoder-decoder LSTM over power series and a residual CNN
//! over stacked wind-speed maps), noise and PGD attacks on the exogenous wind
//! inputs, the PRS/DRS/TARS robustness scores, seeded synthetic scenarios, and
//! the training/evaluation harness that ties them together.

pub mod attacks;
pub mod autodiff;
pub mod harness;
pub mod models;
pub mod scenarios;
pub mod scores;
