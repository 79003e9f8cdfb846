//! Multi-glimpse LSTM classifiers and their exact gradients.
//!
//! Two variants share one LSTM cell implementation ([`lstm`]):
//!
//! * **concat**: a single chain whose step input is the color and depth
//!   feature rows stacked together;
//! * **fusion**: a color chain and a depth chain run side by side, and a main
//!   chain whose gates are computed from `[h^C_t; h^D_t; h^F_{t-1}]`.
//!
//! Either way a logistic head reads the last hidden state of the main chain.
//! All arithmetic is `f64`.

pub mod checkpoint;
pub mod lstm;
mod model;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, Checkpoint};
pub use lstm::{lstm_cell, sigmoid, CellState, ChainTrace, Gates, LstmParams, StepRecord};
pub use model::{
    classify, forward_concat, forward_fusion, loss_nll, ConcatModelParams, ForwardTrace, FusionModelParams, Model,
    Variant,
};
