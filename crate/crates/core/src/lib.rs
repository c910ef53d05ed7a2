//! A from-scratch Bi-LSTM sequence labeler for named entity recognition.

pub mod corpus;
pub mod eval;
pub mod features;
pub mod model;
pub mod numerics;
pub mod selfcheck;
pub mod train;
