//! Proxyless neural architecture adaptation.
//!
//! A network is a DAG of mixed edges. Each free edge evaluates
//! `theta_none * 0 + theta_id * x + theta_same * op(x)`; the architecture
//! train stage alternates weight and architecture updates on every
//! mini-batch, edges are discretized by argmax, and the fixed network keeps
//! training in the same run.

pub mod data;
pub mod graph;
pub mod objectives;
pub mod report;
pub mod tensor;
pub mod train;
