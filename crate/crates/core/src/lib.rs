// SPDX-License-Identifier: Apache-2.0

//! Q-learning accelerator model: fixed-point arithmetic, LUT activations,
//! perceptron and MLP Q-function approximators, a cycle-level datapath
//! model, benchmark environments and an experiment harness.

pub mod activation;
pub mod datapath;
pub mod environments;
pub mod fixedpoint;
pub mod neural;
pub mod qlearning;
pub mod harness;
