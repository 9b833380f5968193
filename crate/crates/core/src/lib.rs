//! Prior-guided multi-fidelity optimization of hyperparameters and U-Net
//! architectures, with a Pareto-aware successive-halving variant that
//! trades validation error against training runtime.

pub mod analysis;
pub mod configspace;
pub mod grammar;
pub mod harness;
pub mod moo;
pub mod prior;
pub mod priorband;
pub mod scheduler;
pub mod seed;
