//! Reachability analysis for discrete-time neural-network dynamical systems.
//!
//! A system `x_{t+1} = f(x_t, w_t)` is a [`graph::CompGraph`]. Reachable
//! sets are over-approximated by template polytopes, either step by step
//! (recursive) or by bounding the unrolled graph directly (one-shot).

pub mod graph;
pub mod lp;
pub mod reach;
pub mod relax;
pub mod sets;
pub mod systems;
