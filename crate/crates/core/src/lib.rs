//! Explicit MPC synthesis and encrypted closed-loop evaluation.
//!
//! - [`mpqp`]: condensed MPC problem, critical-region enumeration, PWA law.
//! - [`keys`], [`qe`]: per-cycle key streams and the exp/log cipher.
//! - [`paillier`]: additively homomorphic baseline.
//! - [`protocol`]: sensor/cloud/actuator cycle with instrumented channel.
//! - [`simulation`], [`attack`]: closed-loop runs and the eavesdropper.

pub mod attack;
pub mod keys;
pub mod lp;
pub mod mpqp;
pub mod paillier;
pub mod protocol;
pub mod qe;
pub mod simulation;
