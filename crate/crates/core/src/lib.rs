//! Exact-gradient laboratory for reward finetuning of small softmax policies.
//!
//! Everything here works on output spaces small enough to enumerate, so
//! expected rewards, their gradients, and the PPO-style surrogate gradients
//! are computed exactly rather than estimated from rollouts. On top of that
//! sit gradient-norm bound checks ([`bounds`]), the continuous-time linear
//! model ([`gradflow`]), a controlled finetuning testbed ([`trainlab`]), and
//! reward-variance diagnostics ([`diagnostics`]).

pub mod bounds;
pub mod diagnostics;
pub mod fmt;
pub mod grad;
pub mod gradflow;
pub mod instances;
pub mod policy;
pub mod reward;
pub mod seeding;
pub mod trainlab;
