//! Brokered multi-party learning.
//!
//! An untrusted broker coordinates asynchronous, differentially private SGD
//! on a logistic-regression model across clients that never share raw data.
//! Sybil resistance comes from proof-of-work admission, a per-client
//! minimum-peer requirement `k`, and disguised RONI (reject on negative
//! influence) validation rounds that raise a poisoner's per-update work.

pub mod broker;
pub mod client;
pub mod numeric;
pub mod pow;
pub mod privacy;
pub mod protocol;
pub mod adversary;
pub mod harness;
