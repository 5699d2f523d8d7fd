//! Capacity-oriented RIS configuration for the multi-user MISO downlink.
//!
//! The library jointly tunes the phase shifts of a reconfigurable
//! intelligent surface and the transmit input covariance of an M-antenna
//! base station serving K single-antenna users. Phases are driven by
//! gradient ascent on the effective rank of the weighted channel
//! covariance `H Rx H^H`; the covariance comes from linear precoding
//! (MRT or MMSE) with water-filling power allocation, or from the
//! non-precoded UPA / eigenmode water-filling baselines. A seeded
//! Monte-Carlo harness sweeps SNR, RIS element count, and antenna count
//! and aggregates spectral efficiency, effective rank, and the MRT-MMSE
//! capacity gap.
//!
//! Realizations are independent work items; with the default `parallel`
//! feature they fan out across a rayon pool, and results are reduced in
//! realization order so parallel and sequential runs emit identical bytes.

pub mod channel;
pub mod effective_rank;
pub mod error;
pub mod evaluation;
pub mod numerics;
pub mod optimizer;
pub mod precoding;
pub mod testing;

pub use error::{Error, Result};
