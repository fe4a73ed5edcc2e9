//! Distributed observability of mixed traffic networks.
//!
//! Connected autonomous vehicles (CAVs) cooperatively estimate the states of
//! human-driven vehicles (HDVs). The crate covers the full pipeline:
//!
//! * [`graph`]: directed graphs, SCC decomposition, node/link connectivity.
//! * [`structural`]: zero/nonzero observability tests (centralized,
//!   distributed over a CAV network, and q-redundant).
//! * [`matrix`]: Kronecker products, consensus weights, shared-observation
//!   matrix and spectral radius.
//! * [`synthesis`]: block-diagonal observer gain design.
//! * [`traffic`]: free-flow / Helly car-following ground truth and the
//!   observer-side NCV/NCA models.
//! * [`observer`]: the consensus observer, a centralized Kalman benchmark
//!   and error metrics.
//! * [`scenario`]: declarative experiment files.

pub mod error;
pub mod graph;
pub mod matrix;
pub mod observer;
pub mod scenario;
pub mod structural;
pub mod synthesis;
pub mod traffic;

pub use error::{Error, Result};
