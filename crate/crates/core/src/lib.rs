//! Federated knowledge graph embedding simulator.
//!
//! Clients hold disjoint shards of a knowledge graph and train local
//! embeddings. Three federation modes are supported:
//!
//! * `Local`: no communication, every client trains alone.
//! * `FedE`: the server aligns entities in plaintext and averages entity
//!   embeddings.
//! * `FedR`: the server aligns relations through a private set union and
//!   averages relation embeddings, optionally under secure aggregation.
//!
//! On top of training the crate provides link-prediction evaluation,
//! communication accounting, and a reconstruction attack that measures how
//! much of a client's graph a colluding server can recover from the
//! shared embeddings.

pub mod attack;
pub mod cli;
pub mod data;
pub mod error;
pub mod eval;
pub mod federation;
pub mod manifest;
pub mod model;
pub mod rng;
pub mod secure;

pub use error::{Error, Result};
