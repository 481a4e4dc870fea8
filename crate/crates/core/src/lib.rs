#![forbid(unsafe_code)]

//! Bounded-autonomy mediation layer with a reference CRM consumer,
//! a deterministic scripted planner, and an evaluation harness.
//!
//! A planner proposes actions; everything that executes is mediated by
//! typed action contracts, permission-aware capability exposure, staged
//! validation, confirmation gates, tenant/workspace scoping, and explicit
//! manifest publication. The consumer application keeps execution
//! authority: mutations only happen through its services, routes, and
//! scoped store.

pub mod authz;
pub mod clock;
pub mod confirmation;
pub mod contracts;
pub mod corpus;
pub mod crm;
pub mod events;
pub mod flags;
pub mod harness;
pub mod host;
pub mod manifest;
pub mod pipeline;
pub mod planner;
pub mod schema;
pub mod scope;
pub mod session;

pub use flags::{Condition, FeatureFlags};
