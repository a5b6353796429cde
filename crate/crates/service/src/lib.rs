//! Interactive diagnosis sessions over JSON/HTTP.
//!
//! Every session is an append-only event log. The current state is whatever
//! the log replays to, both in memory and after a restart from the store
//! directory.
//!
//! | Method | Path | Body / query |
//! |---|---|---|
//! | `POST` | `/networks` | network file |
//! | `GET` | `/networks` | |
//! | `POST` | `/sessions` | `{"network", "strategy"}` |
//! | `GET` | `/sessions/{id}` | |
//! | `POST` | `/sessions/{id}/observe` | `{"node", "value", "override"?}` |
//! | `GET` | `/sessions/{id}/whatif` | `?node=` |
//! | `POST` | `/sessions/{id}/close` | |
//!
//! Errors come back as `{"code", "message"}`.

pub mod error;
pub mod http;
pub mod manager;
pub mod session;

pub use error::{ErrorBody, ServiceError};
pub use http::{router, serve};
pub use manager::{NetworkInfo, SessionManager};
pub use session::{NodeView, Observation, SessionEvent, SessionRecord, SessionView, WhatIf};
