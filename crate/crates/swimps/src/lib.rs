//! Gateway service and socket transports around `swimps-core`.
//!
//! [`Hub`] wraps a [`Gateway`](swimps_core::gateway::Gateway) for concurrent
//! use; [`net`] carries device frames over TCP, [`api`] serves the HTTP API
//! and event stream, and [`ports`] lets the scenario runner drive a gateway
//! over real sockets.

pub mod api;
pub mod client;
pub mod hub;
pub mod net;
pub mod ports;

pub use hub::{Clock, Hub, ManualClock, SystemClock};
