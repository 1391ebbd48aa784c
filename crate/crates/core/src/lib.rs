//! Core of the smart water irrigation platform.
//!
//! The crate is split along the data path of one deployment:
//!
//! * [`env`] is the soil-water bucket and diurnal weather the device senses.
//! * [`device`] is the firmware model: sensor sampling, hysteresis pump
//!   control, solar/battery power, the OLED display and telemetry.
//! * [`protocol`] is the bit-exact binary framing between device and gateway.
//! * [`gateway`] ingests frames, keeps the append-only timeline, tracks the
//!   device registry, raises debounced low-moisture notifications and
//!   dispatches commands.
//! * [`scenario`] wires everything into a deterministic closed loop.
//! * [`survey`] scores ISO/IEC 25010 Likert questionnaires.
//!
//! Nothing here touches the network; the `swimps` crate provides the HTTP
//! service and socket transport on top of these types.

pub mod device;
pub mod env;
pub mod gateway;
pub mod protocol;
pub mod rng;
pub mod scenario;
pub mod survey;
