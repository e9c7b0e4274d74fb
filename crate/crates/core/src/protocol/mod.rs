//! The reconciliation protocol: parameters, CRC gating, the two session
//! state machines and per-block outcomes.

mod crc;
mod params;
mod session;

pub use crc::{crc_tag, CRC_BITS};
pub use params::*;
pub use session::*;
