//! A virtual modem: AT command interpreter, SIM stores, call lifecycle with an
//! audio side-channel, a control plane for test injection and a mock MMSC.

pub mod control;
pub mod handler;
pub mod mmsc;
pub mod oracle;
pub mod server;
pub mod state;

pub use mmsc::{MmscServer, MockMmsc};
pub use server::{ControlError, Sim, SimPorts, SimServer};
pub use state::{DialOutcome, SimConfig, ToneConfig};
