pub mod clf;
pub mod control;
pub mod discrete;
pub mod error;
pub mod flow;
pub mod metric;
pub mod objective;
pub mod verify;

pub use error::{Error, Result};
