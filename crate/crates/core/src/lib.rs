pub mod acquisition;
pub mod design;
pub mod error;
pub use error::{Error, Result};
pub mod gp;
pub mod harness;
pub mod kernel;
pub mod mixture;
pub mod optimize;
pub mod oracle;
pub mod rng;
