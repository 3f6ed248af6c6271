pub mod capture;
pub mod cli;
pub mod error;
pub mod initcore;
pub mod numkit;
pub mod trainlab;
pub mod vas;

pub use error::{Error, Result};
pub use numkit::Matrix;
