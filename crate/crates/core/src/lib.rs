pub mod copula;
pub mod encode;
pub mod error;
pub mod flights;
pub mod learners;
pub mod numkit;
pub mod quality;
pub mod table;
pub mod tvae;

pub use error::{Error, Result};
