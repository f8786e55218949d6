pub mod activity;
pub mod bd;
pub mod constraints;
pub mod controller;
pub mod encoder;
pub mod error;
pub mod inverse;
pub mod media;
pub mod models;
pub mod pareto;
pub mod poly;
pub mod records;

pub use error::{Error, Result};
