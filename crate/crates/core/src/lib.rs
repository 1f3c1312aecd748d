pub mod config;
pub mod cylinders;
pub mod error;
pub mod exec;
pub mod maps;
pub mod roots;
pub mod symbolic;
pub mod conformal;
pub mod orbits;
pub mod pressure;
pub mod gaps;
pub mod cli;
