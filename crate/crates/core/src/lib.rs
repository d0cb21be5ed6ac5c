pub mod rng;
pub mod spectral;
pub mod forcing;
pub mod models;
pub mod integrate;
pub mod coupling;
pub mod diagnostics;
pub mod config;
pub mod experiment;
