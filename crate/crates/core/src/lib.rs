mod binio;
pub mod datagen;
pub mod error;
pub mod real;
pub mod rng;
pub mod coder;
pub mod optim;
pub mod checkpoint;
pub mod train;
pub mod metrics;
pub mod cli;
