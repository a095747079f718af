pub mod bench;
pub mod cli;
pub mod config;
pub mod csvout;
pub mod experiment;
pub mod pgm;
pub mod stages;
