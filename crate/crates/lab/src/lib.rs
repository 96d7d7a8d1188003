//! Configuration, file formats, studies and the command-line driver for the
//! `brinkman-fourier` numerical core.

pub mod config;
pub mod derive;
pub mod initial;
pub mod experiments;
pub mod monitor;
pub mod output;
