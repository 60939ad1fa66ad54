//! Dataset generation, configuration and self-checks behind the `qas` binary.

pub mod commands;
pub mod config;
pub mod output;
pub mod selftest;
