//! Config-driven experiment runs over the tightness toolkit.

pub mod config;
pub mod plot;
pub mod run;
