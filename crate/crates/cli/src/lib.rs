//! Command-line front end for radar gait analysis: configuration files, GWIQ
//! recordings, validation reports and plots.

pub mod config;
pub mod iqfile;
pub mod plots;
pub mod report;
pub mod run;
