//! Integration, scenario files and output writing.

pub mod integrator;
pub mod io;
pub mod scenario;
