//! Averaged and switched models of wireless power receivers built from a
//! rectifier followed by a DC-DC converter, with tools to analyse their
//! control-to-output dynamics and tune PI output-voltage loops.

pub mod avgsim;
pub mod checks;
pub mod cli;
pub mod error;
pub mod freq;
pub mod linalg;
pub mod model;
pub mod ode;
pub mod poly;
pub mod scenarios;
pub mod series;
pub mod switched;
pub mod tf;
pub mod tune;

pub use error::{Error, Result};
pub use freq::{MarginReport, PIGains};
pub use model::{CircuitParams, ControlInput, Converter, LinearStateSpace, Rectifier, StateVector, Topology};
pub use series::TimeSeries;
pub use tf::{RootSet, TransferFunction};
