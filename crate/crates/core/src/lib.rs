pub mod autodiff;
pub mod error;
pub mod eval;
pub mod io;
pub mod krr;
pub mod model;
pub mod oracle;
pub mod train;
pub mod types;

pub use error::{Error, Result};
pub use types::{
    ATFDataset, ATFSample, ComplexPressure, DomainBox, GridSpec, Part, Position3, ScenarioConfig, Split,
};
