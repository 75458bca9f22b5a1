pub mod error;
pub mod kalman;
pub mod lfm;
pub mod matrixnum;
pub mod oracle;
pub mod priors;
pub mod slds;

pub use error::{Error, Result};
