pub mod cli;
pub mod error;
pub mod linalg;
pub mod moments;
pub mod poly;
pub mod preprocess;
pub mod problem;
pub mod relax;
pub mod sdp;
pub mod sos;

pub use error::{Error, Result};
