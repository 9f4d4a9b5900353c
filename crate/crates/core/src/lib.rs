//! Classical synthesis and verification of linear-combination-of-unitaries
//! block-encodings for the Sylvester equation `AX + XB = C`.

pub mod block_encoding;
pub mod calibration;
pub mod chebyshev;
pub mod discretization;
pub mod error;
pub mod generate;
pub mod io;
pub mod lcu;
pub mod linalg;
pub mod pipeline;
pub mod problem;
pub mod scalar;
pub mod verify;

pub use error::{Error, Result};
pub use problem::CaseTag;
pub use scalar::Real;

pub type CMatrix = linalg::CMatrix<f64>;
pub type CMatrix32 = linalg::CMatrix<f32>;
pub type Instance = problem::SylvesterInstance<f64>;
pub type Instance32 = problem::SylvesterInstance<f32>;
pub type Program = lcu::LcuProgram<f64>;
