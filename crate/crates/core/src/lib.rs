pub mod acceptance;
pub mod complexes;
pub mod densities;
pub mod error;
pub mod expr;
pub mod exterior;
pub mod invariance;
pub mod laplace;
pub mod linalg;
pub mod models;
pub mod par;
pub mod spectral;
pub mod taylor;
pub mod tensor;
pub mod trig;

pub use error::{Error, Result};
