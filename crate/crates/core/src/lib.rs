//! Steady states, spectra and critical manifolds of delay differential
//! equations, and steady-state optimization with normal-vector constraints
//! that keep a whole parameter uncertainty box on the stable side of every
//! tracked bifurcation manifold.

pub mod error;
pub mod laser;
pub mod linalg;
pub mod manifolds;
pub mod models;
pub mod normal_vector;
pub mod robust;
pub mod sim;
pub mod spectrum;
pub mod sqp;
pub mod system;

pub use error::{Error, Result};
pub use system::{DdeSystem, FnSystem, Jacobians, ParamMeta, SteadyState};

pub type Real = f64;
pub type Vector = nalgebra::DVector<Real>;
pub type Matrix = nalgebra::DMatrix<Real>;
pub type Complex = num_complex::Complex64;
