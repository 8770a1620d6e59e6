pub mod cache;
pub mod config;
pub mod effective;
pub mod macro_fem;
pub mod error;
pub mod harness;
pub mod io;
pub mod materials;
pub mod mesh;
pub mod micro;
pub mod oracles;
pub mod quadrature;
pub mod solvers;
pub mod sparse;
pub mod studies;
pub mod timeloop;

pub use error::{Error, Result};
