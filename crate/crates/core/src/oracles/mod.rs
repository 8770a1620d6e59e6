//! Reference solutions that do not go through the multiscale pipeline:
//! closed forms, 1D reductions, dense exponentials, fine meshes, rate fits.

pub mod dense;
pub mod laminate;
pub mod manufactured;
pub mod rate;
pub mod reference;

pub use dense::{dense_mol, dense_sobolev_oracle, DenseSobolev, Periodic1d};
pub use laminate::{laminate_effective, Laminate1d};
pub use manufactured::Manufactured;
pub use rate::{fit_rate, RateFit};
pub use reference::{fine_reference_correctors, FineReference};
