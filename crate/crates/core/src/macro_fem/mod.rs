//! Macroscopic edge-element discretisation.

pub mod forms;
pub mod space;

pub use forms::{assemble_macro_forms, lift, project, MacroForms};
pub use space::NedelecSpace;
