//! P1 finite elements on uniform grids of the unit interval and unit square.

mod assemble;
mod grid;
mod residual;

pub use assemble::{
    assemble_augmented_2d, assemble_load, assemble_stiffness, assemble_stiffness_1d, assemble_stiffness_2d,
    hat_integrals,
};
pub use grid::{GridFunction, StructuredGrid};
pub use residual::{
    interpolate_at_nodes, interpolate_at_padded, residual_to_function, residual_to_function_augmented,
    PaddingMode, PiecewiseLinearFn,
};
