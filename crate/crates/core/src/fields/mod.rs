//! Grids, tensor fields, finite-difference calculus and discrete norms.

mod calculus;
mod chart;
mod dual;
mod field;
pub mod io;

pub use chart::Chart;
pub use dual::{negative_norm_estimate, SineDictionary, DEFAULT_DICTIONARY_SIZE};
pub(crate) use field::typed_field;
pub use field::{
    Field, ImmersionField, MetricField, NormalConnectionField, SecondFormField, VectorOneFormField,
    SPD_FLOOR,
};
