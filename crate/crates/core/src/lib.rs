//! Filter-space editing directions for convolutional image generators.
//!
//! A direction holds one scalar per convolutional filter. It is composed from
//! positive and negative example images, refined with brushed masks that keep
//! or drop the filters active under a region, and rendered by offsetting the
//! hooked filter maps. The [`eval`] module measures how cleanly a direction
//! changes one attribute, and [`session`] drives the whole loop interactively.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the common choices.

pub mod action;
pub mod direction;
pub mod error;
pub mod eval;
pub mod generator;
pub mod mask;
pub mod scalar;
pub mod session;

pub use action::DisentangleAction;
pub use direction::{
    compose_direction, extract_filter_vector, DirectionRecord, DirectionVector, Exemplar, ExemplarSet, FilterLayout,
    FilterVector, LayerSpec, Polarity,
};
pub use error::{Error, Result};
pub use generator::{GeneratedImage, GeneratorAdapter, MaskedTreeGenerator};
pub use mask::{Mask, MaskMode};
pub use scalar::Scalar;
pub use session::{DirectionStore, Session, SessionConfig};

pub type Direction64 = DirectionVector<f64>;
pub type Direction32 = DirectionVector<f32>;
pub type FilterVector64 = FilterVector<f64>;
pub type FilterVector32 = FilterVector<f32>;
pub type Image64 = GeneratedImage<f64>;
pub type Image32 = GeneratedImage<f32>;
pub type ToyGenerator64 = MaskedTreeGenerator<f64>;
pub type ToyGenerator32 = MaskedTreeGenerator<f32>;
pub type Session64 = Session<f64>;
