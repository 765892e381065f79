//! A categorical intermediate representation for broadcasted tensor
//! programs.
//!
//! Arrays are lone objects of a product category; programs are immutable
//! morphism terms built from composition, products, rearrangements and
//! broadcasted root operations. Coordinate bookkeeping lives in an affine
//! stride algebra, broadcasting in weaves and degree shapes. The crate ships
//! a reference interpreter with an independent brute-force oracle, an
//! autoaligning composition operator, hypergraph rewriting, canonical JSON
//! serialization and deterministic SVG rendering.

pub mod align;
pub mod arraybr;
pub mod codec;
pub mod diagram;
pub mod error;
pub mod eval;
pub mod examples;
pub mod hypergraph;
pub mod ops;
pub mod remapping;
pub mod rewrite;
pub mod stride;
pub mod tensor;
pub mod term;
pub mod uid;

pub use arraybr::{ArrayObject, BaseOp, BroadcastedOp, Datatype, ElemTag, RootOp, Weave};
pub use error::{Error, Result};
pub use remapping::{Remapping, RemappingClass};
pub use stride::{AffineStrideMap, Axis, Shape};
pub use tensor::{tensors_close, Data, TensorValue};
pub use term::{ProductObject, Subst, Term};
pub use uid::Uid;
