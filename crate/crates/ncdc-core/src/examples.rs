//! Bundled example terms for the CLI and the test suite.

use crate::align::{compose_aligned, compose_aligned_all};
use crate::arraybr::{Datatype, ElemTag};
use crate::error::{Error, Result};
use crate::ops;
use crate::remapping::Remapping;
use crate::stride::Axis;
use crate::term::Term;

pub const NAMES: [&str; 3] = ["attention", "convolution", "resnet-block"];

/// Scaled-dot-product attention with a causal mask, left unconfigured:
/// the free axes are q, h, x and the two d's.
pub fn attention() -> Result<Term> {
    let qk = ops::einsum("q h d, x h d -> h q x", Datatype::Real)?;
    let mask = ops::triangular_mask(Axis::free("q"), Axis::free("x"))?;
    let sm = ops::softmax(Axis::free("n"))?;
    let sv = ops::einsum("h q x, x h d -> q h d", Datatype::Real)?;
    compose_aligned_all(&[qk, mask, sm, sv])
}

/// One-dimensional convolution, 1 channel in and out, kernel width 2 over
/// three output positions.
pub fn convolution() -> Result<Term> {
    ops::convolution(
        Axis::sized("x'", 3),
        Axis::sized("k", 2),
        Axis::sized("c", 1),
        Axis::sized("c'", 1),
    )
}

/// A residual block: y = x + linear(rmsnorm(x)).
pub fn resnet_block() -> Result<Term> {
    let d = Axis::sized("d", 4);
    let norm = ops::rmsnorm(d.clone())?;
    let lin = ops::linear(vec![d.clone()], vec![d.clone()])?;
    let branch = compose_aligned(&norm, &lin)?;

    let x = branch.dom()?;
    let copy = Term::rearrangement(Remapping::new(vec![0, 0], 1)?, x)?;
    let split = Term::product(vec![branch.clone(), Term::identity(branch.dom()?)]);
    let add = ops::elementwise(ElemTag::Add, 2, Datatype::Real)?;
    let body = compose_aligned(&compose_aligned(&copy, &split)?, &add)?;
    Ok(Term::block("resnet", None, body))
}

pub fn bundled(name: &str) -> Result<Term> {
    match name {
        "attention" => attention(),
        "convolution" => convolution(),
        "resnet-block" => resnet_block(),
        other => Err(Error::Domain(format!(
            "unknown example '{other}' (expected one of {})",
            NAMES.join(", ")
        ))),
    }
}
