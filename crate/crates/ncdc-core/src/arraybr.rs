//! The array-broadcasted category Br: array objects over a base datatype,
//! weaves, and broadcasted operations (a base operation run at every element
//! of a degree shape, with per-input reindexings selecting which slice each
//! run sees).

use crate::error::{Error, Result};
use crate::remapping::Remapping;
use crate::stride::{AffineStrideMap, Axis, Shape};
use crate::uid::Uid;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Datatype {
    Real,
    Int,
    /// The finite set {0, .., V-1}.
    Finite(u64),
    /// Reals carrying an opaque quantization tag; evaluates as real.
    Quantized(String),
}

impl Datatype {
    pub fn is_float(&self) -> bool {
        matches!(self, Datatype::Real | Datatype::Quantized(_))
    }

    pub fn describe(&self) -> String {
        match self {
            Datatype::Real => "real".into(),
            Datatype::Int => "int".into(),
            Datatype::Finite(v) => format!("finite({v})"),
            Datatype::Quantized(q) => format!("quantized({q})"),
        }
    }
}

/// A lone object of Br: one value of `dtype` at every coordinate of `shape`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ArrayObject {
    pub dtype: Datatype,
    pub shape: Shape,
}

impl ArrayObject {
    pub fn new(dtype: Datatype, axes: Vec<Axis>) -> ArrayObject {
        ArrayObject { dtype, shape: Shape(axes) }
    }

    pub fn scalar(dtype: Datatype) -> ArrayObject {
        ArrayObject { dtype, shape: Shape::unit() }
    }

    /// Interface compatibility: same dtype, same axis uids in the same order.
    pub fn compatible(&self, other: &ArrayObject) -> bool {
        self.dtype == other.dtype && self.shape.same_axes(&other.shape)
    }

    pub fn describe(&self) -> String {
        let axes: Vec<String> = self
            .shape
            .0
            .iter()
            .map(|a| match a.size {
                Some(s) => format!("{}:{}", a.name, s),
                None => format!("{}:?", a.name),
            })
            .collect();
        format!("[{}, ({})]", self.dtype.describe(), axes.join(","))
    }

    pub fn lift(&self, extra: &Shape) -> ArrayObject {
        ArrayObject { dtype: self.dtype.clone(), shape: self.shape.extend(extra) }
    }
}

/// Splits an array's axis slots into target slots (acted on by the base
/// operation, `true`) and tiled slots (broadcast, `false`).
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Weave {
    pub mask: Vec<bool>,
    pub dtype: Datatype,
    pub targets: Vec<Axis>,
}

impl Weave {
    pub fn new(mask: Vec<bool>, dtype: Datatype, targets: Vec<Axis>) -> Result<Weave> {
        let trues = mask.iter().filter(|&&b| b).count();
        if trues != targets.len() {
            return Err(Error::Domain(format!(
                "weave mask has {trues} target slots but {} target axes",
                targets.len()
            )));
        }
        Ok(Weave { mask, dtype, targets })
    }

    /// All slots are targets: the base operation sees the whole array.
    pub fn all_targets(dtype: Datatype, targets: Vec<Axis>) -> Weave {
        Weave { mask: vec![true; targets.len()], dtype, targets }
    }

    /// All slots are tiled: the base operation sees a scalar.
    pub fn all_tiled(dtype: Datatype, tiled_count: usize) -> Weave {
        Weave { mask: vec![false; tiled_count], dtype, targets: Vec::new() }
    }

    pub fn tiled_count(&self) -> usize {
        self.mask.iter().filter(|&&b| !b).count()
    }

    /// Ω_w: the front-loading permutation sending the weaved arrangement to
    /// targets-first order.
    pub fn permutation(&self) -> Remapping {
        let total_targets = self.targets.len();
        let mut seen_targets = 0usize;
        let mut seen_tiled = 0usize;
        let targets = self
            .mask
            .iter()
            .map(|&is_target| {
                if is_target {
                    seen_targets += 1;
                    seen_targets - 1
                } else {
                    seen_tiled += 1;
                    total_targets + seen_tiled - 1
                }
            })
            .collect();
        Remapping::new(targets, self.mask.len()).unwrap()
    }

    /// The weaved arrangement: target axes at the true slots, `tiled` axes at
    /// the false slots, both in order.
    pub fn arranged(&self, tiled: &[Axis]) -> Result<Shape> {
        if tiled.len() != self.tiled_count() {
            return Err(Error::Domain(format!(
                "weave has {} tiled slots but {} tiled axes were supplied",
                self.tiled_count(),
                tiled.len()
            )));
        }
        let mut ts = self.targets.iter();
        let mut ps = tiled.iter();
        Ok(Shape(
            self.mask
                .iter()
                .map(|&b| if b { ts.next().unwrap().clone() } else { ps.next().unwrap().clone() })
                .collect(),
        ))
    }

    /// Appends `extra` tiled slots at the outer end.
    pub fn lifted(&self, extra: usize) -> Weave {
        let mut mask = self.mask.clone();
        mask.extend(std::iter::repeat(false).take(extra));
        Weave { mask, dtype: self.dtype.clone(), targets: self.targets.clone() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ElemTag {
    Add,
    Mul,
    Neg,
}

impl ElemTag {
    pub fn name(self) -> &'static str {
        match self {
            ElemTag::Add => "add",
            ElemTag::Mul => "mul",
            ElemTag::Neg => "neg",
        }
    }
}

/// The polymorphic base operation of a broadcast. Learned operations carry
/// the uid under which the parameter store resolves their tensor.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum BaseOp {
    Elementwise(ElemTag),
    Softmax,
    Sum,
    Identity,
    Linear { weight: Uid },
    RmsNorm { gain: Uid },
    Embedding { table: Uid },
    Select,
    TriangularMask,
}

pub const RMSNORM_EPSILON: f64 = 1e-6;
/// Finite stand-in for -inf so softmax over masked rows stays total.
pub const MASK_SENTINEL: f64 = -1e30;

impl BaseOp {
    pub fn name(&self) -> &'static str {
        match self {
            BaseOp::Elementwise(t) => t.name(),
            BaseOp::Softmax => "softmax",
            BaseOp::Sum => "sum",
            BaseOp::Identity => "identity",
            BaseOp::Linear { .. } => "linear",
            BaseOp::RmsNorm { .. } => "rmsnorm",
            BaseOp::Embedding { .. } => "embedding",
            BaseOp::Select => "select",
            BaseOp::TriangularMask => "mask",
        }
    }

    pub fn is_learned(&self) -> bool {
        matches!(self, BaseOp::Linear { .. } | BaseOp::RmsNorm { .. } | BaseOp::Embedding { .. })
    }

    /// Naturality class. Every implemented operation maps elements to
    /// elements, so this is constantly true; the flag exists because rewrite
    /// rules are licensed by it, not by a global assumption.
    pub fn is_deterministic(&self) -> bool {
        true
    }
}

/// Root morphism payload of Br.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum RootOp {
    /// [a,η] : [a, cod η] → [a, dom η]; evaluation gathers out[j] = in[η(j)].
    Reindexing { dtype: Datatype, map: AffineStrideMap },
    Broadcast(BroadcastedOp),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BroadcastedOp {
    pub base: BaseOp,
    /// The degree P: shared domain of all reindexings; the base operation
    /// runs once per element of P.
    pub degree: Shape,
    /// One per input; input i's run at degree element p sees the slice at
    /// reindexings[i](p).
    pub reindexings: Vec<AffineStrideMap>,
    pub input_weaves: Vec<Weave>,
    pub output_weaves: Vec<Weave>,
}

impl BroadcastedOp {
    pub fn input_objects(&self) -> Result<Vec<ArrayObject>> {
        self.input_weaves
            .iter()
            .zip(&self.reindexings)
            .map(|(w, r)| Ok(ArrayObject { dtype: w.dtype.clone(), shape: w.arranged(&r.cod.0)? }))
            .collect()
    }

    pub fn output_objects(&self) -> Result<Vec<ArrayObject>> {
        self.output_weaves
            .iter()
            .map(|w| Ok(ArrayObject { dtype: w.dtype.clone(), shape: w.arranged(&self.degree.0)? }))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.reindexings.len() != self.input_weaves.len() {
            return Err(Error::Domain(format!(
                "{} reindexings for {} inputs",
                self.reindexings.len(),
                self.input_weaves.len()
            )));
        }
        for (i, r) in self.reindexings.iter().enumerate() {
            if !r.dom.same_axes(&self.degree) {
                return Err(Error::Domain(format!(
                    "reindexing {i} does not share the degree shape"
                )));
            }
            if r.cod.rank() != self.input_weaves[i].tiled_count() {
                return Err(Error::Domain(format!(
                    "reindexing {i} supplies {} tiled axes, weave expects {}",
                    r.cod.rank(),
                    self.input_weaves[i].tiled_count()
                )));
            }
        }
        self.check_base_signature()
    }

    fn check_base_signature(&self) -> Result<()> {
        let ins = &self.input_weaves;
        let outs = &self.output_weaves;
        let fail = |msg: String| Err(Error::Domain(format!("{}: {msg}", self.base.name())));
        let want = |cond: bool, msg: &str| -> Result<()> {
            if cond {
                Ok(())
            } else {
                fail(msg.to_string())
            }
        };
        match &self.base {
            BaseOp::Elementwise(tag) => {
                let arity = match tag {
                    ElemTag::Neg => 1,
                    _ => ins.len().max(1),
                };
                want(ins.len() == arity, "wrong arity")?;
                want(outs.len() == 1, "one output expected")?;
                want(
                    ins.iter().chain(outs.iter()).all(|w| w.targets.is_empty()),
                    "scalar base operation takes no target axes",
                )?;
                want(
                    ins.iter().all(|w| w.dtype == outs[0].dtype),
                    "input and output datatypes must agree",
                )?;
                want(!matches!(outs[0].dtype, Datatype::Finite(_)), "finite dtypes have no arithmetic")
            }
            BaseOp::Softmax | BaseOp::RmsNorm { .. } => {
                want(ins.len() == 1 && outs.len() == 1, "unary over one axis")?;
                want(
                    ins[0].targets.len() == 1 && outs[0].targets.len() == 1,
                    "exactly one target axis",
                )?;
                want(
                    ins[0].targets[0].uid == outs[0].targets[0].uid,
                    "input and output act over the same axis",
                )?;
                want(ins[0].dtype.is_float() && outs[0].dtype.is_float(), "float dtype required")
            }
            BaseOp::Sum => {
                want(ins.len() == 1 && outs.len() == 1, "unary")?;
                want(ins[0].targets.len() == 1, "one summed axis")?;
                want(outs[0].targets.is_empty(), "scalar output")?;
                want(!matches!(ins[0].dtype, Datatype::Finite(_)), "finite dtypes have no arithmetic")
            }
            BaseOp::Identity => {
                want(ins.len() == outs.len(), "matching input/output count")?;
                for (i, o) in ins.iter().zip(outs.iter()) {
                    want(
                        i.dtype == o.dtype
                            && i.targets.len() == o.targets.len()
                            && i.targets.iter().zip(&o.targets).all(|(a, b)| a.uid == b.uid),
                        "identity must preserve each target array",
                    )?;
                }
                Ok(())
            }
            BaseOp::Linear { .. } => {
                want(ins.len() == 1 && outs.len() == 1, "unary")?;
                want(ins[0].dtype.is_float() && outs[0].dtype.is_float(), "float dtype required")
            }
            BaseOp::Embedding { .. } => {
                want(ins.len() == 1 && outs.len() == 1, "unary")?;
                want(ins[0].targets.is_empty(), "index input is a scalar")?;
                want(matches!(ins[0].dtype, Datatype::Finite(_)), "index input must be finite(V)")?;
                want(outs[0].targets.len() == 1 && outs[0].dtype.is_float(), "real vector output")
            }
            BaseOp::Select => {
                want(ins.len() == 2 && outs.len() == 1, "index plus table")?;
                want(
                    ins[0].targets.is_empty() && matches!(ins[0].dtype, Datatype::Finite(_)),
                    "first input is a finite(V) scalar",
                )?;
                want(ins[1].targets.len() == 1 && ins[1].dtype.is_float(), "second input is a real row")?;
                if let (Datatype::Finite(v), Some(s)) = (&ins[0].dtype, ins[1].targets[0].size) {
                    want(*v == s, "table axis size must equal V")?;
                }
                want(outs[0].targets.is_empty() && outs[0].dtype.is_float(), "scalar real output")
            }
            BaseOp::TriangularMask => {
                want(ins.len() == 1 && outs.len() == 1, "unary")?;
                want(
                    ins[0].targets.len() == 2 && outs[0].targets.len() == 2,
                    "two target axes (position, query)",
                )?;
                want(
                    ins[0]
                        .targets
                        .iter()
                        .zip(&outs[0].targets)
                        .all(|(a, b)| a.uid == b.uid),
                    "mask preserves its axes",
                )?;
                want(ins[0].dtype.is_float(), "float dtype required")
            }
        }
    }

    /// Appends the axes of `extra` as additional tiled slots on every input
    /// and output, extending every reindexing with the identity on `extra`.
    pub fn lifted(&self, extra: &Shape) -> BroadcastedOp {
        BroadcastedOp {
            base: self.base.clone(),
            degree: self.degree.extend(extra),
            reindexings: self.reindexings.iter().map(|r| r.tensor_identity(extra)).collect(),
            input_weaves: self.input_weaves.iter().map(|w| w.lifted(extra.rank())).collect(),
            output_weaves: self.output_weaves.iter().map(|w| w.lifted(extra.rank())).collect(),
        }
    }
}

impl RootOp {
    pub fn dom(&self) -> Result<Vec<ArrayObject>> {
        match self {
            RootOp::Reindexing { dtype, map } => {
                Ok(vec![ArrayObject { dtype: dtype.clone(), shape: map.cod.clone() }])
            }
            RootOp::Broadcast(b) => b.input_objects(),
        }
    }

    pub fn cod(&self) -> Result<Vec<ArrayObject>> {
        match self {
            RootOp::Reindexing { dtype, map } => {
                Ok(vec![ArrayObject { dtype: dtype.clone(), shape: map.dom.clone() }])
            }
            RootOp::Broadcast(b) => b.output_objects(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            RootOp::Reindexing { map, .. } => map.check_capture(),
            RootOp::Broadcast(b) => {
                b.validate()?;
                for r in &b.reindexings {
                    r.check_capture()?;
                }
                Ok(())
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            RootOp::Reindexing { .. } => "reindex",
            RootOp::Broadcast(b) => b.base.name(),
        }
    }

    pub fn is_deterministic(&self) -> bool {
        match self {
            RootOp::Reindexing { .. } => true,
            RootOp::Broadcast(b) => b.base.is_deterministic(),
        }
    }
}
