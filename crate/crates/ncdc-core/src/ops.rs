//! Term constructors: reindexings, broadcasted operations, batch lifting,
//! einsum and the named operation builders.

use crate::arraybr::{ArrayObject, BaseOp, BroadcastedOp, Datatype, ElemTag, RootOp, Weave};
use crate::error::{Error, Result};
use crate::remapping::Remapping;
use crate::stride::{AffineStrideMap, Axis, Shape};
use crate::term::Term;
use crate::uid::Uid;

/// The reindexing term [a,η] : [a, cod η] → [a, dom η] (contravariant);
/// evaluation gathers out[j] = in[η(j)].
pub fn reindexing(dtype: Datatype, map: AffineStrideMap) -> Term {
    Term::root(RootOp::Reindexing { dtype, map })
}

pub fn make_broadcast(
    base: BaseOp,
    degree: Shape,
    reindexings: Vec<AffineStrideMap>,
    input_weaves: Vec<Weave>,
    output_weaves: Vec<Weave>,
) -> Result<Term> {
    let b = BroadcastedOp { base, degree, reindexings, input_weaves, output_weaves };
    b.validate()?;
    Ok(Term::root(RootOp::Broadcast(b)))
}

/// A broadcast of degree 𝟙: the base operation applied once, to whole
/// arrays. Lifting and alignment add tiling later.
fn base_broadcast(base: BaseOp, input_weaves: Vec<Weave>, output_weaves: Vec<Weave>) -> Result<Term> {
    let reindexings = vec![AffineStrideMap::identity(Shape::unit()); input_weaves.len()];
    make_broadcast(base, Shape::unit(), reindexings, input_weaves, output_weaves)
}

/// Same, but sharing a pre-minted root uid (learned operations key their
/// parameter tensor by it).
fn learned_broadcast(
    uid: Uid,
    base: BaseOp,
    input_weaves: Vec<Weave>,
    output_weaves: Vec<Weave>,
) -> Result<Term> {
    let reindexings = vec![AffineStrideMap::identity(Shape::unit()); input_weaves.len()];
    let b = BroadcastedOp { base, degree: Shape::unit(), reindexings, input_weaves, output_weaves };
    b.validate()?;
    Ok(Term::Root { uid, op: RootOp::Broadcast(b) })
}

/// [f,P]: run f once per element of P, appending P's axes after every
/// constituent array's existing axes.
pub fn batch_lift(f: &Term, p: &Shape) -> Result<Term> {
    if p.rank() == 0 {
        return Ok(f.clone());
    }
    Ok(match f {
        Term::Root { uid, op } => Term::Root {
            uid: *uid,
            op: match op {
                RootOp::Reindexing { dtype, map } => {
                    RootOp::Reindexing { dtype: dtype.clone(), map: map.tensor_identity(p) }
                }
                RootOp::Broadcast(b) => RootOp::Broadcast(b.lifted(p)),
            },
        },
        Term::Composed(parts) => {
            Term::Composed(parts.iter().map(|t| batch_lift(t, p)).collect::<Result<_>>()?)
        }
        Term::Product(parts) => {
            Term::Product(parts.iter().map(|t| batch_lift(t, p)).collect::<Result<_>>()?)
        }
        Term::Rearrangement { mapping, dom_family } => Term::Rearrangement {
            mapping: mapping.clone(),
            dom_family: dom_family.iter().map(|o| o.lift(p)).collect(),
        },
        Term::Block { tag, repeat, body } => Term::Block {
            tag: tag.clone(),
            repeat: *repeat,
            body: Box::new(batch_lift(body, p)?),
        },
        Term::Element { values, cod } => {
            // an element has no input to tile over; repeat its value across P
            let base = Term::element(values.clone(), cod.clone())?;
            Term::compose(base, repetition(cod.clone(), p)?)?
        }
    })
}

/// Π [aᵢ, Aᵢ] → Π [aᵢ, Aᵢ⊗P], out[.., p] = in[..] for every p.
pub fn repetition(objects: Vec<ArrayObject>, p: &Shape) -> Result<Term> {
    let delete_p = AffineStrideMap::new(
        p.clone(),
        Shape::unit(),
        vec![Vec::new(); p.rank()],
        Vec::new(),
    )?;
    let input_weaves: Vec<Weave> = objects
        .iter()
        .map(|o| Weave::all_targets(o.dtype.clone(), o.shape.0.clone()))
        .collect();
    let output_weaves: Vec<Weave> =
        input_weaves.iter().map(|w| w.lifted(p.rank())).collect();
    make_broadcast(
        BaseOp::Identity,
        p.clone(),
        vec![delete_p; objects.len()],
        input_weaves,
        output_weaves,
    )
}

/// Scalar arithmetic on n arrays; broadcastable over any axes by lifting.
pub fn elementwise(tag: ElemTag, arity: usize, dtype: Datatype) -> Result<Term> {
    let w = Weave::all_targets(dtype, Vec::new());
    base_broadcast(BaseOp::Elementwise(tag), vec![w.clone(); arity], vec![w])
}

pub fn softmax(axis: Axis) -> Result<Term> {
    let w = Weave::all_targets(Datatype::Real, vec![axis]);
    base_broadcast(BaseOp::Softmax, vec![w.clone()], vec![w])
}

pub fn sum(axis: Axis, dtype: Datatype) -> Result<Term> {
    base_broadcast(
        BaseOp::Sum,
        vec![Weave::all_targets(dtype.clone(), vec![axis])],
        vec![Weave::all_targets(dtype, Vec::new())],
    )
}

/// Learned map [ℝ, in_axes] → [ℝ, out_axes]; the weight tensor has the
/// input axes followed by the output axes.
pub fn linear(in_axes: Vec<Axis>, out_axes: Vec<Axis>) -> Result<Term> {
    let uid = Uid::fresh();
    learned_broadcast(
        uid,
        BaseOp::Linear { weight: uid },
        vec![Weave::all_targets(Datatype::Real, in_axes)],
        vec![Weave::all_targets(Datatype::Real, out_axes)],
    )
}

/// y = g ⊙ x / sqrt(mean(x²) + ε) along one axis, gain g learned per slot.
pub fn rmsnorm(axis: Axis) -> Result<Term> {
    let uid = Uid::fresh();
    let w = Weave::all_targets(Datatype::Real, vec![axis]);
    learned_broadcast(uid, BaseOp::RmsNorm { gain: uid }, vec![w.clone()], vec![w])
}

/// Learned table lookup finite(V) → [ℝ, dim].
pub fn embedding(vocab: u64, dim: Axis) -> Result<Term> {
    let uid = Uid::fresh();
    learned_broadcast(
        uid,
        BaseOp::Embedding { table: uid },
        vec![Weave::all_targets(Datatype::Finite(vocab), Vec::new())],
        vec![Weave::all_targets(Datatype::Real, vec![dim])],
    )
}

/// Row selection finite(V) × [ℝ, V] → ℝ; the embedding internals without
/// the learned table.
pub fn select(vocab: u64) -> Result<Term> {
    let table_axis = Axis::sized("v", vocab);
    base_broadcast(
        BaseOp::Select,
        vec![
            Weave::all_targets(Datatype::Finite(vocab), Vec::new()),
            Weave::all_targets(Datatype::Real, vec![table_axis]),
        ],
        vec![Weave::all_targets(Datatype::Real, Vec::new())],
    )
}

/// Causal mask: out[q, x] = in[q, x] where x ≤ q, a large negative sentinel
/// elsewhere. The position axis x sits innermost.
pub fn triangular_mask(q: Axis, x: Axis) -> Result<Term> {
    let w = Weave::all_targets(Datatype::Real, vec![x, q]);
    base_broadcast(BaseOp::TriangularMask, vec![w.clone()], vec![w])
}

/// Valid-boundary convolution: an addition reindexing gathers every window,
/// then a learned linear map contracts (channels, kernel) → channels-out.
/// The input positions axis has |x| = |x′| + |k| − 1 when configured.
pub fn convolution(x_out: Axis, k: Axis, c_in: Axis, c_out: Axis) -> Result<Term> {
    let x_size = match (x_out.size, k.size) {
        (Some(a), Some(b)) => Some(a + b - 1),
        _ => None,
    };
    let x_in = Axis::fresh("x", x_size);
    // window gather (c, j, i) ↦ (c, i + j)
    let add = AffineStrideMap::new(
        Shape(vec![c_in.clone(), k.clone(), x_out.clone()]),
        Shape(vec![c_in.clone(), x_in]),
        vec![vec![1, 0], vec![0, 1], vec![0, 1]],
        vec![0, 0],
    )?;
    let gather = reindexing(Datatype::Real, add);

    let uid = Uid::fresh();
    let kernel = BroadcastedOp {
        base: BaseOp::Linear { weight: uid },
        degree: Shape(vec![x_out.clone()]),
        reindexings: vec![AffineStrideMap::identity(Shape(vec![x_out]))],
        input_weaves: vec![Weave::new(
            vec![true, true, false],
            Datatype::Real,
            vec![c_in, k],
        )?],
        output_weaves: vec![Weave::new(vec![true, false], Datatype::Real, vec![c_out])?],
    };
    kernel.validate()?;
    Term::compose(gather, Term::Root { uid, op: RootOp::Broadcast(kernel) })
}

/// Einstein summation from a spec string such as "q h d, x h d -> h q x":
/// a broadcasted multiply over the union of all letters, then summation over
/// the contracted ones. Letters are written outermost-first; fresh axes are
/// minted per distinct letter.
pub fn einsum(spec: &str, dtype: Datatype) -> Result<Term> {
    let (lhs, rhs) = spec
        .split_once("->")
        .ok_or_else(|| Error::Domain(format!("einsum spec '{spec}' lacks '->'")))?;
    let parse_operand = |s: &str| -> Result<Vec<char>> {
        let mut letters = Vec::new();
        for tok in s.split_whitespace() {
            let mut chars = tok.chars();
            let c = chars.next().unwrap();
            if chars.next().is_some() || !c.is_ascii_lowercase() {
                return Err(Error::Domain(format!(
                    "einsum axis '{tok}' is not a single lowercase letter"
                )));
            }
            if letters.contains(&c) {
                return Err(Error::Domain(format!(
                    "einsum operand '{s}' repeats letter '{c}'"
                )));
            }
            letters.push(c);
        }
        // storage order puts the innermost (last written) letter first
        letters.reverse();
        Ok(letters)
    };
    let operands: Vec<Vec<char>> = lhs.split(',').map(parse_operand).collect::<Result<_>>()?;
    if operands.is_empty() || lhs.trim().is_empty() {
        return Err(Error::Domain("einsum needs at least one input operand".into()));
    }
    let output = parse_operand(rhs)?;

    let mut letters: Vec<char> = output.clone();
    for op in &operands {
        for &c in op {
            if !letters.contains(&c) {
                letters.push(c);
            }
        }
    }
    for &c in &output {
        if !operands.iter().any(|op| op.contains(&c)) {
            return Err(Error::Domain(format!(
                "einsum output letter '{c}' appears in no input"
            )));
        }
    }

    let axis_of: Vec<(char, Axis)> =
        letters.iter().map(|&c| (c, Axis::free(&c.to_string()))).collect();
    let axis = |c: char| -> Axis {
        axis_of.iter().find(|(l, _)| *l == c).unwrap().1.clone()
    };
    // degree = output letters (innermost-first) then contracted letters
    let degree = Shape(letters.iter().map(|&c| axis(c)).collect());

    let mut reindexings = Vec::new();
    let mut input_weaves = Vec::new();
    for op in &operands {
        let slots: Vec<usize> = op
            .iter()
            .map(|c| letters.iter().position(|l| l == c).unwrap())
            .collect();
        let r = Remapping::new(slots, letters.len())?;
        reindexings.push(AffineStrideMap::from_remapping(&r, &degree.0)?);
        input_weaves.push(Weave::all_tiled(dtype.clone(), op.len()));
    }
    let multiply = make_broadcast(
        BaseOp::Elementwise(ElemTag::Mul),
        degree.clone(),
        reindexings,
        input_weaves,
        vec![Weave::all_tiled(dtype.clone(), letters.len())],
    )?;

    // contract the surplus letters, outermost slot first
    let mut term = multiply;
    let mut remaining = degree.0;
    while remaining.len() > output.len() {
        let summed = remaining.pop().unwrap();
        let kept = Shape(remaining.clone());
        let mut mask = vec![false; remaining.len()];
        mask.push(true);
        let contract = make_broadcast(
            BaseOp::Sum,
            kept.clone(),
            vec![AffineStrideMap::identity(kept)],
            vec![Weave::new(mask, dtype.clone(), vec![summed])?],
            vec![Weave::all_tiled(dtype.clone(), remaining.len())],
        )?;
        term = Term::compose(term, contract)?;
    }
    Ok(term)
}
