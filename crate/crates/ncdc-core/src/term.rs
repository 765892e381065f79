//! Morphism terms of the array-broadcasted category: roots, composition,
//! products, rearrangements, blocks and elements.
//!
//! Terms are immutable. Associativity is normalized eagerly: nested Composed
//! and Product parts are flattened at construction, so the associativity
//! axioms hold by representation. Identity rearrangements are absorbed by
//! `compose` but kept when constructed explicitly.

use std::collections::HashMap;

use crate::arraybr::{ArrayObject, RootOp};
use crate::error::{Error, Result};
use crate::remapping::Remapping;
use crate::stride::Axis;
use crate::tensor::TensorValue;
use crate::uid::Uid;

/// A finite product of arrays; the empty list is the unit object 𝟙.
pub type ProductObject = Vec<ArrayObject>;

pub fn describe_object(obj: &[ArrayObject]) -> String {
    let parts: Vec<String> = obj.iter().map(ArrayObject::describe).collect();
    format!("({})", parts.join(" × "))
}

#[derive(Clone, Debug, PartialEq)]
pub enum Term {
    Root {
        uid: Uid,
        op: RootOp,
    },
    /// Nonempty; cod of each part meets dom of the next.
    Composed(Vec<Term>),
    Product(Vec<Term>),
    Rearrangement {
        mapping: Remapping,
        dom_family: Vec<ArrayObject>,
    },
    /// Semantically inert grouping.
    Block {
        tag: String,
        repeat: Option<u64>,
        body: Box<Term>,
    },
    /// A morphism 𝟙 → cod picking out concrete tensors.
    Element {
        values: Vec<TensorValue>,
        cod: ProductObject,
    },
}

/// How to rewrite one axis uid during substitution.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Subst {
    SetSize(u64),
    /// Replace the axis wholesale (uid merge); the replacement carries the
    /// surviving uid, name and size.
    Rename(Axis),
}

impl Term {
    pub fn root(op: RootOp) -> Term {
        Term::Root { uid: Uid::fresh(), op }
    }

    pub fn rearrangement(mapping: Remapping, dom_family: Vec<ArrayObject>) -> Result<Term> {
        if mapping.cod_size() != dom_family.len() {
            return Err(Error::Domain(format!(
                "remapping expects {} source arrays, family has {}",
                mapping.cod_size(),
                dom_family.len()
            )));
        }
        Ok(Term::Rearrangement { mapping, dom_family })
    }

    pub fn identity(objects: ProductObject) -> Term {
        Term::Rearrangement { mapping: Remapping::identity(objects.len()), dom_family: objects }
    }

    pub fn block(tag: &str, repeat: Option<u64>, body: Term) -> Term {
        Term::Block { tag: tag.to_string(), repeat, body: Box::new(body) }
    }

    pub fn element(values: Vec<TensorValue>, cod: ProductObject) -> Result<Term> {
        if values.len() != cod.len() {
            return Err(Error::Domain(format!(
                "{} tensors for a {}-array codomain",
                values.len(),
                cod.len()
            )));
        }
        for (v, o) in values.iter().zip(&cod) {
            v.matches(o)?;
        }
        Ok(Term::Element { values, cod })
    }

    pub fn is_identity(&self) -> bool {
        match self {
            Term::Rearrangement { mapping, .. } => mapping.is_identity(),
            _ => false,
        }
    }

    pub fn dom(&self) -> Result<ProductObject> {
        match self {
            Term::Root { op, .. } => op.dom(),
            Term::Composed(parts) => parts[0].dom(),
            Term::Product(parts) => {
                let mut out = Vec::new();
                for p in parts {
                    out.extend(p.dom()?);
                }
                Ok(out)
            }
            Term::Rearrangement { dom_family, .. } => Ok(dom_family.clone()),
            Term::Block { body, .. } => body.dom(),
            Term::Element { .. } => Ok(Vec::new()),
        }
    }

    pub fn cod(&self) -> Result<ProductObject> {
        match self {
            Term::Root { op, .. } => op.cod(),
            Term::Composed(parts) => parts.last().unwrap().cod(),
            Term::Product(parts) => {
                let mut out = Vec::new();
                for p in parts {
                    out.extend(p.cod()?);
                }
                Ok(out)
            }
            Term::Rearrangement { mapping, dom_family } => Ok(mapping
                .targets()
                .iter()
                .map(|&t| dom_family[t].clone())
                .collect()),
            Term::Block { body, .. } => body.cod(),
            Term::Element { cod, .. } => Ok(cod.clone()),
        }
    }

    /// Diagrammatic composition f;g. Flattens nested compositions and drops
    /// identity rearrangements.
    pub fn compose(f: Term, g: Term) -> Result<Term> {
        let cod_f = f.cod()?;
        let dom_g = g.dom()?;
        check_interfaces(&cod_f, &dom_g)?;
        if f.is_identity() {
            return Ok(g);
        }
        if g.is_identity() {
            return Ok(f);
        }
        let mut parts = Vec::new();
        for t in [f, g] {
            match t {
                Term::Composed(inner) => parts.extend(inner),
                other => parts.push(other),
            }
        }
        Ok(Term::Composed(parts))
    }

    pub fn compose_all(terms: Vec<Term>) -> Result<Term> {
        let mut it = terms.into_iter();
        let first = it
            .next()
            .ok_or_else(|| Error::Composition("cannot compose an empty chain".into()))?;
        it.try_fold(first, Term::compose)
    }

    /// Product of morphisms; nested products flatten, the empty product is
    /// the identity on 𝟙.
    pub fn product(terms: Vec<Term>) -> Term {
        let mut parts = Vec::new();
        for t in terms {
            match t {
                Term::Product(inner) => parts.extend(inner),
                other => parts.push(other),
            }
        }
        match parts.len() {
            0 => Term::identity(Vec::new()),
            1 => parts.pop().unwrap(),
            _ => Term::Product(parts),
        }
    }

    /// Copy the shared domain and feed one copy to each part:
    /// δ ; Π parts. All parts must share the same dom.
    pub fn fanout(parts: Vec<Term>) -> Result<Term> {
        let first_dom = parts
            .first()
            .ok_or_else(|| Error::Domain("fanout of an empty family".into()))?
            .dom()?;
        for p in &parts[1..] {
            let d = p.dom()?;
            if d.len() != first_dom.len()
                || d.iter().zip(&first_dom).any(|(a, b)| !a.compatible(b))
            {
                return Err(Error::Domain(
                    "fanout parts do not share a common domain".into(),
                ));
            }
        }
        let n = first_dom.len();
        // copy the whole domain once per branch: δ^k flattened over the slots
        let per_slot = Remapping::copy(parts.len()).flatten(&[n])?;
        let copy = Term::rearrangement(per_slot, first_dom)?;
        Term::compose(copy, Term::product(parts))
    }

    /// Every axis that still lacks a size, in first-appearance order over a
    /// left-to-right, outside-in traversal.
    pub fn free_axes(&self) -> Vec<Axis> {
        let mut seen = Vec::new();
        self.visit_axes(&mut |a| {
            if a.size.is_none() && !seen.iter().any(|s: &Axis| s.uid == a.uid) {
                seen.push(a.clone());
            }
        });
        seen
    }

    /// All axis uids in the term (configured or not), first-appearance order.
    pub fn all_axes(&self) -> Vec<Axis> {
        let mut seen = Vec::new();
        self.visit_axes(&mut |a| {
            if !seen.iter().any(|s: &Axis| s.uid == a.uid) {
                seen.push(a.clone());
            }
        });
        seen
    }

    fn visit_axes(&self, f: &mut impl FnMut(&Axis)) {
        let visit_obj = |obj: &ArrayObject, f: &mut dyn FnMut(&Axis)| {
            for a in &obj.shape.0 {
                f(a);
            }
        };
        match self {
            Term::Root { op, .. } => match op {
                RootOp::Reindexing { map, .. } => {
                    // dom of the term first (cod of the stride map)
                    for a in map.cod.0.iter().chain(map.dom.0.iter()) {
                        f(a);
                    }
                }
                RootOp::Broadcast(b) => {
                    for (w, r) in b.input_weaves.iter().zip(&b.reindexings) {
                        if let Ok(shape) = w.arranged(&r.cod.0) {
                            for a in &shape.0 {
                                f(a);
                            }
                        }
                    }
                    for a in &b.degree.0 {
                        f(a);
                    }
                    for w in &b.output_weaves {
                        for a in &w.targets {
                            f(a);
                        }
                    }
                }
            },
            Term::Composed(parts) | Term::Product(parts) => {
                for p in parts {
                    p.visit_axes(f);
                }
            }
            Term::Rearrangement { dom_family, .. } => {
                for o in dom_family {
                    visit_obj(o, f);
                }
            }
            Term::Block { body, .. } => body.visit_axes(f),
            Term::Element { cod, .. } => {
                for o in cod {
                    visit_obj(o, f);
                }
            }
        }
    }

    /// Applies uid merges and size assignments everywhere. Keys must occur in
    /// the term; assigning a size to an axis already configured differently
    /// is an error.
    pub fn substitute(&self, assignment: &HashMap<Uid, Subst>) -> Result<Term> {
        let present = self.all_axes();
        for key in assignment.keys() {
            if !present.iter().any(|a| a.uid == *key) {
                return Err(Error::Substitution(format!("uid {key} does not occur in the term")));
            }
        }
        self.rewrite_axes(&mut |a| {
            match assignment.get(&a.uid) {
                None => Ok(a.clone()),
                Some(Subst::SetSize(n)) => {
                    if let Some(old) = a.size {
                        if old != *n {
                            return Err(Error::Substitution(format!(
                                "axis {} already has size {old}, cannot set {n}",
                                a.name
                            )));
                        }
                    }
                    Ok(Axis { uid: a.uid, name: a.name.clone(), size: Some(*n) })
                }
                Some(Subst::Rename(to)) => Ok(to.clone()),
            }
        })
    }

    pub fn rewrite_axes(&self, f: &mut impl FnMut(&Axis) -> Result<Axis>) -> Result<Term> {
        let map_obj = |obj: &ArrayObject, f: &mut dyn FnMut(&Axis) -> Result<Axis>| -> Result<ArrayObject> {
            let axes: Result<Vec<Axis>> = obj.shape.0.iter().map(|a| f(a)).collect();
            Ok(ArrayObject { dtype: obj.dtype.clone(), shape: crate::stride::Shape(axes?) })
        };
        let map_shape = |s: &crate::stride::Shape, f: &mut dyn FnMut(&Axis) -> Result<Axis>| -> Result<crate::stride::Shape> {
            let axes: Result<Vec<Axis>> = s.0.iter().map(|a| f(a)).collect();
            Ok(crate::stride::Shape(axes?))
        };
        Ok(match self {
            Term::Root { uid, op } => {
                let op = match op {
                    RootOp::Reindexing { dtype, map } => RootOp::Reindexing {
                        dtype: dtype.clone(),
                        map: crate::stride::AffineStrideMap {
                            dom: map_shape(&map.dom, f)?,
                            cod: map_shape(&map.cod, f)?,
                            lambda: map.lambda.clone(),
                            offset: map.offset.clone(),
                        },
                    },
                    RootOp::Broadcast(b) => {
                        let mut b2 = b.clone();
                        b2.degree = map_shape(&b.degree, f)?;
                        for r in &mut b2.reindexings {
                            r.dom = map_shape(&r.dom, f)?;
                            r.cod = map_shape(&r.cod, f)?;
                        }
                        for w in b2.input_weaves.iter_mut().chain(b2.output_weaves.iter_mut()) {
                            w.targets = w.targets.iter().map(|a| f(a)).collect::<Result<_>>()?;
                        }
                        RootOp::Broadcast(b2)
                    }
                };
                Term::Root { uid: *uid, op }
            }
            Term::Composed(parts) => {
                Term::Composed(parts.iter().map(|p| p.rewrite_axes(f)).collect::<Result<_>>()?)
            }
            Term::Product(parts) => {
                Term::Product(parts.iter().map(|p| p.rewrite_axes(f)).collect::<Result<_>>()?)
            }
            Term::Rearrangement { mapping, dom_family } => Term::Rearrangement {
                mapping: mapping.clone(),
                dom_family: dom_family.iter().map(|o| map_obj(o, f)).collect::<Result<_>>()?,
            },
            Term::Block { tag, repeat, body } => Term::Block {
                tag: tag.clone(),
                repeat: *repeat,
                body: Box::new(body.rewrite_axes(f)?),
            },
            Term::Element { values, cod } => Term::Element {
                values: values.clone(),
                cod: cod.iter().map(|o| map_obj(o, f)).collect::<Result<_>>()?,
            },
        })
    }

    /// Checks every structural invariant recursively; the empty list means
    /// the term is well-formed.
    pub fn validate(&self) -> Vec<String> {
        let mut violations = Vec::new();
        self.validate_at("term", &mut violations);
        // global consistency: one uid, one size
        let mut sizes: HashMap<Uid, (String, Option<u64>)> = HashMap::new();
        self.visit_axes(&mut |a| match sizes.get(&a.uid) {
            None => {
                sizes.insert(a.uid, (a.name.clone(), a.size));
            }
            Some((name, s)) => {
                if *s != a.size {
                    violations.push(format!(
                        "axis {name} ({}) occurs with sizes {:?} and {:?}",
                        a.uid, s, a.size
                    ));
                    sizes.insert(a.uid, (a.name.clone(), a.size));
                }
            }
        });
        violations.sort();
        violations.dedup();
        violations
    }

    fn validate_at(&self, path: &str, out: &mut Vec<String>) {
        match self {
            Term::Root { op, .. } => {
                if let Err(e) = op.validate() {
                    out.push(format!("{path}: {e}"));
                }
            }
            Term::Composed(parts) => {
                if parts.is_empty() {
                    out.push(format!("{path}: empty composition"));
                }
                for (i, pair) in parts.windows(2).enumerate() {
                    match (pair[0].cod(), pair[1].dom()) {
                        (Ok(c), Ok(d)) => {
                            if let Err(e) = check_interfaces(&c, &d) {
                                out.push(format!("{path}: junction {i}: {e}"));
                            }
                        }
                        (Err(e), _) | (_, Err(e)) => out.push(format!("{path}: junction {i}: {e}")),
                    }
                }
                for (i, p) in parts.iter().enumerate() {
                    p.validate_at(&format!("{path}.composed[{i}]"), out);
                }
            }
            Term::Product(parts) => {
                for (i, p) in parts.iter().enumerate() {
                    p.validate_at(&format!("{path}.product[{i}]"), out);
                }
            }
            Term::Rearrangement { mapping, dom_family } => {
                if mapping.cod_size() != dom_family.len() {
                    out.push(format!(
                        "{path}: remapping over {} arrays applied to {}",
                        mapping.cod_size(),
                        dom_family.len()
                    ));
                }
            }
            Term::Block { body, .. } => body.validate_at(&format!("{path}.block"), out),
            Term::Element { values, cod } => {
                if values.len() != cod.len() {
                    out.push(format!("{path}: element arity mismatch"));
                }
                for (i, (v, o)) in values.iter().zip(cod).enumerate() {
                    if o.shape.sizes().is_ok() {
                        if let Err(e) = v.matches(o) {
                            out.push(format!("{path}.element[{i}]: {e}"));
                        }
                    }
                }
            }
        }
    }
}

pub fn check_interfaces(cod: &[ArrayObject], dom: &[ArrayObject]) -> Result<()> {
    if cod.len() != dom.len() {
        return Err(Error::Composition(format!(
            "interface sizes differ: {} vs {} arrays",
            cod.len(),
            dom.len()
        )));
    }
    for (i, (c, d)) in cod.iter().zip(dom).enumerate() {
        if !c.compatible(d) {
            return Err(Error::Composition(format!(
                "interfaces differ at slot {i}: {} vs {}",
                c.describe(),
                d.describe()
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arraybr::Datatype;
    use crate::stride::Shape;

    fn arr(name: &str, size: u64) -> ArrayObject {
        ArrayObject::new(Datatype::Real, vec![Axis::sized(name, size)])
    }

    #[test]
    fn rearrangement_dom_cod() {
        let (a, b) = (arr("a", 2), arr("b", 3));
        let swap = Term::rearrangement(Remapping::new(vec![1, 0], 2).unwrap(), vec![a.clone(), b.clone()])
            .unwrap();
        assert_eq!(swap.dom().unwrap(), vec![a.clone(), b.clone()]);
        assert_eq!(swap.cod().unwrap(), vec![b, a]);

        let id = Term::identity(vec![arr("a", 2)]);
        assert_eq!(id.dom().unwrap(), id.cod().unwrap());

        assert_eq!(Term::product(vec![]).dom().unwrap(), Vec::new());
    }

    #[test]
    fn compose_flattens_and_absorbs_identity() {
        let a = arr("a", 2);
        let copy = Term::rearrangement(Remapping::copy(2), vec![a.clone()]).unwrap();
        let id = Term::identity(vec![a.clone()]);
        let f = Term::compose(id.clone(), copy.clone()).unwrap();
        assert_eq!(f, copy);

        let two = Term::rearrangement(
            Remapping::new(vec![1, 0], 2).unwrap(),
            copy.cod().unwrap(),
        )
        .unwrap();
        let g = Term::compose(copy.clone(), two.clone()).unwrap();
        let h = Term::compose(g.clone(), Term::identity(two.cod().unwrap())).unwrap();
        assert_eq!(g, h);
        // associativity by flattening
        let left = Term::compose(
            Term::compose(copy.clone(), two.clone()).unwrap(),
            Term::identity(two.cod().unwrap()),
        )
        .unwrap();
        let right = Term::compose(
            copy,
            Term::compose(two.clone(), Term::identity(two.cod().unwrap())).unwrap(),
        )
        .unwrap();
        assert_eq!(left, right);
    }

    #[test]
    fn compose_mismatch_names_slot() {
        let (a, b) = (arr("a", 2), arr("b", 3));
        let f = Term::identity(vec![a.clone(), b.clone()]);
        let g = Term::identity(vec![a.clone(), arr("c", 3)]);
        let err = Term::compose(f.clone(), g).unwrap_err().to_string();
        assert!(err.contains("slot 1"), "{err}");
        let g2 = Term::identity(vec![arr("x", 2), b]);
        let err2 = Term::compose(f, g2).unwrap_err().to_string();
        assert!(err2.contains("slot 0"), "{err2}");
    }

    #[test]
    fn product_flattens() {
        let f = Term::identity(vec![arr("a", 2)]);
        let g = Term::identity(vec![arr("b", 2)]);
        let h = Term::identity(vec![arr("c", 2)]);
        assert_eq!(
            Term::product(vec![f.clone(), Term::product(vec![g.clone(), h.clone()])]),
            Term::product(vec![f.clone(), g.clone(), h.clone()])
        );
        let p = Term::product(vec![f.clone(), g.clone()]);
        let mut want = f.dom().unwrap();
        want.extend(g.dom().unwrap());
        assert_eq!(p.dom().unwrap(), want);
        assert_eq!(Term::product(vec![f.clone()]), f);
    }

    #[test]
    fn free_axes_dedup_and_substitute() {
        let free = Axis::free("q");
        let obj = ArrayObject::new(Datatype::Real, vec![free.clone(), free.clone()]);
        let t = Term::identity(vec![obj]);
        let frees = t.free_axes();
        assert_eq!(frees.len(), 1);
        assert_eq!(frees[0].uid, free.uid);

        let mut m = HashMap::new();
        m.insert(free.uid, Subst::SetSize(4));
        let t2 = t.substitute(&m).unwrap();
        assert!(t2.free_axes().is_empty());
        assert!(t2.validate().is_empty());

        let mut bad = HashMap::new();
        bad.insert(Uid::fresh(), Subst::SetSize(1));
        assert!(t.substitute(&bad).is_err());
        assert_eq!(t.substitute(&HashMap::new()).unwrap(), t);
    }

    #[test]
    fn merge_reduces_free_count() {
        let y = Axis::free("y");
        let z = Axis::free("z");
        let x = Axis::free("x");
        let t = Term::identity(vec![ArrayObject::new(
            Datatype::Real,
            vec![x.clone(), y.clone(), z.clone()],
        )]);
        assert_eq!(t.free_axes().len(), 3);
        let mut m = HashMap::new();
        m.insert(y.uid, Subst::Rename(z.clone()));
        let t2 = t.substitute(&m).unwrap();
        assert_eq!(t2.free_axes().len(), 2);
    }

    #[test]
    fn validate_flags_bad_junction() {
        let f = Term::identity(vec![arr("a", 2)]);
        let g = Term::identity(vec![arr("b", 2)]);
        let bad = Term::Composed(vec![f, g]);
        let v = bad.validate();
        assert!(v.iter().any(|m| m.contains("junction 0")), "{v:?}");
    }

    #[test]
    fn validate_flags_inconsistent_sizes() {
        let a = Axis::sized("a", 2);
        let mut a3 = a.clone();
        a3.size = Some(3);
        let t = Term::identity(vec![
            ArrayObject::new(Datatype::Real, vec![a]),
            ArrayObject::new(Datatype::Real, vec![a3]),
        ]);
        assert!(!t.validate().is_empty());
    }

    #[test]
    fn shape_unit_note() {
        assert_eq!(Shape::unit().rank(), 0);
    }
}
