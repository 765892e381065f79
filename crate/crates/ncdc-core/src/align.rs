//! Autoaligning composition: pads mismatched tuple lengths with identities,
//! unifies axis uids positionally from the innermost slot outward, batch
//! lifts the deficient side over surplus axes, then composes. Also the
//! configuration step that closes a term's free sizes.

use std::collections::HashMap;

use crate::arraybr::ArrayObject;
use crate::error::{Error, Result};
use crate::ops;
use crate::stride::{Axis, Shape};
use crate::term::{Subst, Term};
use crate::uid::Uid;

/// Sizes for free axes, keyed by uid.
pub type Configuration = HashMap<Uid, u64>;

#[derive(Clone, Copy, PartialEq, Eq)]
enum Side {
    None,
    First,
    Second,
}

pub fn compose_aligned(f: &Term, g: &Term) -> Result<Term> {
    let fc = f.cod()?;
    let gd = g.dom()?;

    // 1. pad the side with fewer tuple segments, identities at the bottom
    let mut f2 = f.clone();
    let mut g2 = g.clone();
    if fc.len() < gd.len() {
        let extra: Vec<ArrayObject> = gd[fc.len()..].to_vec();
        f2 = Term::product(vec![f2, Term::identity(extra)]);
    } else if gd.len() < fc.len() {
        let extra: Vec<ArrayObject> = fc[gd.len()..].to_vec();
        g2 = Term::product(vec![g2, Term::identity(extra)]);
    }

    // 2. unify uids slot by slot, anchored at the innermost axis
    let fc = f2.cod()?;
    let gd = g2.dom()?;
    let mut subst: HashMap<Uid, Subst> = HashMap::new();
    for (seg, (a, b)) in fc.iter().zip(&gd).enumerate() {
        if a.dtype != b.dtype {
            return Err(Error::Alignment(format!(
                "segment {seg}: datatype {} meets {}",
                a.dtype.describe(),
                b.dtype.describe()
            )));
        }
        let common = a.shape.rank().min(b.shape.rank());
        for slot in 0..common {
            let fa = &a.shape.0[slot];
            let ga = &b.shape.0[slot];
            if fa.uid == ga.uid {
                continue;
            }
            let size = match (fa.size, ga.size) {
                (Some(x), Some(y)) if x != y => {
                    return Err(Error::Alignment(format!(
                        "segment {seg} slot {slot}: axis {} has size {x} but {} has size {y}",
                        fa.name, ga.name
                    )))
                }
                (x, y) => x.or(y),
            };
            let merged = Axis { uid: fa.uid, name: fa.name.clone(), size };
            add_subst(&mut subst, ga.uid, Subst::Rename(merged))?;
            if fa.size.is_none() {
                if let Some(n) = size {
                    add_subst(&mut subst, fa.uid, Subst::SetSize(n))?;
                }
            }
        }
    }
    let f2 = apply_where_present(&f2, &subst)?;
    let g2 = apply_where_present(&g2, &subst)?;

    // 3. batch lift over surplus outer axes; every segment must agree on
    //    the surplus side and axis list, otherwise the caller has to lift
    //    explicitly
    let fc = f2.cod()?;
    let gd = g2.dom()?;
    let mut side = Side::None;
    let mut surplus: Vec<Axis> = Vec::new();
    for (seg, (a, b)) in fc.iter().zip(&gd).enumerate() {
        let (ra, rb) = (a.shape.rank(), b.shape.rank());
        let common = ra.min(rb);
        for slot in 0..common {
            if a.shape.0[slot].uid != b.shape.0[slot].uid {
                return Err(Error::Alignment(format!(
                    "segment {seg} slot {slot}: axes {} and {} align to different \
                     axes elsewhere in the tuple",
                    a.shape.0[slot].name, b.shape.0[slot].name
                )));
            }
        }
        let (seg_side, extra) = if ra > rb {
            (Side::First, a.shape.0[common..].to_vec())
        } else if rb > ra {
            (Side::Second, b.shape.0[common..].to_vec())
        } else {
            continue;
        };
        if side == Side::None {
            side = seg_side;
            surplus = extra;
        } else if side != seg_side || surplus != extra {
            return Err(Error::Alignment(
                "surplus axes differ between tuple segments; apply batch_lift explicitly"
                    .into(),
            ));
        }
    }
    if side != Side::None {
        for (a, b) in fc.iter().zip(&gd) {
            if a.shape.rank() == b.shape.rank() && !surplus.is_empty() {
                return Err(Error::Alignment(
                    "some segments need batch lifting and some do not; apply batch_lift \
                     explicitly"
                        .into(),
                ));
            }
        }
    }
    let (f2, g2) = match side {
        Side::None => (f2, g2),
        Side::First => {
            let lifted = ops::batch_lift(&g2, &Shape(surplus))?;
            (f2, lifted)
        }
        Side::Second => {
            let lifted = ops::batch_lift(&f2, &Shape(surplus))?;
            (lifted, g2)
        }
    };

    Term::compose(f2, g2)
}

fn add_subst(subst: &mut HashMap<Uid, Subst>, key: Uid, value: Subst) -> Result<()> {
    match subst.get(&key) {
        None => {
            subst.insert(key, value);
            Ok(())
        }
        Some(existing) if *existing == value => Ok(()),
        Some(_) => Err(Error::Alignment(format!(
            "axis {key} aligns inconsistently across tuple segments"
        ))),
    }
}

fn apply_where_present(t: &Term, subst: &HashMap<Uid, Subst>) -> Result<Term> {
    let present = t.all_axes();
    let filtered: HashMap<Uid, Subst> = subst
        .iter()
        .filter(|(k, _)| present.iter().any(|a| a.uid == **k))
        .map(|(k, v)| (*k, v.clone()))
        .collect();
    if filtered.is_empty() {
        Ok(t.clone())
    } else {
        t.substitute(&filtered)
    }
}

/// Left-to-right chain of aligned compositions.
pub fn compose_aligned_all(terms: &[Term]) -> Result<Term> {
    let mut it = terms.iter();
    let mut acc = it
        .next()
        .ok_or_else(|| Error::Alignment("aligned composition of an empty chain".into()))?
        .clone();
    for t in it {
        acc = compose_aligned(&acc, t)?;
    }
    Ok(acc)
}

pub fn configure(t: &Term, c: &Configuration) -> Result<Term> {
    if c.is_empty() {
        return Ok(t.clone());
    }
    let free = t.free_axes();
    let mut assignment = HashMap::new();
    for (&uid, &n) in c {
        if n == 0 {
            return Err(Error::Configuration(format!("axis {uid} assigned size 0")));
        }
        if !free.iter().any(|a| a.uid == uid) {
            return Err(Error::Configuration(format!(
                "uid {uid} is not a free axis of the term"
            )));
        }
        assignment.insert(uid, Subst::SetSize(n));
    }
    let out = t.substitute(&assignment)?;
    let violations = out.validate();
    if !violations.is_empty() {
        let joined = violations.join("; ");
        return if joined.contains("capture") {
            Err(Error::Capture(joined))
        } else {
            Err(Error::Configuration(joined))
        };
    }
    Ok(out)
}

/// Configures every free axis whose display name matches, as the CLI's
/// `--set name=n` form does; uids in hex are accepted too.
pub fn configure_by_name(t: &Term, pairs: &[(String, u64)]) -> Result<Term> {
    let free = t.free_axes();
    let mut c = Configuration::new();
    for (name, n) in pairs {
        let mut hit = false;
        for a in &free {
            if a.name == *name || a.uid.to_hex() == *name {
                c.insert(a.uid, *n);
                hit = true;
            }
        }
        if !hit {
            return Err(Error::Configuration(format!(
                "no free axis named {name} in the term"
            )));
        }
    }
    configure(t, &c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arraybr::Datatype;
    use crate::tensor::TensorValue;

    #[test]
    fn identity_on_cod_is_absorbed() {
        let f = ops::softmax(Axis::sized("n", 3)).unwrap();
        let id = Term::identity(f.cod().unwrap());
        let h = compose_aligned(&f, &id).unwrap();
        assert_eq!(h, f);
    }

    #[test]
    fn softmax_aligns_and_lifts() {
        let qk = ops::einsum("q h d, x h d -> h q x", Datatype::Real).unwrap();
        let sm = ops::softmax(Axis::free("n")).unwrap();
        let t = compose_aligned(&qk, &sm).unwrap();
        let free = t.free_axes();
        let mut names: Vec<&str> = free.iter().map(|a| a.name.as_str()).collect();
        names.sort();
        assert_eq!(names, vec!["d", "h", "q", "x"]);
        assert_eq!(t.cod().unwrap(), qk.cod().unwrap());
    }

    #[test]
    fn attention_chain_has_five_free_axes() {
        let qk = ops::einsum("q h d, x h d -> h q x", Datatype::Real).unwrap();
        let mask = ops::triangular_mask(Axis::free("q"), Axis::free("x")).unwrap();
        let sm = ops::softmax(Axis::free("n")).unwrap();
        let sv = ops::einsum("h q x, x h d -> q h d", Datatype::Real).unwrap();
        let t = compose_aligned_all(&[qk, mask, sm, sv]).unwrap();
        assert!(t.validate().is_empty());
        let free = t.free_axes();
        let mut names: Vec<&str> = free.iter().map(|a| a.name.as_str()).collect();
        names.sort();
        assert_eq!(names, vec!["d", "d", "h", "q", "x"]);
        // query and key inputs plus the padded value input
        assert_eq!(t.dom().unwrap().len(), 3);
        assert_eq!(t.cod().unwrap().len(), 1);
    }

    #[test]
    fn fixed_size_conflict_is_refused() {
        let f = ops::softmax(Axis::sized("n", 3)).unwrap();
        let g = ops::softmax(Axis::sized("m", 4)).unwrap();
        assert!(matches!(compose_aligned(&f, &g), Err(Error::Alignment(_))));
    }

    #[test]
    fn two_sided_surplus_is_refused() {
        let a2 = Axis::sized("a", 2);
        let b2 = Axis::sized("b", 2);
        // f: identity on ([a,b], [a]); g: softmax(a) ⊗ softmax-lifted picks
        // surplus on the other segment
        let obj_ab = ArrayObject::new(Datatype::Real, vec![a2.clone(), b2.clone()]);
        let obj_a = ArrayObject::new(Datatype::Real, vec![a2.clone()]);
        let f = Term::identity(vec![obj_ab, obj_a]);
        let g1 = ops::softmax(a2.clone()).unwrap();
        let g2full =
            ops::batch_lift(&ops::softmax(a2.clone()).unwrap(), &Shape(vec![b2])).unwrap();
        let g = Term::product(vec![g1, g2full]);
        assert!(matches!(compose_aligned(&f, &g), Err(Error::Alignment(_))));
    }

    #[test]
    fn configure_closes_and_rejects() {
        let t = ops::einsum("a b, b -> a", Datatype::Real).unwrap();
        let free = t.free_axes();
        assert_eq!(free.len(), 2);
        let mut c = Configuration::new();
        for a in &free {
            c.insert(a.uid, 3);
        }
        let done = configure(&t, &c).unwrap();
        assert!(done.free_axes().is_empty());
        assert!(done.validate().is_empty());

        let bogus = Uid::fresh();
        let mut bad = Configuration::new();
        bad.insert(bogus, 2);
        let err = configure(&t, &bad).unwrap_err();
        assert!(err.to_string().contains(&bogus.to_string()));

        assert_eq!(configure(&t, &Configuration::new()).unwrap(), t);
    }

    #[test]
    fn configure_surfaces_capture() {
        let t = ops::convolution(
            Axis::free("x'"),
            Axis::sized("k", 2),
            Axis::sized("c", 1),
            Axis::sized("c'", 1),
        )
        .unwrap();
        let free = t.free_axes();
        let mut c = Configuration::new();
        for a in &free {
            c.insert(a.uid, 3); // x' = 3 needs |x| ≥ 4
        }
        assert!(matches!(configure(&t, &c), Err(Error::Capture(_))));
        for a in &free {
            c.insert(a.uid, if a.name == "x'" { 3 } else { 4 });
        }
        let ok = configure(&t, &c).unwrap();
        assert!(ok.validate().is_empty());
    }

    #[test]
    fn aligned_composition_evaluates_per_slice() {
        let qk = ops::einsum("q h d, x h d -> h q x", Datatype::Real).unwrap();
        let sm = ops::softmax(Axis::free("n")).unwrap();
        let t = compose_aligned(&qk, &sm).unwrap();
        let free = t.free_axes();
        let mut c = Configuration::new();
        for a in &free {
            c.insert(a.uid, 2);
        }
        let t = configure(&t, &c).unwrap();
        let params = crate::eval::ParamStore::empty(0);
        let mk = |off: f64| {
            TensorValue::from_f64(
                Datatype::Real,
                vec![2, 2, 2],
                (0..8).map(|i| (i as f64) / 3.0 + off).collect(),
            )
            .unwrap()
        };
        let out = crate::eval::eval(&t, &[mk(0.0), mk(0.5)], &params).unwrap();
        let oracle = crate::eval::eval_oracle(&t, &[mk(0.0), mk(0.5)], &params).unwrap();
        assert!(crate::tensor::tensors_close(&out[0], &oracle[0], 1e-9, 1e-12));
        for q in 0..2u64 {
            for h in 0..2u64 {
                let s: f64 = (0..2u64).map(|x| out[0].get_f(&[x, q, h])).sum();
                assert!((s - 1.0).abs() < 1e-9);
            }
        }
    }
}
