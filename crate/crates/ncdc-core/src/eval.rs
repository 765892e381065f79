//! Reference interpreter for fully configured terms, a deterministic
//! parameter store for learned operations, and an independent per-index
//! oracle used to cross-check the interpreter.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;

use crate::arraybr::{BaseOp, BroadcastedOp, Datatype, ElemTag, RootOp, MASK_SENTINEL, RMSNORM_EPSILON};
use crate::error::{Error, Result};
use crate::stride::AffineStrideMap;
use crate::tensor::{Data, TensorValue};
use crate::term::Term;
use crate::uid::Uid;

#[derive(Clone, Debug)]
pub struct ParamStore {
    pub seed: u64,
    tensors: HashMap<Uid, TensorValue>,
}

impl ParamStore {
    pub fn empty(seed: u64) -> ParamStore {
        ParamStore { seed, tensors: HashMap::new() }
    }

    pub fn insert(&mut self, uid: Uid, tensor: TensorValue) {
        self.tensors.insert(uid, tensor);
    }

    pub fn get(&self, uid: Uid) -> Result<&TensorValue> {
        self.tensors
            .get(&uid)
            .ok_or_else(|| Error::Eval(format!("no parameter tensor for learned root {uid}")))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Uid, &TensorValue)> {
        self.tensors.iter()
    }
}

/// One stream per learned root, keyed by (seed, root uid), so stores are
/// identical across runs and platforms and roots never share a stream.
fn param_rng(seed: u64, uid: Uid) -> ChaCha20Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..24].copy_from_slice(&uid.0.to_le_bytes());
    ChaCha20Rng::from_seed(key)
}

/// Draws every learned root's tensor: linear weights uniform in
/// ±1/√fan_in, rmsnorm gains all ones, embedding tables uniform in [−1,1].
pub fn init_params(seed: u64, term: &Term) -> Result<ParamStore> {
    let mut store = ParamStore::empty(seed);
    collect_params(term, seed, &mut store)?;
    Ok(store)
}

fn collect_params(term: &Term, seed: u64, store: &mut ParamStore) -> Result<()> {
    match term {
        Term::Root { uid, op: RootOp::Broadcast(b) } if b.base.is_learned() => {
            let ins = &b.input_weaves[0].targets;
            let outs = &b.output_weaves[0].targets;
            let tensor = match &b.base {
                BaseOp::Linear { .. } => {
                    let mut sizes: Vec<u64> =
                        ins.iter().map(|a| a.size_or_err()).collect::<Result<_>>()?;
                    let fan_in: u64 = sizes.iter().product();
                    for a in outs {
                        sizes.push(a.size_or_err()?);
                    }
                    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
                    let mut rng = param_rng(seed, *uid);
                    let n: u64 = sizes.iter().product();
                    let data = (0..n).map(|_| rng.gen_range(-bound..=bound)).collect();
                    TensorValue::from_f64(Datatype::Real, sizes, data)?
                }
                BaseOp::RmsNorm { .. } => {
                    let n = ins[0].size_or_err()?;
                    TensorValue::from_f64(Datatype::Real, vec![n], vec![1.0; n as usize])?
                }
                BaseOp::Embedding { .. } => {
                    let Datatype::Finite(v) = b.input_weaves[0].dtype else {
                        return Err(Error::Eval("embedding index is not finite(V)".into()));
                    };
                    let m = outs[0].size_or_err()?;
                    let mut rng = param_rng(seed, *uid);
                    let data = (0..m * v).map(|_| rng.gen_range(-1.0..=1.0)).collect();
                    TensorValue::from_f64(Datatype::Real, vec![m, v], data)?
                }
                _ => unreachable!(),
            };
            store.insert(*uid, tensor);
        }
        Term::Root { .. } | Term::Rearrangement { .. } | Term::Element { .. } => {}
        Term::Composed(parts) | Term::Product(parts) => {
            for p in parts {
                collect_params(p, seed, store)?;
            }
        }
        Term::Block { body, .. } => collect_params(body, seed, store)?,
    }
    Ok(())
}

/// Interleaves target and tiled coordinates back into slot order.
fn assemble(mask: &[bool], target: &[u64], tiled: &[u64]) -> Vec<u64> {
    let mut ts = target.iter();
    let mut ps = tiled.iter();
    mask.iter()
        .map(|&b| if b { *ts.next().unwrap() } else { *ps.next().unwrap() })
        .collect()
}

/// Splits a slot-order coordinate into (target, tiled) parts.
fn split(mask: &[bool], coord: &[u64]) -> (Vec<u64>, Vec<u64>) {
    let mut target = Vec::new();
    let mut tiled = Vec::new();
    for (&b, &c) in mask.iter().zip(coord) {
        if b {
            target.push(c);
        } else {
            tiled.push(c);
        }
    }
    (target, tiled)
}

pub fn eval(t: &Term, inputs: &[TensorValue], params: &ParamStore) -> Result<Vec<TensorValue>> {
    let dom = t.dom()?;
    if inputs.len() != dom.len() {
        return Err(Error::Eval(format!(
            "{} input tensors for a {}-array domain",
            inputs.len(),
            dom.len()
        )));
    }
    for (v, o) in inputs.iter().zip(&dom) {
        v.matches(o)?;
    }
    eval_unchecked(t, inputs, params)
}

fn eval_unchecked(t: &Term, inputs: &[TensorValue], params: &ParamStore) -> Result<Vec<TensorValue>> {
    match t {
        Term::Composed(parts) => {
            let mut cur = inputs.to_vec();
            for p in parts {
                cur = eval_unchecked(p, &cur, params)?;
            }
            Ok(cur)
        }
        Term::Product(parts) => {
            let mut out = Vec::new();
            let mut off = 0;
            for p in parts {
                let n = p.dom()?.len();
                out.extend(eval_unchecked(p, &inputs[off..off + n], params)?);
                off += n;
            }
            Ok(out)
        }
        Term::Rearrangement { mapping, .. } => {
            Ok(mapping.targets().iter().map(|&i| inputs[i].clone()).collect())
        }
        Term::Block { body, .. } => eval_unchecked(body, inputs, params),
        Term::Element { values, .. } => Ok(values.clone()),
        Term::Root { op: RootOp::Reindexing { map, .. }, .. } => {
            Ok(vec![gather(&inputs[0], map)?])
        }
        Term::Root { op: RootOp::Broadcast(b), .. } => eval_broadcast(b, inputs, params),
    }
}

/// out[j] = in[η(j)] over the whole codomain of the term (= dom of η).
fn gather(input: &TensorValue, map: &AffineStrideMap) -> Result<TensorValue> {
    let out_sizes = map.dom.sizes()?;
    let mut out = TensorValue::zeros(input.dtype.clone(), out_sizes);
    for coord in map.dom.elements()? {
        let src = map.apply_element(&coord)?;
        match &input.data {
            Data::F64(_) => out.set_f(&coord, input.get_f(&src)),
            Data::I64(_) => out.set_i(&coord, input.get_i(&src)),
        }
    }
    out.dtype = input.dtype.clone();
    Ok(out)
}

fn eval_broadcast(
    b: &BroadcastedOp,
    inputs: &[TensorValue],
    params: &ParamStore,
) -> Result<Vec<TensorValue>> {
    let out_objs = b.output_objects()?;
    let mut outputs: Vec<TensorValue> = out_objs
        .iter()
        .map(|o| Ok(TensorValue::zeros(o.dtype.clone(), o.shape.sizes()?)))
        .collect::<Result<_>>()?;

    let in_target_sizes: Vec<Vec<u64>> = b
        .input_weaves
        .iter()
        .map(|w| w.targets.iter().map(|a| a.size_or_err()).collect())
        .collect::<Result<_>>()?;
    let out_target_sizes: Vec<Vec<u64>> = b
        .output_weaves
        .iter()
        .map(|w| w.targets.iter().map(|a| a.size_or_err()).collect())
        .collect::<Result<_>>()?;

    let run_slice = |p: &Vec<u64>| -> Result<Vec<TensorValue>> {
        // gather each input's target slice at ηᵢ(p)
        let mut slices = Vec::with_capacity(inputs.len());
        for (i, input) in inputs.iter().enumerate() {
            let q = b.reindexings[i].apply_element(p)?;
            let mut slice =
                TensorValue::zeros(input.dtype.clone(), in_target_sizes[i].clone());
            for tc in coords(&in_target_sizes[i]) {
                let full = assemble(&b.input_weaves[i].mask, &tc, &q);
                match &input.data {
                    Data::F64(_) => slice.set_f(&tc, input.get_f(&full)),
                    Data::I64(_) => slice.set_i(&tc, input.get_i(&full)),
                }
            }
            slices.push(slice);
        }
        eval_base(&b.base, &slices, params, &out_objs, &out_target_sizes)
    };

    let degree_elements = b.degree.elements()?;
    let results: Vec<(Vec<u64>, Vec<TensorValue>)> = if degree_elements.len() >= 64 {
        degree_elements
            .into_par_iter()
            .map(|p| run_slice(&p).map(|r| (p, r)))
            .collect::<Result<_>>()?
    } else {
        degree_elements
            .into_iter()
            .map(|p| run_slice(&p).map(|r| (p, r)))
            .collect::<Result<_>>()?
    };

    for (p, slice_outs) in results {
        for (j, so) in slice_outs.iter().enumerate() {
            for tc in coords(&out_target_sizes[j]) {
                let full = assemble(&b.output_weaves[j].mask, &tc, &p);
                match &so.data {
                    Data::F64(_) => outputs[j].set_f(&full, so.get_f(&tc)),
                    Data::I64(_) => outputs[j].set_i(&full, so.get_i(&tc)),
                }
            }
        }
    }
    Ok(outputs)
}

fn coords(sizes: &[u64]) -> Vec<Vec<u64>> {
    let total: u64 = sizes.iter().product();
    (0..total)
        .map(|idx| {
            let mut rest = idx;
            sizes
                .iter()
                .map(|&s| {
                    let c = rest % s;
                    rest /= s;
                    c
                })
                .collect()
        })
        .collect()
}

/// The base operation on whole target slices.
fn eval_base(
    base: &BaseOp,
    ins: &[TensorValue],
    params: &ParamStore,
    out_objs: &[crate::arraybr::ArrayObject],
    out_target_sizes: &[Vec<u64>],
) -> Result<Vec<TensorValue>> {
    match base {
        BaseOp::Identity => Ok(ins.to_vec()),
        BaseOp::Elementwise(tag) => {
            let dtype = out_objs[0].dtype.clone();
            let v = if dtype.is_float() {
                let xs: Vec<f64> = ins.iter().map(|t| t.get_f(&[])).collect();
                let y = match tag {
                    ElemTag::Add => xs.iter().sum(),
                    ElemTag::Mul => xs.iter().product(),
                    ElemTag::Neg => -xs[0],
                };
                TensorValue::from_f64(dtype, vec![], vec![y])?
            } else {
                let xs: Vec<i64> = ins.iter().map(|t| t.get_i(&[])).collect();
                let y = match tag {
                    ElemTag::Add => xs.iter().sum(),
                    ElemTag::Mul => xs.iter().product(),
                    ElemTag::Neg => -xs[0],
                };
                TensorValue::from_i64(dtype, vec![], vec![y])?
            };
            Ok(vec![v])
        }
        BaseOp::Softmax => {
            let n = ins[0].sizes[0];
            let xs: Vec<f64> = (0..n).map(|i| ins[0].get_f(&[i])).collect();
            let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = xs.iter().map(|x| (x - m).exp()).collect();
            let z: f64 = exps.iter().sum();
            Ok(vec![TensorValue::from_f64(
                ins[0].dtype.clone(),
                vec![n],
                exps.iter().map(|e| e / z).collect(),
            )?])
        }
        BaseOp::Sum => {
            let n = ins[0].sizes[0];
            let v = if ins[0].dtype.is_float() {
                TensorValue::from_f64(
                    ins[0].dtype.clone(),
                    vec![],
                    vec![(0..n).map(|i| ins[0].get_f(&[i])).sum()],
                )?
            } else {
                TensorValue::from_i64(
                    ins[0].dtype.clone(),
                    vec![],
                    vec![(0..n).map(|i| ins[0].get_i(&[i])).sum()],
                )?
            };
            Ok(vec![v])
        }
        BaseOp::Linear { weight } => {
            let w = params.get(*weight)?;
            let in_sizes = ins[0].sizes.clone();
            let out_sizes = &out_target_sizes[0];
            let mut out = TensorValue::zeros(Datatype::Real, out_sizes.clone());
            for oc in coords(out_sizes) {
                let mut acc = 0.0;
                for ic in coords(&in_sizes) {
                    let mut wc = ic.clone();
                    wc.extend(&oc);
                    acc += w.get_f(&wc) * ins[0].get_f(&ic);
                }
                out.set_f(&oc, acc);
            }
            out.dtype = out_objs[0].dtype.clone();
            Ok(vec![out])
        }
        BaseOp::RmsNorm { gain } => {
            let g = params.get(*gain)?;
            let n = ins[0].sizes[0];
            let mean_sq =
                (0..n).map(|i| ins[0].get_f(&[i]).powi(2)).sum::<f64>() / n as f64;
            let scale = 1.0 / (mean_sq + RMSNORM_EPSILON).sqrt();
            Ok(vec![TensorValue::from_f64(
                ins[0].dtype.clone(),
                vec![n],
                (0..n).map(|i| g.get_f(&[i]) * ins[0].get_f(&[i]) * scale).collect(),
            )?])
        }
        BaseOp::Embedding { table } => {
            let t = params.get(*table)?;
            let idx = ins[0].get_i(&[]) as u64;
            let m = out_target_sizes[0][0];
            Ok(vec![TensorValue::from_f64(
                out_objs[0].dtype.clone(),
                vec![m],
                (0..m).map(|j| t.get_f(&[j, idx])).collect(),
            )?])
        }
        BaseOp::Select => {
            let idx = ins[0].get_i(&[]) as u64;
            Ok(vec![TensorValue::from_f64(
                out_objs[0].dtype.clone(),
                vec![],
                vec![ins[1].get_f(&[idx])],
            )?])
        }
        BaseOp::TriangularMask => {
            let (nx, nq) = (ins[0].sizes[0], ins[0].sizes[1]);
            let mut out = TensorValue::zeros(ins[0].dtype.clone(), vec![nx, nq]);
            for q in 0..nq {
                for x in 0..nx {
                    let v = if x <= q { ins[0].get_f(&[x, q]) } else { MASK_SENTINEL };
                    out.set_f(&[x, q], v);
                }
            }
            out.dtype = ins[0].dtype.clone();
            Ok(vec![out])
        }
    }
}

/// Brute-force reference: computes every output scalar separately, walking
/// the defining equations index by index. Shares no slicing machinery with
/// `eval`; broadcasts and reindexings are resolved per scalar through
/// fetch closures.
pub fn eval_oracle(t: &Term, inputs: &[TensorValue], params: &ParamStore) -> Result<Vec<TensorValue>> {
    let dom = t.dom()?;
    if inputs.len() != dom.len() {
        return Err(Error::Eval("input arity mismatch".into()));
    }
    for (v, o) in inputs.iter().zip(&dom) {
        v.matches(o)?;
    }
    oracle_unchecked(t, inputs, params)
}

fn oracle_unchecked(t: &Term, inputs: &[TensorValue], params: &ParamStore) -> Result<Vec<TensorValue>> {
    match t {
        Term::Composed(parts) => {
            let mut cur = inputs.to_vec();
            for p in parts {
                cur = oracle_unchecked(p, &cur, params)?;
            }
            Ok(cur)
        }
        Term::Product(parts) => {
            let mut out = Vec::new();
            let mut off = 0;
            for p in parts {
                let n = p.dom()?.len();
                out.extend(oracle_unchecked(p, &inputs[off..off + n], params)?);
                off += n;
            }
            Ok(out)
        }
        Term::Rearrangement { mapping, .. } => {
            Ok(mapping.targets().iter().map(|&i| inputs[i].clone()).collect())
        }
        Term::Block { body, .. } => oracle_unchecked(body, inputs, params),
        Term::Element { values, .. } => Ok(values.clone()),
        Term::Root { op: RootOp::Reindexing { map, .. }, .. } => {
            let sizes = map.dom.sizes()?;
            let mut out = TensorValue::zeros(inputs[0].dtype.clone(), sizes.clone());
            out.dtype = inputs[0].dtype.clone();
            for c in coords(&sizes) {
                let s = map.apply_element(&c)?;
                if inputs[0].dtype.is_float() {
                    out.set_f(&c, inputs[0].get_f(&s));
                } else {
                    out.set_i(&c, inputs[0].get_i(&s));
                }
            }
            Ok(vec![out])
        }
        Term::Root { op: RootOp::Broadcast(b), .. } => oracle_broadcast(b, inputs, params),
    }
}

fn oracle_broadcast(
    b: &BroadcastedOp,
    inputs: &[TensorValue],
    params: &ParamStore,
) -> Result<Vec<TensorValue>> {
    let out_objs = b.output_objects()?;
    let mut outputs = Vec::with_capacity(out_objs.len());
    for (j, obj) in out_objs.iter().enumerate() {
        let sizes = obj.shape.sizes()?;
        let mut out = TensorValue::zeros(obj.dtype.clone(), sizes.clone());
        out.dtype = obj.dtype.clone();
        for c in coords(&sizes) {
            let (target, p) = split(&b.output_weaves[j].mask, &c);
            // scalar fetch from input i at base-target coordinate bc
            let fetch_f = |i: usize, bc: &[u64]| -> Result<f64> {
                let q = b.reindexings[i].apply_element(&p)?;
                Ok(inputs[i].get_f(&assemble(&b.input_weaves[i].mask, bc, &q)))
            };
            let fetch_i = |i: usize, bc: &[u64]| -> Result<i64> {
                let q = b.reindexings[i].apply_element(&p)?;
                Ok(inputs[i].get_i(&assemble(&b.input_weaves[i].mask, bc, &q)))
            };
            if obj.dtype.is_float() {
                out.set_f(&c, oracle_scalar_f(b, j, &target, &fetch_f, &fetch_i, params)?);
            } else {
                out.set_i(&c, oracle_scalar_i(b, j, &target, &fetch_i)?);
            }
        }
        outputs.push(out);
    }
    Ok(outputs)
}

fn axis_len(b: &BroadcastedOp, input: usize, slot: usize) -> Result<u64> {
    b.input_weaves[input].targets[slot].size_or_err()
}

fn oracle_scalar_f(
    b: &BroadcastedOp,
    out_idx: usize,
    target: &[u64],
    fetch_f: &dyn Fn(usize, &[u64]) -> Result<f64>,
    fetch_i: &dyn Fn(usize, &[u64]) -> Result<i64>,
    params: &ParamStore,
) -> Result<f64> {
    match &b.base {
        BaseOp::Identity => fetch_f(out_idx, target),
        BaseOp::Elementwise(tag) => {
            let mut acc = match tag {
                ElemTag::Add => 0.0,
                ElemTag::Mul => 1.0,
                ElemTag::Neg => return Ok(-fetch_f(0, &[])?),
            };
            for i in 0..b.input_weaves.len() {
                let x = fetch_f(i, &[])?;
                match tag {
                    ElemTag::Add => acc += x,
                    ElemTag::Mul => acc *= x,
                    ElemTag::Neg => unreachable!(),
                }
            }
            Ok(acc)
        }
        BaseOp::Softmax => {
            let n = axis_len(b, 0, 0)?;
            let mut m = f64::NEG_INFINITY;
            for i in 0..n {
                m = m.max(fetch_f(0, &[i])?);
            }
            let mut z = 0.0;
            for i in 0..n {
                z += (fetch_f(0, &[i])? - m).exp();
            }
            Ok((fetch_f(0, target)? - m).exp() / z)
        }
        BaseOp::Sum => {
            let n = axis_len(b, 0, 0)?;
            let mut acc = 0.0;
            for i in 0..n {
                acc += fetch_f(0, &[i])?;
            }
            Ok(acc)
        }
        BaseOp::Linear { weight } => {
            let w = params.get(*weight)?;
            let in_sizes: Vec<u64> = b.input_weaves[0]
                .targets
                .iter()
                .map(|a| a.size_or_err())
                .collect::<Result<_>>()?;
            let mut acc = 0.0;
            for ic in coords(&in_sizes) {
                let mut wc = ic.clone();
                wc.extend(target);
                acc += w.get_f(&wc) * fetch_f(0, &ic)?;
            }
            Ok(acc)
        }
        BaseOp::RmsNorm { gain } => {
            let g = params.get(*gain)?;
            let n = axis_len(b, 0, 0)?;
            let mut mean_sq = 0.0;
            for i in 0..n {
                mean_sq += fetch_f(0, &[i])?.powi(2);
            }
            mean_sq /= n as f64;
            Ok(g.get_f(target) * fetch_f(0, target)? / (mean_sq + RMSNORM_EPSILON).sqrt())
        }
        BaseOp::Embedding { table } => {
            let t = params.get(*table)?;
            let idx = fetch_i(0, &[])? as u64;
            Ok(t.get_f(&[target[0], idx]))
        }
        BaseOp::Select => {
            let idx = fetch_i(0, &[])? as u64;
            fetch_f(1, &[idx])
        }
        BaseOp::TriangularMask => {
            if target[0] <= target[1] {
                fetch_f(0, target)
            } else {
                Ok(MASK_SENTINEL)
            }
        }
    }
}

fn oracle_scalar_i(
    b: &BroadcastedOp,
    out_idx: usize,
    target: &[u64],
    fetch_i: &dyn Fn(usize, &[u64]) -> Result<i64>,
) -> Result<i64> {
    match &b.base {
        BaseOp::Identity => fetch_i(out_idx, target),
        BaseOp::Elementwise(tag) => {
            let mut acc = match tag {
                ElemTag::Add => 0,
                ElemTag::Mul => 1,
                ElemTag::Neg => return Ok(-fetch_i(0, &[])?),
            };
            for i in 0..b.input_weaves.len() {
                let x = fetch_i(i, &[])?;
                match tag {
                    ElemTag::Add => acc += x,
                    ElemTag::Mul => acc *= x,
                    ElemTag::Neg => unreachable!(),
                }
            }
            Ok(acc)
        }
        BaseOp::Sum => {
            let n = axis_len(b, 0, 0)?;
            let mut acc = 0;
            for i in 0..n {
                acc += fetch_i(0, &[i])?;
            }
            Ok(acc)
        }
        other => Err(Error::Eval(format!(
            "{} cannot produce an integer output",
            other.name()
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ops;
    use crate::remapping::Remapping;
    use crate::stride::{Axis, Shape};
    use crate::tensor::tensors_close;

    fn p0() -> ParamStore {
        ParamStore::empty(0)
    }

    fn real(sizes: Vec<u64>, data: Vec<f64>) -> TensorValue {
        TensorValue::from_f64(Datatype::Real, sizes, data).unwrap()
    }

    #[test]
    fn diagonalization() {
        // x[i,j,k] = 100i + 10j + k over (2,2,3) → y[p,k] = 110p + k
        // storage is innermost-first, so the shape is (k, j, i) in slot order:
        // slot order here follows the map's axes
        let p = Axis::sized("p", 2);
        let k = Axis::sized("k", 3);
        let diag = AffineStrideMap::new(
            Shape(vec![k.clone(), p.clone()]),
            Shape(vec![k.clone(), Axis::sized("i", 2), Axis::sized("j", 2)]),
            vec![vec![1, 0, 0], vec![0, 1, 1]],
            vec![0, 0, 0],
        )
        .unwrap();
        let t = ops::reindexing(Datatype::Real, diag);
        let mut x = TensorValue::zeros(Datatype::Real, vec![3, 2, 2]);
        for i in 0..2u64 {
            for j in 0..2u64 {
                for kk in 0..3u64 {
                    x.set_f(&[kk, i, j], (100 * i + 10 * j + kk) as f64);
                }
            }
        }
        let y = eval(&t, &[x.clone()], &p0()).unwrap();
        for pp in 0..2u64 {
            for kk in 0..3u64 {
                assert_eq!(y[0].get_f(&[kk, pp]), (110 * pp + kk) as f64);
            }
        }
        let o = eval_oracle(&t, &[x], &p0()).unwrap();
        assert_eq!(y, o);
    }

    #[test]
    fn repetition_repeats() {
        let a = Axis::sized("a", 2);
        let obj = crate::arraybr::ArrayObject::new(Datatype::Real, vec![a]);
        let t = ops::repetition(vec![obj], &Shape(vec![Axis::sized("p", 3)])).unwrap();
        let x = real(vec![2], vec![5.0, 6.0]);
        let y = eval(&t, &[x.clone()], &p0()).unwrap();
        assert_eq!(y[0].sizes, vec![2, 3]);
        for p in 0..3 {
            assert_eq!(y[0].get_f(&[0, p]), 5.0);
            assert_eq!(y[0].get_f(&[1, p]), 6.0);
        }
        assert_eq!(eval_oracle(&t, &[x], &p0()).unwrap(), y);
    }

    #[test]
    fn einsum_matches_triple_loop() {
        let t = ops::einsum("q h d, x h d -> h q x", Datatype::Int).unwrap();
        let mut cfg = std::collections::HashMap::new();
        for a in t.free_axes() {
            let n = match a.name.as_str() {
                "d" => 3,
                _ => 2,
            };
            cfg.insert(a.uid, crate::term::Subst::SetSize(n));
        }
        let t = t.substitute(&cfg).unwrap();
        assert!(t.validate().is_empty());

        let mut rng_state = 12345u64;
        let mut next = || {
            rng_state = rng_state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((rng_state >> 33) % 7) as i64 - 3
        };
        let mut a = TensorValue::zeros(Datatype::Int, vec![3, 2, 2]);
        let mut bt = TensorValue::zeros(Datatype::Int, vec![3, 2, 2]);
        for i in 0..12 {
            if let Data::I64(v) = &mut a.data {
                v[i] = next();
            }
            if let Data::I64(v) = &mut bt.data {
                v[i] = next();
            }
        }
        let y = eval(&t, &[a.clone(), bt.clone()], &p0()).unwrap();
        let o = eval_oracle(&t, &[a.clone(), bt.clone()], &p0()).unwrap();
        assert_eq!(y, o);
        // independent triple loop: out[x,q,h] = Σ_d A[d,h,q]·B[d,h,x]
        for h in 0..2u64 {
            for q in 0..2u64 {
                for x in 0..2u64 {
                    let mut acc = 0i64;
                    for d in 0..3u64 {
                        acc += a.get_i(&[d, h, q]) * bt.get_i(&[d, h, x]);
                    }
                    assert_eq!(y[0].get_i(&[x, q, h]), acc);
                }
            }
        }
    }

    #[test]
    fn dot_product() {
        let t = ops::einsum("a, a -> ", Datatype::Real).unwrap();
        let a = t.free_axes()[0].clone();
        let mut cfg = std::collections::HashMap::new();
        cfg.insert(a.uid, crate::term::Subst::SetSize(3));
        let t = t.substitute(&cfg).unwrap();
        let x = real(vec![3], vec![1.0, 2.0, 3.0]);
        let y = real(vec![3], vec![4.0, 5.0, 6.0]);
        let out = eval(&t, &[x.clone(), y.clone()], &p0()).unwrap();
        assert_eq!(out[0].get_f(&[]), 32.0);
        assert_eq!(eval_oracle(&t, &[x, y], &p0()).unwrap(), out);
    }

    #[test]
    fn convolution_example() {
        let t = ops::convolution(
            Axis::sized("x'", 3),
            Axis::sized("k", 2),
            Axis::sized("c", 1),
            Axis::sized("c'", 1),
        )
        .unwrap();
        let mut params = p0();
        // the learned root is the second composed part
        let Term::Composed(parts) = &t else { panic!() };
        let Term::Root { uid, .. } = &parts[1] else { panic!() };
        params.insert(
            *uid,
            real(vec![1, 2, 1], vec![1.0, -1.0]),
        );
        let x = real(vec![1, 4], vec![1.0, 2.0, 4.0, 7.0]);
        let y = eval(&t, &[x.clone()], &params).unwrap();
        assert_eq!(y[0].sizes, vec![1, 3]);
        assert_eq!(y[0].data, Data::F64(vec![-1.0, -2.0, -3.0]));
        assert_eq!(eval_oracle(&t, &[x], &params).unwrap(), y);
    }

    #[test]
    fn softmax_normalizes_and_matches_oracle() {
        let n = Axis::sized("n", 3);
        let f = ops::softmax(n).unwrap();
        let lifted = ops::batch_lift(&f, &Shape(vec![Axis::sized("p", 2)])).unwrap();
        let x = real(vec![3, 2], vec![0.1, -2.0, 3.0, 1.0, 1.0, 1.0]);
        let y = eval(&lifted, &[x.clone()], &p0()).unwrap();
        for p in 0..2 {
            let s: f64 = (0..3).map(|i| y[0].get_f(&[i, p])).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
        let o = eval_oracle(&lifted, &[x], &p0()).unwrap();
        assert!(tensors_close(&y[0], &o[0], 1e-9, 1e-12));
    }

    #[test]
    fn sum_lift_example() {
        let f = ops::sum(Axis::sized("n", 3), Datatype::Real).unwrap();
        let lifted = ops::batch_lift(&f, &Shape(vec![Axis::sized("p", 2)])).unwrap();
        let x = real(vec![3, 2], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let y = eval(&lifted, &[x], &p0()).unwrap();
        assert_eq!(y[0].data, Data::F64(vec![6.0, 15.0]));
    }

    #[test]
    fn fox_identity_evaluates_as_identity() {
        let objs = vec![
            crate::arraybr::ArrayObject::new(Datatype::Real, vec![Axis::sized("a", 2)]),
            crate::arraybr::ArrayObject::new(Datatype::Real, vec![Axis::sized("b", 3)]),
        ];
        // copy both slots, then project slot 0 from the first copy and
        // slot 1 from the second
        let copy = Term::rearrangement(
            Remapping::new(vec![0, 1, 0, 1], 2).unwrap(),
            objs.clone(),
        )
        .unwrap();
        let mid = copy.cod().unwrap();
        let projections = Term::rearrangement(Remapping::new(vec![0, 3], 4).unwrap(), mid).unwrap();
        let t = Term::compose(copy, projections).unwrap();
        let x = real(vec![2], vec![1.0, 2.0]);
        let y = real(vec![3], vec![3.0, 4.0, 5.0]);
        let out = eval(&t, &[x.clone(), y.clone()], &p0()).unwrap();
        assert_eq!(out, vec![x.clone(), y.clone()]);
        assert_eq!(eval_oracle(&t, &[x, y], &p0()).unwrap(), out);
    }

    #[test]
    fn embedding_selects_row() {
        let t = ops::embedding(4, Axis::sized("m", 2)).unwrap();
        let Term::Root { uid, .. } = &t else { panic!() };
        let mut params = p0();
        let table = real(vec![2, 4], (0..8).map(|x| x as f64).collect());
        params.insert(*uid, table.clone());
        let idx = TensorValue::from_i64(Datatype::Finite(4), vec![], vec![2]).unwrap();
        let y = eval(&t, &[idx.clone()], &params).unwrap();
        assert_eq!(y[0].data, Data::F64(vec![table.get_f(&[0, 2]), table.get_f(&[1, 2])]));
        assert_eq!(eval_oracle(&t, &[idx], &params).unwrap(), y);
    }

    #[test]
    fn params_are_deterministic_and_keyed() {
        let l1 = ops::linear(vec![Axis::sized("a", 3)], vec![Axis::sized("b", 2)]).unwrap();
        let l2 = ops::linear(vec![Axis::sized("a", 3)], vec![Axis::sized("b", 2)]).unwrap();
        let t = Term::product(vec![l1.clone(), l2]);
        let s1 = init_params(7, &t).unwrap();
        let s2 = init_params(7, &t).unwrap();
        let uids: Vec<Uid> = s1.iter().map(|(u, _)| *u).collect();
        assert_eq!(uids.len(), 2);
        for u in &uids {
            assert_eq!(s1.get(*u).unwrap(), s2.get(*u).unwrap());
            let bound = 1.0 / (3f64).sqrt();
            if let Data::F64(v) = &s1.get(*u).unwrap().data {
                assert!(v.iter().all(|x| x.abs() <= bound));
            }
        }
        assert_ne!(s1.get(uids[0]).unwrap(), s1.get(uids[1]).unwrap());

        let r = ops::rmsnorm(Axis::sized("n", 4)).unwrap();
        let s = init_params(0, &r).unwrap();
        let Term::Root { uid, .. } = &r else { panic!() };
        assert_eq!(s.get(*uid).unwrap().data, Data::F64(vec![1.0; 4]));
    }

    #[test]
    fn mask_is_causal() {
        let t = ops::triangular_mask(Axis::sized("q", 3), Axis::sized("x", 3)).unwrap();
        let x = real(vec![3, 3], (0..9).map(|v| v as f64 + 1.0).collect());
        let y = eval(&t, &[x.clone()], &p0()).unwrap();
        for q in 0..3u64 {
            for xx in 0..3u64 {
                if xx <= q {
                    assert_eq!(y[0].get_f(&[xx, q]), x.get_f(&[xx, q]));
                } else {
                    assert_eq!(y[0].get_f(&[xx, q]), MASK_SENTINEL);
                }
            }
        }
        assert_eq!(eval_oracle(&t, &[x], &p0()).unwrap(), y);
    }
}
