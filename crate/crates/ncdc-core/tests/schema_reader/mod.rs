//! A second, independent reader for the interchange documents described in
//! docs/schema.md. It deliberately shares no code with the library's codec:
//! everything here is derived from the schema document alone.

use std::collections::BTreeMap;

use ncdc_core::{
    AffineStrideMap, ArrayObject, Axis, BaseOp, BroadcastedOp, Datatype, ElemTag, Remapping,
    RootOp, Shape, Term, TensorValue, Uid, Weave,
};
use serde_json::Value;

type R<T> = Result<T, String>;

struct Axes(BTreeMap<String, Axis>);

impl Axes {
    fn lookup(&self, hex: &str) -> R<Axis> {
        self.0.get(hex).cloned().ok_or_else(|| format!("axis {hex} missing from uid table"))
    }
}

fn field<'a>(v: &'a Value, name: &str) -> R<&'a Value> {
    v.get(name).ok_or_else(|| format!("missing field {name}"))
}

fn string(v: &Value) -> R<&str> {
    v.as_str().ok_or_else(|| "not a string".to_string())
}

fn number(v: &Value) -> R<u64> {
    v.as_u64().ok_or_else(|| "not an unsigned integer".to_string())
}

fn list(v: &Value) -> R<&Vec<Value>> {
    v.as_array().ok_or_else(|| "not an array".to_string())
}

fn uid_of(hex: &str) -> R<Uid> {
    Uid::from_hex(hex).ok_or_else(|| format!("{hex} is not a 32-hex-character uid"))
}

fn datatype(v: &Value) -> R<Datatype> {
    if let Some(s) = v.as_str() {
        return match s {
            "real" => Ok(Datatype::Real),
            "int" => Ok(Datatype::Int),
            _ => Err(format!("unknown datatype {s}")),
        };
    }
    if let Some(n) = v.get("finite") {
        return Ok(Datatype::Finite(number(n)?));
    }
    if let Some(tag) = v.get("quantized") {
        return Ok(Datatype::Quantized(string(tag)?.to_string()));
    }
    Err("unrecognized datatype".to_string())
}

fn axis_list(axes: &Axes, v: &Value) -> R<Vec<Axis>> {
    list(v)?.iter().map(|a| axes.lookup(string(a)?)).collect()
}

fn array_object(axes: &Axes, v: &Value) -> R<ArrayObject> {
    Ok(ArrayObject {
        dtype: datatype(field(v, "dtype")?)?,
        shape: Shape(axis_list(axes, field(v, "axes")?)?),
    })
}

fn stride_map(axes: &Axes, v: &Value) -> R<AffineStrideMap> {
    let dom = Shape(axis_list(axes, field(v, "dom")?)?);
    let cod = Shape(axis_list(axes, field(v, "cod")?)?);
    let lambda: Vec<Vec<u64>> = serde_json::from_value(field(v, "lambda")?.clone())
        .map_err(|e| format!("lambda: {e}"))?;
    let offset: Vec<u64> = serde_json::from_value(field(v, "offset")?.clone())
        .map_err(|e| format!("offset: {e}"))?;
    AffineStrideMap::new(dom, cod, lambda, offset).map_err(|e| e.to_string())
}

fn weave(axes: &Axes, v: &Value) -> R<Weave> {
    let mask: Vec<bool> = serde_json::from_value(field(v, "mask")?.clone())
        .map_err(|e| format!("mask: {e}"))?;
    let dtype = datatype(field(v, "dtype")?)?;
    let targets = axis_list(axes, field(v, "targets")?)?;
    Weave::new(mask, dtype, targets).map_err(|e| e.to_string())
}

fn base_op(v: &Value) -> R<BaseOp> {
    let param = |name: &str| -> R<Uid> { uid_of(string(field(v, name)?)?) };
    Ok(match string(field(v, "op")?)? {
        "add" => BaseOp::Elementwise(ElemTag::Add),
        "mul" => BaseOp::Elementwise(ElemTag::Mul),
        "neg" => BaseOp::Elementwise(ElemTag::Neg),
        "softmax" => BaseOp::Softmax,
        "sum" => BaseOp::Sum,
        "identity" => BaseOp::Identity,
        "select" => BaseOp::Select,
        "triangular_mask" => BaseOp::TriangularMask,
        "linear" => BaseOp::Linear { weight: param("weight")? },
        "rmsnorm" => BaseOp::RmsNorm { gain: param("gain")? },
        "embedding" => BaseOp::Embedding { table: param("table")? },
        other => return Err(format!("unknown base operation {other}")),
    })
}

fn tensor(v: &Value) -> R<TensorValue> {
    let dtype = datatype(field(v, "dtype")?)?;
    let sizes: Vec<u64> = serde_json::from_value(field(v, "sizes")?.clone())
        .map_err(|e| format!("sizes: {e}"))?;
    let out = if matches!(dtype, Datatype::Real | Datatype::Quantized(_)) {
        let data: Vec<f64> = serde_json::from_value(field(v, "data")?.clone())
            .map_err(|e| format!("data: {e}"))?;
        TensorValue::from_f64(dtype, sizes, data)
    } else {
        let data: Vec<i64> = serde_json::from_value(field(v, "data")?.clone())
            .map_err(|e| format!("data: {e}"))?;
        TensorValue::from_i64(dtype, sizes, data)
    };
    out.map_err(|e| e.to_string())
}

fn root_op(axes: &Axes, v: &Value) -> R<RootOp> {
    match string(field(v, "type")?)? {
        "reindexing" => Ok(RootOp::Reindexing {
            dtype: datatype(field(v, "dtype")?)?,
            map: stride_map(axes, field(v, "map")?)?,
        }),
        "broadcast" => {
            let weaves = |name: &str| -> R<Vec<Weave>> {
                list(field(v, name)?)?.iter().map(|w| weave(axes, w)).collect()
            };
            Ok(RootOp::Broadcast(BroadcastedOp {
                base: base_op(field(v, "base")?)?,
                degree: Shape(axis_list(axes, field(v, "degree")?)?),
                reindexings: list(field(v, "reindexings")?)?
                    .iter()
                    .map(|m| stride_map(axes, m))
                    .collect::<R<_>>()?,
                input_weaves: weaves("inputs")?,
                output_weaves: weaves("outputs")?,
            }))
        }
        other => Err(format!("unknown root operation type {other}")),
    }
}

fn term(axes: &Axes, v: &Value) -> R<Term> {
    let parts = |name: &str| -> R<Vec<Term>> {
        list(field(v, name)?)?.iter().map(|p| term(axes, p)).collect()
    };
    match string(field(v, "kind")?)? {
        "root" => Ok(Term::Root {
            uid: uid_of(string(field(v, "uid")?)?)?,
            op: root_op(axes, field(v, "op")?)?,
        }),
        "composed" => Ok(Term::Composed(parts("parts")?)),
        "product" => Ok(Term::Product(parts("parts")?)),
        "rearrangement" => {
            let mapping = field(v, "mapping")?;
            let cod = number(field(mapping, "cod")?)? as usize;
            let targets: Vec<usize> = serde_json::from_value(field(mapping, "targets")?.clone())
                .map_err(|e| format!("targets: {e}"))?;
            let dom = list(field(v, "dom")?)?
                .iter()
                .map(|o| array_object(axes, o))
                .collect::<R<Vec<_>>>()?;
            Ok(Term::Rearrangement {
                mapping: Remapping::new(targets, cod).map_err(|e| e.to_string())?,
                dom_family: dom,
            })
        }
        "block" => Ok(Term::Block {
            tag: string(field(v, "tag")?)?.to_string(),
            repeat: match v.get("repeat") {
                None => None,
                Some(r) => Some(number(r)?),
            },
            body: Box::new(term(axes, field(v, "body")?)?),
        }),
        "element" => Ok(Term::Element {
            values: list(field(v, "values")?)?.iter().map(tensor).collect::<R<_>>()?,
            cod: list(field(v, "cod")?)?
                .iter()
                .map(|o| array_object(axes, o))
                .collect::<R<_>>()?,
        }),
        other => Err(format!("unknown term kind {other}")),
    }
}

pub fn decode(text: &str) -> R<Term> {
    let doc: Value = serde_json::from_str(text).map_err(|e| e.to_string())?;
    let version = string(field(&doc, "version")?)?;
    let major: u64 = version
        .split('.')
        .next()
        .and_then(|m| m.parse().ok())
        .ok_or_else(|| format!("malformed version {version}"))?;
    if major > 1 {
        return Err(format!("document major version {major} is too new"));
    }

    let table = field(&doc, "uids")?
        .as_object()
        .ok_or_else(|| "uids is not an object".to_string())?;
    let mut axes = BTreeMap::new();
    for (hex, entry) in table {
        if string(field(entry, "kind")?)? != "axis" {
            continue;
        }
        let size = match entry.get("size") {
            None => None,
            Some(s) => Some(number(s)?),
        };
        axes.insert(
            hex.clone(),
            Axis { uid: uid_of(hex)?, name: string(field(entry, "display")?)?.to_string(), size },
        );
    }
    term(&Axes(axes), field(&doc, "root")?)
}
