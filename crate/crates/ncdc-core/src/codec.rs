//! Canonical JSON interchange: terms are packaged as a versioned document
//! with a uid repository, so equal terms always serialize to identical
//! bytes (sorted keys, no whitespace, shortest round-trip floats).

use std::collections::HashMap;

use serde_json::{json, Map, Value};

use crate::arraybr::{ArrayObject, BaseOp, BroadcastedOp, Datatype, ElemTag, RootOp, Weave};
use crate::error::{Error, Result};
use crate::stride::{AffineStrideMap, Axis, Shape};
use crate::tensor::{Data, TensorValue};
use crate::term::Term;
use crate::uid::Uid;

pub const VERSION: &str = "1.0.0";
pub const EXTENSION: &str = ".ncd.json";

// ---------------------------------------------------------------- encoding

fn dtype_json(d: &Datatype) -> Value {
    match d {
        Datatype::Real => json!("real"),
        Datatype::Int => json!("int"),
        Datatype::Finite(v) => json!({ "finite": v }),
        Datatype::Quantized(tag) => json!({ "quantized": tag }),
    }
}

fn axes_json(axes: &[Axis]) -> Value {
    Value::Array(axes.iter().map(|a| json!(a.uid.to_hex())).collect())
}

fn object_json(o: &ArrayObject) -> Value {
    json!({ "dtype": dtype_json(&o.dtype), "axes": axes_json(&o.shape.0) })
}

fn stride_json(m: &AffineStrideMap) -> Value {
    json!({
        "cod": axes_json(&m.cod.0),
        "dom": axes_json(&m.dom.0),
        "lambda": m.lambda,
        "offset": m.offset,
    })
}

fn weave_json(w: &Weave) -> Value {
    json!({
        "dtype": dtype_json(&w.dtype),
        "mask": w.mask,
        "targets": axes_json(&w.targets),
    })
}

fn base_json(b: &BaseOp) -> Value {
    match b {
        BaseOp::Elementwise(ElemTag::Add) => json!({ "op": "add" }),
        BaseOp::Elementwise(ElemTag::Mul) => json!({ "op": "mul" }),
        BaseOp::Elementwise(ElemTag::Neg) => json!({ "op": "neg" }),
        BaseOp::Softmax => json!({ "op": "softmax" }),
        BaseOp::Sum => json!({ "op": "sum" }),
        BaseOp::Identity => json!({ "op": "identity" }),
        BaseOp::Select => json!({ "op": "select" }),
        BaseOp::TriangularMask => json!({ "op": "triangular_mask" }),
        BaseOp::Linear { weight } => json!({ "op": "linear", "weight": weight.to_hex() }),
        BaseOp::RmsNorm { gain } => json!({ "op": "rmsnorm", "gain": gain.to_hex() }),
        BaseOp::Embedding { table } => json!({ "op": "embedding", "table": table.to_hex() }),
    }
}

pub fn tensor_json(t: &TensorValue) -> Value {
    let data = match &t.data {
        Data::F64(v) => json!(v),
        Data::I64(v) => json!(v),
    };
    json!({ "data": data, "dtype": dtype_json(&t.dtype), "sizes": t.sizes })
}

fn rootop_json(op: &RootOp) -> Value {
    match op {
        RootOp::Reindexing { dtype, map } => json!({
            "dtype": dtype_json(dtype),
            "map": stride_json(map),
            "type": "reindexing",
        }),
        RootOp::Broadcast(b) => json!({
            "base": base_json(&b.base),
            "degree": axes_json(&b.degree.0),
            "inputs": b.input_weaves.iter().map(weave_json).collect::<Vec<_>>(),
            "outputs": b.output_weaves.iter().map(weave_json).collect::<Vec<_>>(),
            "reindexings": b.reindexings.iter().map(stride_json).collect::<Vec<_>>(),
            "type": "broadcast",
        }),
    }
}

fn term_json(t: &Term) -> Value {
    match t {
        Term::Root { uid, op } => {
            json!({ "kind": "root", "op": rootop_json(op), "uid": uid.to_hex() })
        }
        Term::Composed(parts) => {
            json!({ "kind": "composed", "parts": parts.iter().map(term_json).collect::<Vec<_>>() })
        }
        Term::Product(parts) => {
            json!({ "kind": "product", "parts": parts.iter().map(term_json).collect::<Vec<_>>() })
        }
        Term::Rearrangement { mapping, dom_family } => json!({
            "dom": dom_family.iter().map(object_json).collect::<Vec<_>>(),
            "kind": "rearrangement",
            "mapping": { "cod": mapping.cod_size(), "targets": mapping.targets() },
        }),
        Term::Block { tag, repeat, body } => {
            let mut m = Map::new();
            m.insert("body".into(), term_json(body));
            m.insert("kind".into(), json!("block"));
            if let Some(r) = repeat {
                m.insert("repeat".into(), json!(r));
            }
            m.insert("tag".into(), json!(tag));
            Value::Object(m)
        }
        Term::Element { values, cod } => json!({
            "cod": cod.iter().map(object_json).collect::<Vec<_>>(),
            "kind": "element",
            "values": values.iter().map(tensor_json).collect::<Vec<_>>(),
        }),
    }
}

fn collect_special_uids(t: &Term, out: &mut Vec<(Uid, &'static str, String)>) {
    match t {
        Term::Root { uid, op } => {
            out.push((*uid, "root", op.name().to_string()));
            if let RootOp::Broadcast(b) = op {
                match &b.base {
                    BaseOp::Linear { weight } => out.push((*weight, "param", "weight".into())),
                    BaseOp::RmsNorm { gain } => out.push((*gain, "param", "gain".into())),
                    BaseOp::Embedding { table } => out.push((*table, "param", "table".into())),
                    _ => {}
                }
            }
        }
        Term::Composed(parts) | Term::Product(parts) => {
            for p in parts {
                collect_special_uids(p, out);
            }
        }
        Term::Block { body, .. } => collect_special_uids(body, out),
        Term::Rearrangement { .. } | Term::Element { .. } => {}
    }
}

pub fn to_document(t: &Term) -> Value {
    let mut uids = Map::new();
    for a in t.all_axes() {
        let mut m = Map::new();
        m.insert("display".into(), json!(a.name));
        m.insert("kind".into(), json!("axis"));
        if let Some(s) = a.size {
            m.insert("size".into(), json!(s));
        }
        uids.insert(a.uid.to_hex(), Value::Object(m));
    }
    let mut specials = Vec::new();
    collect_special_uids(t, &mut specials);
    for (uid, kind, display) in specials {
        // a learned op that keys its parameter by its own root uid stays "root"
        uids.entry(uid.to_hex())
            .or_insert_with(|| json!({ "display": display, "kind": kind }));
    }
    json!({ "root": term_json(t), "uids": uids, "version": VERSION })
}

pub fn save(t: &Term) -> String {
    serde_json::to_string(&to_document(t)).expect("json encoding never fails")
}

// ---------------------------------------------------------------- decoding

fn get<'a>(v: &'a Value, key: &str, path: &str) -> Result<&'a Value> {
    v.get(key)
        .ok_or_else(|| Error::decode(format!("{path}/{key}"), "missing field"))
}

fn as_str<'a>(v: &'a Value, path: &str) -> Result<&'a str> {
    v.as_str().ok_or_else(|| Error::decode(path, "expected a string"))
}

fn as_u64(v: &Value, path: &str) -> Result<u64> {
    v.as_u64().ok_or_else(|| Error::decode(path, "expected a nonnegative integer"))
}

fn as_array<'a>(v: &'a Value, path: &str) -> Result<&'a Vec<Value>> {
    v.as_array().ok_or_else(|| Error::decode(path, "expected an array"))
}

fn parse_uid(v: &Value, path: &str) -> Result<Uid> {
    Uid::from_hex(as_str(v, path)?)
        .ok_or_else(|| Error::decode(path, "expected 32 hex characters"))
}

fn parse_dtype(v: &Value, path: &str) -> Result<Datatype> {
    match v {
        Value::String(s) => match s.as_str() {
            "real" => Ok(Datatype::Real),
            "int" => Ok(Datatype::Int),
            other => Err(Error::decode(path, format!("unknown datatype '{other}'"))),
        },
        Value::Object(_) => {
            if let Some(f) = v.get("finite") {
                Ok(Datatype::Finite(as_u64(f, &format!("{path}/finite"))?))
            } else if let Some(q) = v.get("quantized") {
                Ok(Datatype::Quantized(as_str(q, &format!("{path}/quantized"))?.to_string()))
            } else {
                Err(Error::decode(path, "expected finite or quantized"))
            }
        }
        _ => Err(Error::decode(path, "expected a datatype")),
    }
}

struct Repo {
    axes: HashMap<Uid, Axis>,
    known: HashMap<Uid, String>,
}

impl Repo {
    fn axis(&self, v: &Value, path: &str) -> Result<Axis> {
        let uid = parse_uid(v, path)?;
        self.axes
            .get(&uid)
            .cloned()
            .ok_or_else(|| Error::decode(path, format!("dangling uid {uid}: not an axis in the repository")))
    }

    fn referenced(&self, v: &Value, path: &str, kind: &str) -> Result<Uid> {
        let uid = parse_uid(v, path)?;
        match self.known.get(&uid) {
            Some(k) if k == kind => Ok(uid),
            // parameters keyed by their operation's own uid resolve as roots
            Some(k) if kind == "param" && k == "root" => Ok(uid),
            Some(k) => Err(Error::decode(path, format!("uid {uid} has kind {k}, expected {kind}"))),
            None => Err(Error::decode(path, format!("dangling uid {uid}"))),
        }
    }

    fn shape(&self, v: &Value, path: &str) -> Result<Shape> {
        let arr = as_array(v, path)?;
        let axes = arr
            .iter()
            .enumerate()
            .map(|(i, a)| self.axis(a, &format!("{path}/{i}")))
            .collect::<Result<Vec<_>>>()?;
        Ok(Shape(axes))
    }
}

fn parse_repo(v: &Value, path: &str) -> Result<Repo> {
    let obj = v.as_object().ok_or_else(|| Error::decode(path, "expected an object"))?;
    let mut axes = HashMap::new();
    let mut known = HashMap::new();
    for (hex, entry) in obj {
        let epath = format!("{path}/{hex}");
        let uid = Uid::from_hex(hex).ok_or_else(|| Error::decode(epath.clone(), "bad uid key"))?;
        let kind = as_str(get(entry, "kind", &epath)?, &format!("{epath}/kind"))?;
        known.insert(uid, kind.to_string());
        if kind == "axis" {
            let name = as_str(get(entry, "display", &epath)?, &format!("{epath}/display"))?;
            let size = match entry.get("size") {
                None => None,
                Some(s) => Some(as_u64(s, &format!("{epath}/size"))?),
            };
            axes.insert(uid, Axis { uid, name: name.to_string(), size });
        }
    }
    Ok(Repo { axes, known })
}

fn parse_stride(repo: &Repo, v: &Value, path: &str) -> Result<AffineStrideMap> {
    let dom = repo.shape(get(v, "dom", path)?, &format!("{path}/dom"))?;
    let cod = repo.shape(get(v, "cod", path)?, &format!("{path}/cod"))?;
    let lpath = format!("{path}/lambda");
    let lambda = as_array(get(v, "lambda", path)?, &lpath)?
        .iter()
        .enumerate()
        .map(|(i, row)| {
            as_array(row, &format!("{lpath}/{i}"))?
                .iter()
                .enumerate()
                .map(|(j, x)| as_u64(x, &format!("{lpath}/{i}/{j}")))
                .collect()
        })
        .collect::<Result<Vec<Vec<u64>>>>()?;
    let opath = format!("{path}/offset");
    let offset = as_array(get(v, "offset", path)?, &opath)?
        .iter()
        .enumerate()
        .map(|(j, x)| as_u64(x, &format!("{opath}/{j}")))
        .collect::<Result<Vec<u64>>>()?;
    AffineStrideMap::new(dom, cod, lambda, offset)
        .map_err(|e| Error::decode(path, e.to_string()))
}

fn parse_weave(repo: &Repo, v: &Value, path: &str) -> Result<Weave> {
    let mpath = format!("{path}/mask");
    let mask = as_array(get(v, "mask", path)?, &mpath)?
        .iter()
        .enumerate()
        .map(|(i, b)| b.as_bool().ok_or_else(|| Error::decode(format!("{mpath}/{i}"), "expected a boolean")))
        .collect::<Result<Vec<bool>>>()?;
    let dtype = parse_dtype(get(v, "dtype", path)?, &format!("{path}/dtype"))?;
    let targets = repo.shape(get(v, "targets", path)?, &format!("{path}/targets"))?;
    Weave::new(mask, dtype, targets.0).map_err(|e| Error::decode(path, e.to_string()))
}

fn parse_base(repo: &Repo, v: &Value, path: &str) -> Result<BaseOp> {
    let op = as_str(get(v, "op", path)?, &format!("{path}/op"))?;
    let param = |field: &str| -> Result<Uid> {
        repo.referenced(get(v, field, path)?, &format!("{path}/{field}"), "param")
    };
    match op {
        "add" => Ok(BaseOp::Elementwise(ElemTag::Add)),
        "mul" => Ok(BaseOp::Elementwise(ElemTag::Mul)),
        "neg" => Ok(BaseOp::Elementwise(ElemTag::Neg)),
        "softmax" => Ok(BaseOp::Softmax),
        "sum" => Ok(BaseOp::Sum),
        "identity" => Ok(BaseOp::Identity),
        "select" => Ok(BaseOp::Select),
        "triangular_mask" => Ok(BaseOp::TriangularMask),
        "linear" => Ok(BaseOp::Linear { weight: param("weight")? }),
        "rmsnorm" => Ok(BaseOp::RmsNorm { gain: param("gain")? }),
        "embedding" => Ok(BaseOp::Embedding { table: param("table")? }),
        other => Err(Error::decode(format!("{path}/op"), format!("unknown base op '{other}'"))),
    }
}

fn parse_object(repo: &Repo, v: &Value, path: &str) -> Result<ArrayObject> {
    let dtype = parse_dtype(get(v, "dtype", path)?, &format!("{path}/dtype"))?;
    let shape = repo.shape(get(v, "axes", path)?, &format!("{path}/axes"))?;
    Ok(ArrayObject { dtype, shape })
}

pub fn tensor_from_json(v: &Value, path: &str) -> Result<TensorValue> {
    let dtype = parse_dtype(get(v, "dtype", path)?, &format!("{path}/dtype"))?;
    let spath = format!("{path}/sizes");
    let sizes = as_array(get(v, "sizes", path)?, &spath)?
        .iter()
        .enumerate()
        .map(|(i, s)| as_u64(s, &format!("{spath}/{i}")))
        .collect::<Result<Vec<u64>>>()?;
    let dpath = format!("{path}/data");
    let raw = as_array(get(v, "data", path)?, &dpath)?;
    let t = if dtype.is_float() {
        let data = raw
            .iter()
            .enumerate()
            .map(|(i, x)| {
                x.as_f64().ok_or_else(|| Error::decode(format!("{dpath}/{i}"), "expected a number"))
            })
            .collect::<Result<Vec<f64>>>()?;
        TensorValue::from_f64(dtype, sizes, data)
    } else {
        let data = raw
            .iter()
            .enumerate()
            .map(|(i, x)| {
                x.as_i64().ok_or_else(|| Error::decode(format!("{dpath}/{i}"), "expected an integer"))
            })
            .collect::<Result<Vec<i64>>>()?;
        TensorValue::from_i64(dtype, sizes, data)
    };
    t.map_err(|e| Error::decode(path, e.to_string()))
}

fn parse_rootop(repo: &Repo, v: &Value, path: &str) -> Result<RootOp> {
    match as_str(get(v, "type", path)?, &format!("{path}/type"))? {
        "reindexing" => Ok(RootOp::Reindexing {
            dtype: parse_dtype(get(v, "dtype", path)?, &format!("{path}/dtype"))?,
            map: parse_stride(repo, get(v, "map", path)?, &format!("{path}/map"))?,
        }),
        "broadcast" => {
            let degree = repo.shape(get(v, "degree", path)?, &format!("{path}/degree"))?;
            let base = parse_base(repo, get(v, "base", path)?, &format!("{path}/base"))?;
            let rpath = format!("{path}/reindexings");
            let reindexings = as_array(get(v, "reindexings", path)?, &rpath)?
                .iter()
                .enumerate()
                .map(|(i, r)| parse_stride(repo, r, &format!("{rpath}/{i}")))
                .collect::<Result<Vec<_>>>()?;
            let parse_weaves = |field: &str| -> Result<Vec<Weave>> {
                let wpath = format!("{path}/{field}");
                as_array(get(v, field, path)?, &wpath)?
                    .iter()
                    .enumerate()
                    .map(|(i, w)| parse_weave(repo, w, &format!("{wpath}/{i}")))
                    .collect()
            };
            let b = BroadcastedOp {
                base,
                degree,
                reindexings,
                input_weaves: parse_weaves("inputs")?,
                output_weaves: parse_weaves("outputs")?,
            };
            b.validate().map_err(|e| Error::decode(path, e.to_string()))?;
            Ok(RootOp::Broadcast(b))
        }
        other => Err(Error::decode(format!("{path}/type"), format!("unknown root op type '{other}'"))),
    }
}

fn parse_term(repo: &Repo, v: &Value, path: &str) -> Result<Term> {
    let parse_parts = |field: &str| -> Result<Vec<Term>> {
        let ppath = format!("{path}/{field}");
        as_array(get(v, field, path)?, &ppath)?
            .iter()
            .enumerate()
            .map(|(i, p)| parse_term(repo, p, &format!("{ppath}/{i}")))
            .collect()
    };
    match as_str(get(v, "kind", path)?, &format!("{path}/kind"))? {
        "root" => {
            let uid = repo.referenced(get(v, "uid", path)?, &format!("{path}/uid"), "root")?;
            let op = parse_rootop(repo, get(v, "op", path)?, &format!("{path}/op"))?;
            Ok(Term::Root { uid, op })
        }
        "composed" => Ok(Term::Composed(parse_parts("parts")?)),
        "product" => Ok(Term::Product(parse_parts("parts")?)),
        "rearrangement" => {
            let mv = get(v, "mapping", path)?;
            let mpath = format!("{path}/mapping");
            let cod = as_u64(get(mv, "cod", &mpath)?, &format!("{mpath}/cod"))? as usize;
            let tpath = format!("{mpath}/targets");
            let targets = as_array(get(mv, "targets", &mpath)?, &tpath)?
                .iter()
                .enumerate()
                .map(|(i, t)| Ok(as_u64(t, &format!("{tpath}/{i}"))? as usize))
                .collect::<Result<Vec<usize>>>()?;
            let mapping = crate::remapping::Remapping::new(targets, cod)
                .map_err(|e| Error::decode(&mpath, e.to_string()))?;
            let dpath = format!("{path}/dom");
            let dom = as_array(get(v, "dom", path)?, &dpath)?
                .iter()
                .enumerate()
                .map(|(i, o)| parse_object(repo, o, &format!("{dpath}/{i}")))
                .collect::<Result<Vec<_>>>()?;
            Term::rearrangement(mapping, dom).map_err(|e| Error::decode(path, e.to_string()))
        }
        "block" => {
            let tag = as_str(get(v, "tag", path)?, &format!("{path}/tag"))?;
            let repeat = match v.get("repeat") {
                None => None,
                Some(r) => Some(as_u64(r, &format!("{path}/repeat"))?),
            };
            let body = parse_term(repo, get(v, "body", path)?, &format!("{path}/body"))?;
            Ok(Term::Block { tag: tag.to_string(), repeat, body: Box::new(body) })
        }
        "element" => {
            let vpath = format!("{path}/values");
            let values = as_array(get(v, "values", path)?, &vpath)?
                .iter()
                .enumerate()
                .map(|(i, t)| tensor_from_json(t, &format!("{vpath}/{i}")))
                .collect::<Result<Vec<_>>>()?;
            let cpath = format!("{path}/cod");
            let cod = as_array(get(v, "cod", path)?, &cpath)?
                .iter()
                .enumerate()
                .map(|(i, o)| parse_object(repo, o, &format!("{cpath}/{i}")))
                .collect::<Result<Vec<_>>>()?;
            Term::element(values, cod).map_err(|e| Error::decode(path, e.to_string()))
        }
        other => Err(Error::decode(format!("{path}/kind"), format!("unknown term kind '{other}'"))),
    }
}

pub fn load(text: &str) -> Result<Term> {
    let doc: Value =
        serde_json::from_str(text).map_err(|e| Error::decode("", format!("invalid JSON: {e}")))?;
    let version = as_str(get(&doc, "version", "")?, "/version")?;
    let major = version
        .split('.')
        .next()
        .and_then(|m| m.parse::<u64>().ok())
        .ok_or_else(|| Error::decode("/version", "expected MAJOR.MINOR.PATCH"))?;
    let ours: u64 = VERSION.split('.').next().unwrap().parse().unwrap();
    if major > ours {
        return Err(Error::decode(
            "/version",
            format!("document version {version} is newer than supported {VERSION}"),
        ));
    }
    let repo = parse_repo(get(&doc, "uids", "")?, "/uids")?;
    parse_term(&repo, get(&doc, "root", "")?, "/root")
}

/// `{ "<uid hex>": size, ... }`
pub fn configuration_from_json(v: &Value, path: &str) -> Result<crate::align::Configuration> {
    let obj = v.as_object().ok_or_else(|| Error::decode(path, "expected an object"))?;
    let mut c = crate::align::Configuration::new();
    for (hex, size) in obj {
        let epath = format!("{path}/{hex}");
        let uid = Uid::from_hex(hex).ok_or_else(|| Error::decode(epath.clone(), "bad uid key"))?;
        c.insert(uid, as_u64(size, &epath)?);
    }
    Ok(c)
}
