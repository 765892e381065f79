//! Concrete tensors consumed and produced by the interpreter.
//!
//! Flat layout: `sizes` lists the innermost axis first (matching shape slot
//! order) and the flat index is Σ coord[i]·stride[i] with stride[0] = 1, so
//! the innermost slot varies fastest.

use crate::arraybr::{ArrayObject, Datatype};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub enum Data {
    F64(Vec<f64>),
    I64(Vec<i64>),
}

impl Data {
    pub fn len(&self) -> usize {
        match self {
            Data::F64(v) => v.len(),
            Data::I64(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TensorValue {
    pub dtype: Datatype,
    pub sizes: Vec<u64>,
    pub data: Data,
}

impl TensorValue {
    pub fn new(dtype: Datatype, sizes: Vec<u64>, data: Data) -> Result<TensorValue> {
        let expected: u64 = sizes.iter().product();
        if data.len() as u64 != expected {
            return Err(Error::Domain(format!(
                "tensor data has {} entries for sizes {:?} ({} expected)",
                data.len(),
                sizes,
                expected
            )));
        }
        match (&dtype, &data) {
            (Datatype::Real | Datatype::Quantized(_), Data::F64(v)) => {
                if v.iter().any(|x| x.is_nan()) {
                    return Err(Error::Domain("tensor contains NaN".into()));
                }
            }
            (Datatype::Int, Data::I64(_)) => {}
            (Datatype::Finite(n), Data::I64(v)) => {
                if let Some(&bad) = v.iter().find(|&&x| x < 0 || x as u64 >= *n) {
                    return Err(Error::Domain(format!("value {bad} outside finite({n})")));
                }
            }
            _ => {
                return Err(Error::Domain(format!(
                    "data kind does not match dtype {}",
                    dtype.describe()
                )))
            }
        }
        Ok(TensorValue { dtype, sizes, data })
    }

    pub fn zeros(dtype: Datatype, sizes: Vec<u64>) -> TensorValue {
        let n: u64 = sizes.iter().product();
        let data = if dtype.is_float() {
            Data::F64(vec![0.0; n as usize])
        } else {
            Data::I64(vec![0; n as usize])
        };
        TensorValue { dtype, sizes, data }
    }

    pub fn scalar_f(dtype: Datatype, x: f64) -> TensorValue {
        TensorValue { dtype, sizes: vec![], data: Data::F64(vec![x]) }
    }

    pub fn from_f64(dtype: Datatype, sizes: Vec<u64>, data: Vec<f64>) -> Result<TensorValue> {
        TensorValue::new(dtype, sizes, Data::F64(data))
    }

    pub fn from_i64(dtype: Datatype, sizes: Vec<u64>, data: Vec<i64>) -> Result<TensorValue> {
        TensorValue::new(dtype, sizes, Data::I64(data))
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn flat_index(&self, coord: &[u64]) -> usize {
        debug_assert_eq!(coord.len(), self.sizes.len());
        let mut idx = 0u64;
        let mut stride = 1u64;
        for (c, s) in coord.iter().zip(&self.sizes) {
            debug_assert!(c < s, "coordinate {coord:?} outside sizes {:?}", self.sizes);
            idx += c * stride;
            stride *= s;
        }
        idx as usize
    }

    pub fn get_f(&self, coord: &[u64]) -> f64 {
        let i = self.flat_index(coord);
        match &self.data {
            Data::F64(v) => v[i],
            Data::I64(v) => v[i] as f64,
        }
    }

    pub fn get_i(&self, coord: &[u64]) -> i64 {
        let i = self.flat_index(coord);
        match &self.data {
            Data::I64(v) => v[i],
            Data::F64(v) => v[i] as i64,
        }
    }

    pub fn set_f(&mut self, coord: &[u64], x: f64) {
        let i = self.flat_index(coord);
        match &mut self.data {
            Data::F64(v) => v[i] = x,
            Data::I64(v) => v[i] = x as i64,
        }
    }

    pub fn set_i(&mut self, coord: &[u64], x: i64) {
        let i = self.flat_index(coord);
        match &mut self.data {
            Data::I64(v) => v[i] = x,
            Data::F64(v) => v[i] = x as f64,
        }
    }

    /// Checks this tensor fits the given (configured) array object.
    pub fn matches(&self, obj: &ArrayObject) -> Result<()> {
        let want = obj.shape.sizes()?;
        if self.sizes != want {
            return Err(Error::Eval(format!(
                "tensor sizes {:?} do not match {}",
                self.sizes,
                obj.describe()
            )));
        }
        if self.dtype != obj.dtype {
            return Err(Error::Eval(format!(
                "tensor dtype {} does not match {}",
                self.dtype.describe(),
                obj.describe()
            )));
        }
        Ok(())
    }
}

/// Relative comparison with an absolute floor, the test tolerance used
/// throughout: |a-b| ≤ max(abs_floor, rel·max(|a|,|b|)).
pub fn approx_eq_scalar(a: f64, b: f64, rel: f64, abs_floor: f64) -> bool {
    let diff = (a - b).abs();
    diff <= abs_floor.max(rel * a.abs().max(b.abs()))
}

pub fn tensors_close(a: &TensorValue, b: &TensorValue, rel: f64, abs_floor: f64) -> bool {
    if a.sizes != b.sizes {
        return false;
    }
    match (&a.data, &b.data) {
        (Data::I64(x), Data::I64(y)) => x == y,
        _ => {
            let n = a.len();
            (0..n).all(|i| {
                let (x, y) = match (&a.data, &b.data) {
                    (Data::F64(x), Data::F64(y)) => (x[i], y[i]),
                    (Data::F64(x), Data::I64(y)) => (x[i], y[i] as f64),
                    (Data::I64(x), Data::F64(y)) => (x[i] as f64, y[i]),
                    _ => unreachable!(),
                };
                approx_eq_scalar(x, y, rel, abs_floor)
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_index_innermost_first() {
        let t = TensorValue::from_f64(Datatype::Real, vec![2, 3], (0..6).map(|x| x as f64).collect())
            .unwrap();
        assert_eq!(t.get_f(&[1, 0]), 1.0);
        assert_eq!(t.get_f(&[0, 1]), 2.0);
        assert_eq!(t.get_f(&[1, 2]), 5.0);
    }

    #[test]
    fn dtype_checks() {
        assert!(TensorValue::from_i64(Datatype::Finite(3), vec![2], vec![0, 3]).is_err());
        assert!(TensorValue::from_i64(Datatype::Finite(3), vec![2], vec![0, 2]).is_ok());
        assert!(TensorValue::from_f64(Datatype::Int, vec![1], vec![1.0]).is_err());
        assert!(TensorValue::from_f64(Datatype::Real, vec![1], vec![f64::NAN]).is_err());
    }
}
