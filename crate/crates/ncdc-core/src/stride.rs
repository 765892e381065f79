//! The axis-stride category St: axes, shapes, and affine maps between
//! coordinate spaces.
//!
//! An affine stride map sends a coordinate tuple (a_i) of its domain shape to
//! the tuple with j-th entry v_j + Σ_i a_i·Λ_ij. Entries are naturals; there
//! are no negative strides. The capture condition (the image fits inside the
//! codomain sizes) is checked whenever all involved axes carry sizes, which
//! may only happen at configuration time.

use crate::error::{Error, Result};
use crate::remapping::Remapping;
use crate::uid::Uid;

/// A named index dimension. `size == None` means the axis is still FREE.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Axis {
    pub uid: Uid,
    pub name: String,
    pub size: Option<u64>,
}

impl Axis {
    pub fn fresh(name: &str, size: Option<u64>) -> Axis {
        Axis { uid: Uid::fresh(), name: name.to_string(), size }
    }

    pub fn sized(name: &str, size: u64) -> Axis {
        Axis::fresh(name, Some(size))
    }

    pub fn free(name: &str) -> Axis {
        Axis::fresh(name, None)
    }

    pub fn size_or_err(&self) -> Result<u64> {
        self.size.ok_or_else(|| {
            Error::Configuration(format!("axis {} ({}) has no size", self.name, self.uid))
        })
    }
}

/// A finite product of axes. Slot 0 is the innermost axis, the one nearest
/// the base datatype; batch axes are appended at the end.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Default)]
pub struct Shape(pub Vec<Axis>);

impl Shape {
    pub fn unit() -> Shape {
        Shape(Vec::new())
    }

    pub fn rank(&self) -> usize {
        self.0.len()
    }

    pub fn sizes(&self) -> Result<Vec<u64>> {
        self.0.iter().map(Axis::size_or_err).collect()
    }

    pub fn element_count(&self) -> Result<u64> {
        let mut n: u64 = 1;
        for s in self.sizes()? {
            n = n.checked_mul(s).ok_or(Error::Overflow("shape element count"))?;
        }
        Ok(n)
    }

    pub fn extend(&self, extra: &Shape) -> Shape {
        let mut axes = self.0.clone();
        axes.extend(extra.0.iter().cloned());
        Shape(axes)
    }

    pub fn same_axes(&self, other: &Shape) -> bool {
        self.0.len() == other.0.len()
            && self.0.iter().zip(&other.0).all(|(a, b)| a.uid == b.uid)
    }

    /// Iterates every coordinate tuple, innermost slot varying fastest (the
    /// flat-index order of TensorValue). The empty shape yields exactly the
    /// empty coordinate.
    pub fn elements(&self) -> Result<Vec<Vec<u64>>> {
        let sizes = self.sizes()?;
        let count = self.element_count()? as usize;
        let mut out = Vec::with_capacity(count);
        for idx in 0..count as u64 {
            let mut rest = idx;
            let mut c = Vec::with_capacity(sizes.len());
            for &s in &sizes {
                c.push(rest % s);
                rest /= s;
            }
            out.push(c);
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct AffineStrideMap {
    pub dom: Shape,
    pub cod: Shape,
    /// One row per domain axis, one column per codomain axis.
    pub lambda: Vec<Vec<u64>>,
    /// One entry per codomain axis.
    pub offset: Vec<u64>,
}

impl AffineStrideMap {
    pub fn new(dom: Shape, cod: Shape, lambda: Vec<Vec<u64>>, offset: Vec<u64>) -> Result<AffineStrideMap> {
        if lambda.len() != dom.rank() {
            return Err(Error::Domain(format!(
                "stride matrix has {} rows for a rank-{} domain",
                lambda.len(),
                dom.rank()
            )));
        }
        for row in &lambda {
            if row.len() != cod.rank() {
                return Err(Error::Domain(format!(
                    "stride matrix row has {} columns for a rank-{} codomain",
                    row.len(),
                    cod.rank()
                )));
            }
        }
        if offset.len() != cod.rank() {
            return Err(Error::Domain(format!(
                "offset vector has {} entries for a rank-{} codomain",
                offset.len(),
                cod.rank()
            )));
        }
        Ok(AffineStrideMap { dom, cod, lambda, offset })
    }

    pub fn identity(shape: Shape) -> AffineStrideMap {
        let n = shape.rank();
        let lambda = (0..n)
            .map(|i| (0..n).map(|j| u64::from(i == j)).collect())
            .collect();
        AffineStrideMap { dom: shape.clone(), cod: shape, lambda, offset: vec![0; n] }
    }

    pub fn is_identity(&self) -> bool {
        self.dom.same_axes(&self.cod)
            && self.offset.iter().all(|&v| v == 0)
            && self
                .lambda
                .iter()
                .enumerate()
                .all(|(i, row)| row.iter().enumerate().all(|(j, &x)| x == u64::from(i == j)))
    }

    /// The element 𝟙 → shape at a fixed coordinate.
    pub fn element(shape: Shape, coord: &[u64]) -> Result<AffineStrideMap> {
        let sizes = shape.sizes()?;
        if coord.len() != sizes.len() || coord.iter().zip(&sizes).any(|(&c, &s)| c >= s) {
            return Err(Error::Domain(format!("coordinate {coord:?} outside shape sizes {sizes:?}")));
        }
        Ok(AffineStrideMap { dom: Shape::unit(), cod: shape, lambda: Vec::new(), offset: coord.to_vec() })
    }

    /// i ↦ i + t into a fresh axis of size `m`. Capture needs n + t ≤ m.
    pub fn translation(axis: &Axis, t: u64, m: u64) -> Result<AffineStrideMap> {
        let n = axis.size_or_err()?;
        if n + t > m {
            return Err(Error::Capture(format!(
                "translating a size-{n} axis by {t} does not fit in size {m}"
            )));
        }
        let target = Axis::sized(&format!("{}+{}", axis.name, t), m);
        Ok(AffineStrideMap {
            dom: Shape(vec![axis.clone()]),
            cod: Shape(vec![target]),
            lambda: vec![vec![1]],
            offset: vec![t],
        })
    }

    /// The coordinate permutation/copy/deletion induced by a remapping:
    /// Π A_i → Π A_{r(j)} with Λ_ij = 1 iff r(j) = i.
    pub fn from_remapping(r: &Remapping, dom_family: &[Axis]) -> Result<AffineStrideMap> {
        if r.cod_size() != dom_family.len() {
            return Err(Error::Domain(format!(
                "remapping expects {} source axes, family has {}",
                r.cod_size(),
                dom_family.len()
            )));
        }
        let cod: Vec<Axis> = r.targets().iter().map(|&t| dom_family[t].clone()).collect();
        let lambda = (0..dom_family.len())
            .map(|i| r.targets().iter().map(|&t| u64::from(t == i)).collect())
            .collect();
        Ok(AffineStrideMap {
            dom: Shape(dom_family.to_vec()),
            cod: Shape(cod),
            lambda,
            offset: vec![0; r.dom_size()],
        })
    }

    pub fn apply_element(&self, coord: &[u64]) -> Result<Vec<u64>> {
        let dom_sizes = self.dom.sizes()?;
        if coord.len() != dom_sizes.len() || coord.iter().zip(&dom_sizes).any(|(&c, &s)| c >= s) {
            return Err(Error::Domain(format!(
                "coordinate {coord:?} outside domain sizes {dom_sizes:?}"
            )));
        }
        let mut out = self.offset.clone();
        for (i, &a) in coord.iter().enumerate() {
            for (j, o) in out.iter_mut().enumerate() {
                *o += a * self.lambda[i][j];
            }
        }
        Ok(out)
    }

    pub fn compose(first: &AffineStrideMap, then: &AffineStrideMap) -> Result<AffineStrideMap> {
        if !first.cod.same_axes(&then.dom) {
            return Err(Error::Composition(
                "stride maps do not meet: codomain axes differ from domain axes".into(),
            ));
        }
        let rows = first.dom.rank();
        let cols = then.cod.rank();
        let mid = then.dom.rank();
        let mut lambda = vec![vec![0u64; cols]; rows];
        for i in 0..rows {
            for j in 0..cols {
                for k in 0..mid {
                    lambda[i][j] += first.lambda[i][k] * then.lambda[k][j];
                }
            }
        }
        let mut offset = then.offset.clone();
        for k in 0..mid {
            for (j, o) in offset.iter_mut().enumerate() {
                *o += first.offset[k] * then.lambda[k][j];
            }
        }
        Ok(AffineStrideMap { dom: first.dom.clone(), cod: then.cod.clone(), lambda, offset })
    }

    /// Block sum with the identity on `extra`: acts as `self` on the first
    /// slots and passes the extra coordinates through unchanged.
    pub fn tensor_identity(&self, extra: &Shape) -> AffineStrideMap {
        let dom = self.dom.extend(extra);
        let cod = self.cod.extend(extra);
        let (r0, c0) = (self.dom.rank(), self.cod.rank());
        let e = extra.rank();
        let mut lambda = vec![vec![0u64; c0 + e]; r0 + e];
        for i in 0..r0 {
            lambda[i][..c0].copy_from_slice(&self.lambda[i]);
        }
        for k in 0..e {
            lambda[r0 + k][c0 + k] = 1;
        }
        let mut offset = self.offset.clone();
        offset.extend(std::iter::repeat(0).take(e));
        AffineStrideMap { dom, cod, lambda, offset }
    }

    /// Errors unless the image provably fits in the codomain. Skipped (Ok)
    /// while any involved axis is still FREE.
    pub fn check_capture(&self) -> Result<()> {
        let (Ok(dom_sizes), Ok(cod_sizes)) = (self.dom.sizes(), self.cod.sizes()) else {
            return Ok(());
        };
        for j in 0..cod_sizes.len() {
            let mut max = self.offset[j];
            for (i, &s) in dom_sizes.iter().enumerate() {
                max = max
                    .checked_add((s - 1).checked_mul(self.lambda[i][j]).ok_or(Error::Overflow("stride"))?)
                    .ok_or(Error::Overflow("stride"))?;
            }
            if max > cod_sizes[j] - 1 {
                return Err(Error::Capture(format!(
                    "output slot {j} ({}) reaches {max} but the axis has size {}",
                    self.cod.0[j].name, cod_sizes[j]
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn axis(name: &str, size: u64) -> Axis {
        Axis::sized(name, size)
    }

    #[test]
    fn apply_examples() {
        // addition map x'⊗k → x
        let add = AffineStrideMap::new(
            Shape(vec![axis("x'", 3), axis("k", 2)]),
            Shape(vec![axis("x", 4)]),
            vec![vec![1], vec![1]],
            vec![0],
        )
        .unwrap();
        add.check_capture().unwrap();
        assert_eq!(add.apply_element(&[2, 1]).unwrap(), vec![3]);

        let id = AffineStrideMap::identity(Shape(vec![axis("a", 2), axis("b", 3)]));
        assert_eq!(id.apply_element(&[1, 2]).unwrap(), vec![1, 2]);

        // diagonal p ↦ (p, p)
        let p = axis("p", 3);
        let diag = AffineStrideMap::new(
            Shape(vec![p.clone()]),
            Shape(vec![p.clone(), p.clone()]),
            vec![vec![1, 1]],
            vec![0, 0],
        )
        .unwrap();
        assert_eq!(diag.apply_element(&[2]).unwrap(), vec![2, 2]);
    }

    #[test]
    fn compose_matches_sequential_application() {
        let mid = Shape(vec![axis("m", 4)]);
        let shift = AffineStrideMap::new(
            Shape(vec![axis("a", 3)]),
            mid.clone(),
            vec![vec![1]],
            vec![1],
        )
        .unwrap();
        let scale = AffineStrideMap::new(mid, Shape(vec![axis("b", 9)]), vec![vec![2]], vec![0]).unwrap();
        let c = AffineStrideMap::compose(&shift, &scale).unwrap();
        assert_eq!(c.lambda, vec![vec![2]]);
        assert_eq!(c.offset, vec![2]);
        c.check_capture().unwrap();
        for e in c.dom.elements().unwrap() {
            assert_eq!(
                c.apply_element(&e).unwrap(),
                scale.apply_element(&shift.apply_element(&e).unwrap()).unwrap()
            );
        }
        let id = AffineStrideMap::identity(c.cod.clone());
        assert_eq!(AffineStrideMap::compose(&c, &id).unwrap(), c);
    }

    #[test]
    fn from_remapping_examples() {
        let fam = [axis("a", 2), axis("b", 3)];
        let swap = AffineStrideMap::from_remapping(&Remapping::new(vec![1, 0], 2).unwrap(), &fam).unwrap();
        for a in 0..2 {
            for b in 0..3 {
                assert_eq!(swap.apply_element(&[a, b]).unwrap(), vec![b, a]);
            }
        }
        let p = [axis("p", 3)];
        let diag = AffineStrideMap::from_remapping(&Remapping::copy(2), &p).unwrap();
        assert_eq!(diag.apply_element(&[2]).unwrap(), vec![2, 2]);
        let del = AffineStrideMap::from_remapping(&Remapping::copy(0), &p).unwrap();
        assert_eq!(del.apply_element(&[1]).unwrap(), Vec::<u64>::new());
    }

    #[test]
    fn from_remapping_is_functorial() {
        // exhaustively over small remappings and sizes ≤ 6
        let fam = [axis("a", 2), axis("b", 3), axis("c", 6)];
        let all = |dom: usize, cod: usize| -> Vec<Remapping> {
            let mut out = Vec::new();
            for mut n in 0..cod.pow(dom as u32) {
                let mut t = Vec::new();
                for _ in 0..dom {
                    t.push(n % cod);
                    n /= cod;
                }
                out.push(Remapping::new(t, cod).unwrap());
            }
            out
        };
        for a in all(2, 3) {
            let fa = AffineStrideMap::from_remapping(&a, &fam).unwrap();
            let mid: Vec<Axis> = fa.cod.0.clone();
            for b in all(2, 2) {
                let fb = AffineStrideMap::from_remapping(&b, &mid).unwrap();
                let composed_remapping = Remapping::compose(&a, &b).unwrap();
                let direct = AffineStrideMap::from_remapping(&composed_remapping, &fam).unwrap();
                let via = AffineStrideMap::compose(&fa, &fb).unwrap();
                for e in direct.dom.elements().unwrap() {
                    assert_eq!(direct.apply_element(&e).unwrap(), via.apply_element(&e).unwrap());
                }
            }
        }
    }

    #[test]
    fn translation_examples() {
        let t = AffineStrideMap::translation(&axis("x", 3), 1, 4).unwrap();
        assert_eq!(t.apply_element(&[2]).unwrap(), vec![3]);
        let id_like = AffineStrideMap::translation(&axis("x", 3), 0, 3).unwrap();
        assert_eq!(id_like.apply_element(&[1]).unwrap(), vec![1]);
        assert!(AffineStrideMap::translation(&axis("x", 2), 3, 4).is_err());
    }

    #[test]
    fn element_examples() {
        let e = AffineStrideMap::element(Shape(vec![axis("a", 4)]), &[2]).unwrap();
        assert_eq!(e.apply_element(&[]).unwrap(), vec![2]);
        let u = AffineStrideMap::element(Shape::unit(), &[]).unwrap();
        assert_eq!(u.apply_element(&[]).unwrap(), Vec::<u64>::new());
        let e2 = AffineStrideMap::element(Shape(vec![axis("a", 2), axis("b", 3)]), &[1, 2]).unwrap();
        assert_eq!(e2.offset, vec![1, 2]);
        assert!(AffineStrideMap::element(Shape(vec![axis("a", 2)]), &[2]).is_err());

        // elements compose: element(A,a) ; η == element(B, η(a))
        let eta = AffineStrideMap::new(
            Shape(vec![axis("a", 4)]),
            Shape(vec![axis("b", 9)]),
            vec![vec![2]],
            vec![1],
        )
        .unwrap();
        let src = AffineStrideMap::element(eta.dom.clone(), &[2]).unwrap();
        let via = AffineStrideMap::compose(&src, &eta).unwrap();
        assert_eq!(via.offset, eta.apply_element(&[2]).unwrap());
    }

    #[test]
    fn capture_checked_on_composition_results() {
        let m = axis("m", 3);
        let a = AffineStrideMap::new(
            Shape(vec![axis("a", 3)]),
            Shape(vec![m.clone()]),
            vec![vec![1]],
            vec![0],
        )
        .unwrap();
        let b = AffineStrideMap::new(
            Shape(vec![m]),
            Shape(vec![axis("b", 7)]),
            vec![vec![3]],
            vec![0],
        )
        .unwrap();
        // b alone fails capture against its own codomain? 2*3=6 ≤ 6 fine
        b.check_capture().unwrap();
        let mut c = AffineStrideMap::compose(&a, &b).unwrap();
        c.check_capture().unwrap();
        c.cod.0[0].size = Some(6);
        assert!(c.check_capture().is_err());
    }
}
