//! Dense row-major tensors.
//!
//! Every constructor and public kernel checks that the result is finite, so a
//! NaN or infinity surfaces as [`Error::NonFinite`] at the operation that
//! produced it instead of leaking into later computations.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<S> {
    shape: Vec<usize>,
    data: Vec<S>,
}

fn check_finite<S: Scalar>(data: &[S], what: &str) -> Result<()> {
    if data.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.to_string()))
    }
}

impl<S: Scalar> Tensor<S> {
    pub fn new(shape: Vec<usize>, data: Vec<S>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::Shape(format!(
                "shape {:?} holds {} elements, got {}",
                shape,
                n,
                data.len()
            )));
        }
        check_finite(&data, "Tensor::new")?;
        Ok(Self { shape, data })
    }

    /// Internal constructor for kernels that already uphold the invariants.
    pub(crate) fn from_parts(shape: Vec<usize>, data: Vec<S>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self { shape, data }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, S::zero())
    }

    pub fn full(shape: &[usize], value: S) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    pub fn scalar(value: S) -> Self {
        Self {
            shape: vec![],
            data: vec![value],
        }
    }

    pub fn eye(n: usize) -> Self {
        let mut t = Self::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = S::one();
        }
        t
    }

    pub fn from_f64(shape: &[usize], values: &[f64]) -> Result<Self> {
        Self::new(shape.to_vec(), values.iter().map(|&v| S::of(v)).collect())
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    /// Mutable view of the storage. Callers are responsible for keeping the
    /// elements finite; [`Tensor::ensure_finite`] re-checks.
    pub fn data_mut(&mut self) -> &mut [S] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<S> {
        self.data
    }

    pub fn ensure_finite(&self, what: &str) -> Result<()> {
        check_finite(&self.data, what)
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != self.data.len() {
            return Err(Error::Shape(format!(
                "cannot reshape {:?} into {:?}",
                self.shape, shape
            )));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn get(&self, index: &[usize]) -> Option<S> {
        if index.len() != self.shape.len() {
            return None;
        }
        let mut flat = 0;
        for (&i, &extent) in index.iter().zip(&self.shape) {
            if i >= extent {
                return None;
            }
            flat = flat * extent + i;
        }
        Some(self.data[flat])
    }

    fn same_shape(&self, other: &Self, op: &str) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::Shape(format!("{op}: {:?} vs {:?}", self.shape, other.shape)));
        }
        Ok(())
    }

    pub fn map(&self, f: impl Fn(S) -> S) -> Result<Self> {
        let data: Vec<S> = self.data.iter().map(|&x| f(x)).collect();
        check_finite(&data, "map")?;
        Ok(Self::from_parts(self.shape.clone(), data))
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(S, S) -> S) -> Result<Self> {
        self.same_shape(other, "zip_map")?;
        let data: Vec<S> = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        check_finite(&data, "zip_map")?;
        Ok(Self::from_parts(self.shape.clone(), data))
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn scale(&self, k: S) -> Result<Self> {
        self.map(|x| x * k)
    }

    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        self.same_shape(other, "add_assign")?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        check_finite(&self.data, "add_assign")
    }

    /// Sequential left-to-right sum.
    pub fn sum(&self) -> S {
        self.data.iter().fold(S::zero(), |acc, &x| acc + x)
    }

    pub fn sum_sq(&self) -> S {
        self.data.iter().fold(S::zero(), |acc, &x| acc + x * x)
    }

    pub fn norm(&self) -> S {
        self.sum_sq().sqrt()
    }

    pub fn dot(&self, other: &Self) -> Result<S> {
        self.same_shape(other, "dot")?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .fold(S::zero(), |acc, (&a, &b)| acc + a * b))
    }

    pub fn max_abs(&self) -> S {
        self.data
            .iter()
            .fold(S::zero(), |acc, &x| if x.abs() > acc { x.abs() } else { acc })
    }

    /// Matrix product of two rank-2 tensors.
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.rank() != 2 || other.rank() != 2 {
            return Err(Error::Shape(format!(
                "matmul needs rank-2 operands, got {:?} and {:?}",
                self.shape, other.shape
            )));
        }
        let (m, k) = (self.shape[0], self.shape[1]);
        let (k2, n) = (other.shape[0], other.shape[1]);
        if k != k2 {
            return Err(Error::Shape(format!("matmul inner extents {k} and {k2} differ")));
        }
        let mut out = vec![S::zero(); m * n];
        for i in 0..m {
            let row = &self.data[i * k..(i + 1) * k];
            let dst = &mut out[i * n..(i + 1) * n];
            for (p, &a) in row.iter().enumerate() {
                let src = &other.data[p * n..(p + 1) * n];
                for (d, &b) in dst.iter_mut().zip(src) {
                    *d += a * b;
                }
            }
        }
        check_finite(&out, "matmul")?;
        Ok(Self::from_parts(vec![m, n], out))
    }

    pub fn transpose(&self) -> Result<Self> {
        if self.rank() != 2 {
            return Err(Error::Shape(format!("transpose needs rank 2, got {:?}", self.shape)));
        }
        let (m, n) = (self.shape[0], self.shape[1]);
        let mut out = vec![S::zero(); m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = self.data[i * n + j];
            }
        }
        Ok(Self::from_parts(vec![n, m], out))
    }

    /// Arithmetic mean along `axis`; the axis is removed from the shape.
    pub fn reduce_mean(&self, axis: usize) -> Result<Self> {
        if axis >= self.rank() {
            return Err(Error::Invalid(format!(
                "axis {axis} out of range for rank {}",
                self.rank()
            )));
        }
        let extent = self.shape[axis];
        if extent == 0 {
            return Err(Error::Invalid(format!("axis {axis} has zero extent")));
        }
        let outer: usize = self.shape[..axis].iter().product();
        let inner: usize = self.shape[axis + 1..].iter().product();
        // Incremental mean, exact when every entry along the axis is equal.
        let mut out = vec![S::zero(); outer * inner];
        for o in 0..outer {
            for a in 0..extent {
                let base = (o * extent + a) * inner;
                let k = S::of_usize(a + 1);
                for i in 0..inner {
                    let m = &mut out[o * inner + i];
                    *m += (self.data[base + i] - *m) / k;
                }
            }
        }
        check_finite(&out, "reduce_mean")?;
        let mut shape = self.shape.clone();
        shape.remove(axis);
        Ok(Self::from_parts(shape, out))
    }

    /// Sub-tensor at `index` along the leading axis.
    pub fn slice0(&self, index: usize) -> Result<Self> {
        if self.rank() == 0 || index >= self.shape[0] {
            return Err(Error::Invalid(format!(
                "slice index {index} out of range for {:?}",
                self.shape
            )));
        }
        let inner: usize = self.shape[1..].iter().product();
        Ok(Self::from_parts(
            self.shape[1..].to_vec(),
            self.data[index * inner..(index + 1) * inner].to_vec(),
        ))
    }

    /// Stacks equally shaped tensors along a new leading axis.
    pub fn stack(items: &[Self]) -> Result<Self> {
        let first = items
            .first()
            .ok_or_else(|| Error::Invalid("stack of zero tensors".into()))?;
        let mut data = Vec::with_capacity(first.len() * items.len());
        for t in items {
            first.same_shape(t, "stack")?;
            data.extend_from_slice(&t.data);
        }
        let mut shape = vec![items.len()];
        shape.extend_from_slice(&first.shape);
        Ok(Self::from_parts(shape, data))
    }

    /// Picks entries `indices` along axis 1 of a rank-3 tensor, so
    /// `[T, B, F]` becomes `[T, indices.len(), F]`.
    pub fn select1(&self, indices: &[usize]) -> Result<Self> {
        if self.rank() != 3 {
            return Err(Error::Shape(format!("select1 needs rank 3, got {:?}", self.shape)));
        }
        let (t, b, f) = (self.shape[0], self.shape[1], self.shape[2]);
        if let Some(&bad) = indices.iter().find(|&&i| i >= b) {
            return Err(Error::Invalid(format!("index {bad} out of range for axis of {b}")));
        }
        let mut data = Vec::with_capacity(t * indices.len() * f);
        for step in 0..t {
            for &i in indices {
                let off = (step * b + i) * f;
                data.extend_from_slice(&self.data[off..off + f]);
            }
        }
        Ok(Self::from_parts(vec![t, indices.len(), f], data))
    }

    pub fn cast<T: Scalar>(&self) -> Tensor<T> {
        Tensor::from_parts(
            self.shape.clone(),
            self.data.iter().map(|x| T::of(x.to_f64_lossy())).collect(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    type T = Tensor<f64>;

    #[test]
    fn matmul_examples() {
        let a = T::from_f64(&[2, 2], &[1., 2., 3., 4.]).unwrap();
        assert_eq!(T::eye(2).matmul(&a).unwrap(), a);

        let row = T::from_f64(&[1, 2], &[1., 0.]).unwrap();
        let col = T::from_f64(&[2, 1], &[0., 5.]).unwrap();
        assert_eq!(row.matmul(&col).unwrap().data(), &[0.0]);

        let b = T::from_f64(&[2, 2], &[5., 6., 7., 8.]).unwrap();
        assert_eq!(a.matmul(&b).unwrap().data(), &[19., 22., 43., 50.]);
    }

    #[test]
    fn matmul_rejects_mismatch() {
        let a = T::zeros(&[2, 3]);
        let b = T::zeros(&[2, 3]);
        assert!(matches!(a.matmul(&b), Err(Error::Shape(_))));
    }

    #[test]
    fn reduce_mean_examples() {
        let a = T::from_f64(&[2, 2], &[1., 3., 5., 7.]).unwrap();
        assert_eq!(a.reduce_mean(0).unwrap().data(), &[3., 5.]);
        assert_eq!(a.reduce_mean(1).unwrap().data(), &[2., 6.]);

        let c = T::full(&[3], 0.1);
        assert_eq!(c.reduce_mean(0).unwrap().data(), &[0.1]);
        let s = T::from_f64(&[1], &[4.25]).unwrap();
        assert_eq!(s.reduce_mean(0).unwrap().data(), &[4.25]);
    }

    #[test]
    fn reduce_mean_errors() {
        let a = T::zeros(&[2, 2]);
        assert!(a.reduce_mean(2).is_err());
        let empty = T::zeros(&[0, 2]);
        assert!(empty.reduce_mean(0).is_err());
    }

    proptest::proptest! {
        #[test]
        fn reduce_mean_of_constant_is_exact(c in -1e6f64..1e6, n in 1usize..40, m in 1usize..5) {
            let t = T::full(&[n, m], c);
            proptest::prop_assert!(t.reduce_mean(0).unwrap().data().iter().all(|&x| x == c));
        }

        #[test]
        fn matmul_is_associative(seed in 0u64..1000, m in 1usize..5, k in 1usize..5, n in 1usize..5, p in 1usize..5) {
            let mut rng = crate::rng::Rng::new(seed);
            let a = crate::rng::seeded_normal(&mut rng, &[m, k], 0.0f64, 1.0).unwrap();
            let b = crate::rng::seeded_normal(&mut rng, &[k, n], 0.0, 1.0).unwrap();
            let c = crate::rng::seeded_normal(&mut rng, &[n, p], 0.0, 1.0).unwrap();
            let left = a.matmul(&b).unwrap().matmul(&c).unwrap();
            let right = a.matmul(&b.matmul(&c).unwrap()).unwrap();
            let scale: f64 = left.max_abs().max(1.0);
            for (x, y) in left.data().iter().zip(right.data()) {
                let (x, y): (f64, f64) = (*x, *y);
                proptest::prop_assert!((x - y).abs() <= 1e-9 * scale);
            }
        }
    }

    #[test]
    fn non_finite_is_rejected() {
        assert!(matches!(T::new(vec![2], vec![1.0, f64::NAN]), Err(Error::NonFinite(_))));
        let big = T::full(&[1, 1], 1e300);
        assert!(matches!(big.matmul(&big), Err(Error::NonFinite(_))));
        assert!(T::full(&[2], 1.0).map(|x| x / 0.0).is_err());
    }

    #[test]
    fn shape_product_checked() {
        assert!(T::new(vec![2, 2], vec![0.0; 3]).is_err());
        assert!(T::zeros(&[4]).reshape(&[2, 3]).is_err());
    }
}
