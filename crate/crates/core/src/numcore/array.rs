use crate::error::{Error, Result};

/// Dense row-major array of 64-bit reals.
///
/// The empty shape denotes a scalar holding one element.
#[derive(Clone, Debug, PartialEq)]
pub struct RealArray {
    shape: Vec<usize>,
    data: Vec<f64>,
}

fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl RealArray {
    /// Validating constructor: positive dims, matching length, finite entries.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.contains(&0) {
            return Err(Error::InvalidShape {
                shape,
                reason: "dimensions must be positive".into(),
            });
        }
        if numel(&shape) != data.len() {
            return Err(Error::InvalidShape {
                reason: format!("data length {} does not match", data.len()),
                shape,
            });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::OutOfRange(format!(
                "non-finite entry {} at flat index {i}",
                data[i]
            )));
        }
        Ok(Self { shape, data })
    }

    /// Unchecked constructor for values produced by internal arithmetic.
    pub(crate) fn from_parts(shape: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(numel(&shape), data.len());
        Self { shape, data }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        assert!(shape.iter().all(|&d| d > 0), "zero-sized dimension in {shape:?}");
        Self::from_parts(shape.to_vec(), vec![value; numel(shape)])
    }

    pub fn scalar(value: f64) -> Self {
        Self::from_parts(Vec::new(), vec![value])
    }

    pub fn from_vec(data: Vec<f64>) -> Self {
        assert!(!data.is_empty(), "empty vector");
        Self::from_parts(vec![data.len()], data)
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> f64) -> Self {
        let n = numel(shape);
        Self::from_parts(shape.to_vec(), (0..n).map(&mut f).collect())
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn ndim(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Value of a single-element array.
    pub fn item(&self) -> f64 {
        assert_eq!(self.data.len(), 1, "item() on array of shape {:?}", self.shape);
        self.data[0]
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Self> {
        if numel(shape) != self.data.len() || shape.contains(&0) {
            return Err(Error::ShapeMismatch {
                context: "reshape",
                expected: self.shape.clone(),
                actual: shape.to_vec(),
            });
        }
        Ok(Self::from_parts(shape.to_vec(), self.data.clone()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::from_parts(self.shape.clone(), self.data.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        assert_eq!(self.shape, other.shape, "zip_map shape mismatch");
        Self::from_parts(
            self.shape.clone(),
            self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        )
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn sum_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn check_shape(&self, context: &'static str, expected: &[usize]) -> Result<()> {
        if self.shape != expected {
            return Err(Error::ShapeMismatch {
                context,
                expected: expected.to_vec(),
                actual: self.shape.clone(),
            });
        }
        Ok(())
    }

    /// Dense 2-D product `self (m x k) * rhs (k x n)`.
    pub fn matmul(&self, rhs: &Self) -> Self {
        assert!(self.ndim() == 2 && rhs.ndim() == 2, "matmul needs 2-D operands");
        let (m, k) = (self.shape[0], self.shape[1]);
        let (k2, n) = (rhs.shape[0], rhs.shape[1]);
        assert_eq!(k, k2, "matmul inner dims {:?} x {:?}", self.shape, rhs.shape);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let row = &mut out[i * n..(i + 1) * n];
            for p in 0..k {
                let a = self.data[i * k + p];
                if a == 0.0 {
                    continue;
                }
                let b = &rhs.data[p * n..(p + 1) * n];
                for (o, &bv) in row.iter_mut().zip(b) {
                    *o += a * bv;
                }
            }
        }
        Self::from_parts(vec![m, n], out)
    }

    pub fn transpose(&self) -> Self {
        assert_eq!(self.ndim(), 2, "transpose needs a 2-D array");
        let (m, n) = (self.shape[0], self.shape[1]);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = self.data[i * n + j];
            }
        }
        Self::from_parts(vec![n, m], out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constructor_rejects_bad_input() {
        assert!(RealArray::new(vec![2, 2], vec![1.0; 3]).is_err());
        assert!(RealArray::new(vec![0, 2], vec![]).is_err());
        assert!(RealArray::new(vec![2], vec![1.0, f64::NAN]).is_err());
        assert!(RealArray::new(vec![2], vec![1.0, f64::INFINITY]).is_err());
        assert!(RealArray::new(vec![], vec![3.0]).is_ok());
    }

    #[test]
    fn matmul_small() {
        let a = RealArray::new(vec![2, 3], vec![1., 2., 3., 4., 5., 6.]).unwrap();
        let b = RealArray::new(vec![3, 2], vec![7., 8., 9., 10., 11., 12.]).unwrap();
        assert_eq!(a.matmul(&b).data(), &[58., 64., 139., 154.]);
        assert_eq!(a.transpose().shape(), &[3, 2]);
        assert_eq!(a.transpose().data(), &[1., 4., 2., 5., 3., 6.]);
    }

    #[test]
    fn reshape_preserves_data() {
        let a = RealArray::from_fn(&[2, 3], |i| i as f64);
        let b = a.reshape(&[3, 2]).unwrap();
        assert_eq!(a.data(), b.data());
        assert!(a.reshape(&[4]).is_err());
    }
}
