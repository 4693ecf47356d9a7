use super::Real;
use crate::{DriveError, Result};

/// Dense row-major array. The shape product always equals the data length.
#[derive(Clone, Debug, PartialEq)]
pub struct NdArray<R> {
    shape: Vec<usize>,
    data: Vec<R>,
}

impl<R: Real> NdArray<R> {
    pub fn zeros(shape: &[usize]) -> Self {
        let n: usize = shape.iter().product();
        NdArray { shape: shape.to_vec(), data: vec![R::zero(); n] }
    }

    pub fn full(shape: &[usize], v: R) -> Self {
        let n: usize = shape.iter().product();
        NdArray { shape: shape.to_vec(), data: vec![v; n] }
    }

    pub fn scalar(v: R) -> Self {
        NdArray { shape: vec![], data: vec![v] }
    }

    pub fn from_vec(shape: &[usize], data: Vec<R>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(DriveError::contract(format!(
                "shape {:?} implies {} elements, got {}",
                shape,
                n,
                data.len()
            )));
        }
        Ok(NdArray { shape: shape.to_vec(), data })
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> R) -> Self {
        let n: usize = shape.iter().product();
        NdArray { shape: shape.to_vec(), data: (0..n).map(|i| f(i)).collect() }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[R] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [R] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<R> {
        self.data
    }

    /// Single-element readout; panics unless the array holds exactly one value.
    pub fn item(&self) -> R {
        assert_eq!(self.data.len(), 1, "item() on array of len {}", self.data.len());
        self.data[0]
    }

    /// Row count of a 2-d array (or 1 for scalars/vectors).
    pub fn rows(&self) -> usize {
        if self.shape.len() < 2 {
            1
        } else {
            self.shape[0]
        }
    }

    /// Column count of a 2-d array (or its length for vectors).
    pub fn cols(&self) -> usize {
        match self.shape.len() {
            0 => 1,
            1 => self.shape[0],
            _ => self.shape[1..].iter().product(),
        }
    }

    pub fn row(&self, i: usize) -> &[R] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [R] {
        let c = self.cols();
        &mut self.data[i * c..(i + 1) * c]
    }

    pub fn at2(&self, i: usize, j: usize) -> R {
        self.data[i * self.cols() + j]
    }

    pub fn set2(&mut self, i: usize, j: usize, v: R) {
        let c = self.cols();
        self.data[i * c + j] = v;
    }

    pub fn map(&self, f: impl Fn(R) -> R) -> Self {
        NdArray { shape: self.shape.clone(), data: self.data.iter().map(|&x| f(x)).collect() }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(R, R) -> R) -> Self {
        assert_eq!(self.shape, other.shape, "zip_map shape mismatch");
        NdArray {
            shape: self.shape.clone(),
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    pub fn add_in_place(&mut self, other: &Self) {
        assert_eq!(self.shape, other.shape, "add_in_place shape mismatch");
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn scale_in_place(&mut self, s: R) {
        for a in self.data.iter_mut() {
            *a *= s;
        }
    }

    pub fn fill(&mut self, v: R) {
        self.data.iter_mut().for_each(|a| *a = v);
    }

    pub fn sum(&self) -> R {
        let mut s = R::zero();
        for &v in &self.data {
            s += v;
        }
        s
    }

    pub fn sum_sq(&self) -> R {
        let mut s = R::zero();
        for &v in &self.data {
            s += v * v;
        }
        s
    }

    /// Transpose of a 2-d array.
    pub fn transpose2(&self) -> Self {
        assert_eq!(self.shape.len(), 2, "transpose2 needs a 2-d array");
        let (m, n) = (self.shape[0], self.shape[1]);
        let mut out = NdArray::zeros(&[n, m]);
        for i in 0..m {
            for j in 0..n {
                out.data[j * m + i] = self.data[i * n + j];
            }
        }
        out
    }

    pub fn cast<T: Real>(&self) -> NdArray<T> {
        NdArray { shape: self.shape.clone(), data: self.data.iter().map(|v| T::of(v.as_f64())).collect() }
    }

    pub fn check_finite(&self, what: &str) -> Result<()> {
        for &v in &self.data {
            if !v.is_finite() {
                return Err(DriveError::Numeric(format!("non-finite value in {what}")));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_data_invariant() {
        assert!(NdArray::<f64>::from_vec(&[2, 3], vec![0.0; 6]).is_ok());
        assert!(NdArray::<f64>::from_vec(&[2, 3], vec![0.0; 5]).is_err());
    }

    #[test]
    fn transpose_roundtrip() {
        let a = NdArray::<f64>::from_fn(&[3, 4], |i| i as f64);
        let b = a.transpose2().transpose2();
        assert_eq!(a, b);
    }

    #[test]
    fn finite_check_detects_nan() {
        let mut a = NdArray::<f32>::zeros(&[4]);
        assert!(a.check_finite("x").is_ok());
        a.data_mut()[2] = f32::NAN;
        assert!(a.check_finite("x").is_err());
    }
}
