use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Dense row-major array with an optional gradient buffer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
    #[serde(skip)]
    grad: Option<Vec<T>>,
    #[serde(skip)]
    requires_grad: bool,
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        if shape.is_empty() || shape.iter().any(|&d| d == 0) {
            return Err(Error::dim("tensor", &shape, &[data.len()]));
        }
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::dim("tensor", &shape, &[data.len()]));
        }
        Ok(Tensor {
            shape,
            data,
            grad: None,
            requires_grad: false,
        })
    }

    pub fn zeros(shape: Vec<usize>) -> Result<Self> {
        let n = shape.iter().product();
        Tensor::new(shape, vec![T::zero(); n])
    }

    pub fn filled(shape: Vec<usize>, value: T) -> Result<Self> {
        let n = shape.iter().product();
        Tensor::new(shape, vec![value; n])
    }

    pub fn scalar(value: T) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![value],
            grad: None,
            requires_grad: false,
        }
    }

    /// Builds a 2-D tensor from equal-length rows.
    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::Data("ragged rows".into()));
        }
        Tensor::new(vec![r, c], rows.concat())
    }

    pub fn eye(n: usize) -> Result<Self> {
        let mut t = Tensor::zeros(vec![n, n])?;
        for i in 0..n {
            t.data[i * n + i] = T::one();
        }
        Ok(t)
    }

    pub fn with_requires_grad(mut self, flag: bool) -> Self {
        self.requires_grad = flag;
        self
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }

    pub fn set_requires_grad(&mut self, flag: bool) {
        self.requires_grad = flag;
    }

    pub fn grad(&self) -> Option<&[T]> {
        self.grad.as_deref()
    }

    /// Installs a gradient buffer; it must match the value's length.
    pub fn set_grad(&mut self, grad: Vec<T>) -> Result<()> {
        if grad.len() != self.data.len() {
            return Err(Error::dim("set_grad", &self.shape, &[grad.len()]));
        }
        self.grad = Some(grad);
        Ok(())
    }

    pub fn clear_grad(&mut self) {
        self.grad = None;
    }

    /// Rows and columns of a matrix; vectors count as a single row.
    pub fn dims2(&self) -> (usize, usize) {
        match self.shape.as_slice() {
            [n] => (1, *n),
            [r, c] => (*r, *c),
            s => (s[..s.len() - 1].iter().product(), s[s.len() - 1]),
        }
    }

    pub fn at(&self, row: usize, col: usize) -> T {
        let (_, c) = self.dims2();
        self.data[row * c + col]
    }

    pub fn row(&self, row: usize) -> &[T] {
        let (_, c) = self.dims2();
        &self.data[row * c..(row + 1) * c]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Converts element type, e.g. to run an `f32` model's weights in `f64`.
    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| U::lit(v.as_f64())).collect(),
            grad: None,
            requires_grad: self.requires_grad,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_must_match_data() {
        assert!(Tensor::<f64>::new(vec![2, 3], vec![0.0; 5]).is_err());
        assert!(Tensor::<f64>::new(vec![0, 3], vec![]).is_err());
        let t = Tensor::<f64>::new(vec![2, 3], vec![0.0; 6]).unwrap();
        assert_eq!(t.dims2(), (2, 3));
    }

    #[test]
    fn grad_shape_is_checked() {
        let mut t = Tensor::<f32>::zeros(vec![2, 2]).unwrap();
        assert!(t.set_grad(vec![0.0; 3]).is_err());
        t.set_grad(vec![1.0; 4]).unwrap();
        assert_eq!(t.grad().unwrap().len(), 4);
    }
}
