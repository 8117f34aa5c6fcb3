use crate::elem::Elem;
use crate::error::{NumericsError, Result};

/// Dense row-major array. Rank is dynamic; most ops expect rank 1..4.
#[derive(Debug, Clone, PartialEq)]
pub struct Array<E> {
    shape: Vec<usize>,
    data: Vec<E>,
    /// Leaf arrays with this flag set collect gradients when placed on a tape.
    pub requires_grad: bool,
}

impl<E: Elem> Array<E> {
    pub fn new(shape: Vec<usize>, data: Vec<E>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(NumericsError::Shape {
                op: "Array::new",
                detail: format!("shape {:?} wants {} elements, got {}", shape, numel, data.len()),
            });
        }
        Ok(Self { shape, data, requires_grad: false })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let numel = shape.iter().product();
        Self { shape, data: vec![E::zero(); numel], requires_grad: false }
    }

    pub fn full(shape: Vec<usize>, v: E) -> Self {
        let numel = shape.iter().product();
        Self { shape, data: vec![v; numel], requires_grad: false }
    }

    pub fn scalar(v: E) -> Self {
        Self { shape: vec![1], data: vec![v], requires_grad: false }
    }

    pub fn from_fn(shape: Vec<usize>, mut f: impl FnMut(usize) -> E) -> Self {
        let numel: usize = shape.iter().product();
        let data = (0..numel).map(&mut f).collect();
        Self { shape, data, requires_grad: false }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[E] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [E] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<E> {
        self.data
    }

    /// Single element of a rank-1 array of length 1.
    pub fn item(&self) -> E {
        debug_assert_eq!(self.numel(), 1);
        self.data[0]
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    /// Row `i` of a rank-2 array.
    pub fn row(&self, i: usize) -> &[E] {
        let d = self.shape[1];
        &self.data[i * d..(i + 1) * d]
    }

    pub fn at2(&self, i: usize, j: usize) -> E {
        self.data[i * self.shape[1] + j]
    }

    pub fn at3(&self, c: usize, y: usize, x: usize) -> E {
        let (h, w) = (self.shape[1], self.shape[2]);
        self.data[(c * h + y) * w + x]
    }

    pub fn set3(&mut self, c: usize, y: usize, x: usize, v: E) {
        let (h, w) = (self.shape[1], self.shape[2]);
        self.data[(c * h + y) * w + x] = v;
    }

    pub fn reshaped(mut self, shape: Vec<usize>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != self.data.len() {
            return Err(NumericsError::Shape {
                op: "Array::reshaped",
                detail: format!("cannot view {} elements as {:?}", self.data.len(), shape),
            });
        }
        self.shape = shape;
        Ok(self)
    }

    pub fn map(&self, f: impl Fn(E) -> E) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
            requires_grad: false,
        }
    }

    /// Index of the first non-finite element, if any.
    pub fn first_non_finite(&self) -> Option<usize> {
        self.data.iter().position(|v| !v.is_finite())
    }

    pub fn to_f64(&self) -> Array<f64> {
        Array {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| Elem::to_f64(v)).collect(),
            requires_grad: self.requires_grad,
        }
    }

    pub fn to_f32(&self) -> Array<f32> {
        Array {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| Elem::to_f64(v) as f32).collect(),
            requires_grad: self.requires_grad,
        }
    }
}
