use std::fmt;
use std::sync::Arc;

use super::NumericsError;

/// Dense row-major f32 array.
///
/// Storage is reference counted so parameters can be placed on many tapes
/// without copying; mutation goes through [`Tensor::data_mut`], which
/// detaches shared storage first.
#[derive(Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Arc<Vec<f32>>,
}

impl Tensor {
    /// Builds a tensor, rejecting length mismatches and non-finite values.
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self, NumericsError> {
        if shape.contains(&0) {
            return Err(NumericsError::InvalidShape { shape });
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(NumericsError::LengthMismatch {
                shape,
                len: data.len(),
            });
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(NumericsError::NonFinite {
                context: format!("tensor construction (element {pos})"),
            });
        }
        Ok(Self {
            shape,
            data: Arc::new(data),
        })
    }

    /// Internal constructor for op outputs whose length is correct by
    /// construction. Finiteness is checked by the caller.
    pub(crate) fn from_parts(shape: Vec<usize>, data: Vec<f32>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self {
            shape,
            data: Arc::new(data),
        }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self::from_parts(shape.to_vec(), vec![0.0; n])
    }

    pub fn full(shape: &[usize], value: f32) -> Self {
        let n = shape.iter().product();
        Self::from_parts(shape.to_vec(), vec![value; n])
    }

    pub fn scalar(value: f32) -> Self {
        Self::from_parts(Vec::new(), vec![value])
    }

    /// Rank-1 tensor.
    pub fn vector(data: Vec<f32>) -> Result<Self, NumericsError> {
        Self::new(vec![data.len()], data)
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

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// Mutable access; clones the storage if it is currently shared.
    pub fn data_mut(&mut self) -> &mut [f32] {
        Arc::make_mut(&mut self.data).as_mut_slice()
    }

    pub fn into_vec(self) -> Vec<f32> {
        Arc::try_unwrap(self.data).unwrap_or_else(|shared| (*shared).clone())
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> f32 {
        assert_eq!(self.data.len(), 1, "item() on tensor of shape {:?}", self.shape);
        self.data[0]
    }

    /// True when both tensors share the same storage allocation.
    pub fn shares_storage(&self, other: &Tensor) -> bool {
        Arc::ptr_eq(&self.data, &other.data)
    }

    /// Same data viewed with a different shape.
    pub fn reshaped(&self, shape: &[usize]) -> Result<Self, NumericsError> {
        let n: usize = shape.iter().product();
        if n != self.len() || shape.contains(&0) {
            return Err(NumericsError::ShapeMismatch {
                op: "reshape",
                lhs: self.shape.clone(),
                rhs: shape.to_vec(),
            });
        }
        Ok(Self {
            shape: shape.to_vec(),
            data: Arc::clone(&self.data),
        })
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Bitwise equality, distinguishing e.g. `0.0` from `-0.0`.
    pub fn bit_eq(&self, other: &Tensor) -> bool {
        self.shape == other.shape
            && self
                .data
                .iter()
                .zip(other.data.iter())
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }

    pub fn l2_norm(&self) -> f32 {
        self.data
            .iter()
            .map(|&v| f64::from(v) * f64::from(v))
            .sum::<f64>()
            .sqrt() as f32
    }
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        const PREVIEW: usize = 8;
        write!(f, "Tensor{:?} ", self.shape)?;
        if self.data.len() <= PREVIEW {
            write!(f, "{:?}", &self.data[..])
        } else {
            write!(f, "{:?}..", &self.data[..PREVIEW])
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_length_and_nan() {
        assert!(matches!(
            Tensor::new(vec![2, 2], vec![0.0; 3]),
            Err(NumericsError::LengthMismatch { .. })
        ));
        assert!(matches!(
            Tensor::new(vec![2], vec![0.0, f32::NAN]),
            Err(NumericsError::NonFinite { .. })
        ));
        assert!(Tensor::new(vec![0], vec![]).is_err());
    }

    #[test]
    fn scalar_has_empty_shape() {
        let s = Tensor::scalar(2.5);
        assert_eq!(s.shape(), &[] as &[usize]);
        assert_eq!(s.item(), 2.5);
    }

    #[test]
    fn data_mut_detaches_shared_storage() {
        let a = Tensor::zeros(&[3]);
        let mut b = a.clone();
        assert!(a.shares_storage(&b));
        b.data_mut()[0] = 1.0;
        assert!(!a.shares_storage(&b));
        assert_eq!(a.data()[0], 0.0);
    }
}
