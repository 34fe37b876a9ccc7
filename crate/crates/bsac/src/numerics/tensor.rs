use crate::rng::Stream;

use super::{NumericsError, Result};

/// Dense n-dimensional array of f64 in row-major order, with an optional
/// gradient slot populated by the tape.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
    pub requires_grad: bool,
    pub grad: Option<Vec<f64>>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(NumericsError::Dimension {
                op: "Tensor::new",
                detail: format!("shape {:?} needs {} elements, got {}", shape, numel, data.len()),
            });
        }
        Ok(Tensor { shape, data, requires_grad: false, grad: None })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let numel = shape.iter().product();
        Tensor { shape, data: vec![0.0; numel], requires_grad: false, grad: None }
    }

    /// Uniform init in +-1/sqrt(fan_in), the default for every learned layer.
    pub fn uniform_init(shape: Vec<usize>, fan_in: usize, stream: &mut Stream) -> Self {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let numel = shape.iter().product();
        let data = (0..numel).map(|_| stream.uniform(-bound, bound)).collect();
        Tensor { shape, data, requires_grad: true, grad: None }
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Zero the gradient slot, allocating it if absent.
    pub fn zero_grad(&mut self) {
        match &mut self.grad {
            Some(g) => g.iter_mut().for_each(|v| *v = 0.0),
            None => self.grad = Some(vec![0.0; self.data.len()]),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_product_must_match_data() {
        assert!(Tensor::new(vec![2, 3], vec![0.0; 6]).is_ok());
        assert!(Tensor::new(vec![2, 3], vec![0.0; 5]).is_err());
    }

    #[test]
    fn uniform_init_respects_bound() {
        let mut s = Stream::new(3);
        let t = Tensor::uniform_init(vec![16, 16], 16, &mut s);
        let bound = 0.25;
        assert!(t.data.iter().all(|v| v.abs() <= bound));
        assert!(t.requires_grad);
    }
}
