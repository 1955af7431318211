use crate::error::{Error, Result};
use crate::tree::{NodeId, TreeShape};

fn check_finite(values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(Error::NonFiniteState { index }),
        None => Ok(()),
    }
}

fn check_nonnegative(values: &[f64]) -> Result<()> {
    match values.iter().position(|&v| v < 0.0) {
        Some(index) => Err(Error::NegativeState {
            index,
            value: values[index],
        }),
        None => Ok(()),
    }
}

/// Intensities `X_j` of a truncated tree, stored generation by generation.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeState {
    shape: TreeShape,
    values: Vec<f64>,
}

impl TreeState {
    pub fn new(shape: TreeShape, values: Vec<f64>) -> Result<Self> {
        if values.len() != shape.len() {
            return Err(Error::LengthMismatch {
                expected: shape.len(),
                actual: values.len(),
            });
        }
        check_finite(&values)?;
        Ok(Self { shape, values })
    }

    pub fn zeros(shape: TreeShape) -> Self {
        let values = vec![0.0; shape.len()];
        Self { shape, values }
    }

    /// Builds a state from `value(node, generation)`.
    pub fn from_fn(shape: TreeShape, mut value: impl FnMut(NodeId, usize) -> f64) -> Result<Self> {
        let mut values = Vec::with_capacity(shape.len());
        for g in 0..=shape.depth() {
            for i in shape.generation_range(g) {
                values.push(value(NodeId(i), g));
            }
        }
        Self::new(shape, values)
    }

    /// Constant value per generation.
    pub fn from_generations(shape: TreeShape, per_generation: &[f64]) -> Result<Self> {
        if per_generation.len() < shape.depth() + 1 {
            return Err(Error::DepthMismatch {
                required: shape.depth() + 1,
                available: per_generation.len(),
            });
        }
        Self::from_fn(shape, |_, g| per_generation[g])
    }

    pub fn shape(&self) -> &TreeShape {
        &self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn generation(&self, g: usize) -> &[f64] {
        &self.values[self.shape.generation_range(g)]
    }

    pub fn get(&self, id: NodeId) -> f64 {
        self.values[id.0]
    }

    pub fn check_finite(&self) -> Result<()> {
        check_finite(&self.values)
    }

    /// Positive-solution mode check.
    pub fn check_nonnegative(&self) -> Result<()> {
        check_nonnegative(&self.values)
    }
}

/// Shell intensities `Y_0..=Y_depth` of the classic model.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassicState {
    values: Vec<f64>,
}

impl ClassicState {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::LengthMismatch {
                expected: 1,
                actual: 0,
            });
        }
        check_finite(&values)?;
        Ok(Self { values })
    }

    pub fn zeros(depth: usize) -> Self {
        Self {
            values: vec![0.0; depth + 1],
        }
    }

    pub fn depth(&self) -> usize {
        self.values.len() - 1
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// First `depth + 1` shells.
    pub fn truncated(&self, depth: usize) -> Result<Self> {
        if depth > self.depth() {
            return Err(Error::DepthMismatch {
                required: depth + 1,
                available: self.values.len(),
            });
        }
        Ok(Self {
            values: self.values[..=depth].to_vec(),
        })
    }

    pub fn check_finite(&self) -> Result<()> {
        check_finite(&self.values)
    }

    pub fn check_nonnegative(&self) -> Result<()> {
        check_nonnegative(&self.values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn construction_checks() {
        let shape = TreeShape::new(2, 2).unwrap();
        assert!(TreeState::new(shape.clone(), vec![0.0; 6]).is_err());
        let mut v = vec![0.0; 7];
        v[3] = f64::NAN;
        assert_eq!(
            TreeState::new(shape.clone(), v),
            Err(Error::NonFiniteState { index: 3 })
        );
        let s = TreeState::from_generations(shape, &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(s.values(), &[1.0, 2.0, 2.0, 3.0, 3.0, 3.0, 3.0]);
        assert_eq!(s.generation(1), &[2.0, 2.0]);
        assert!(ClassicState::new(vec![]).is_err());
        assert!(ClassicState::new(vec![1.0, -1.0]).unwrap().check_nonnegative().is_err());
    }
}
