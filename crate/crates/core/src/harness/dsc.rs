use super::HarnessError;

/// A boolean voxel grid in row-major order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VoxelMask {
    shape: Vec<usize>,
    voxels: Vec<bool>,
}

impl VoxelMask {
    pub fn new(shape: Vec<usize>, voxels: Vec<bool>) -> Result<Self, HarnessError> {
        let n: usize = shape.iter().product();
        if n != voxels.len() {
            return Err(HarnessError::ShapeMismatch(shape, vec![voxels.len()]));
        }
        Ok(Self { shape, voxels })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn count(&self) -> usize {
        self.voxels.iter().filter(|&&v| v).count()
    }
}

/// Dice similarity `2|X ∩ Y| / (|X| + |Y|)`. Two empty masks agree
/// perfectly and score 1.
pub fn dsc(x: &VoxelMask, y: &VoxelMask) -> Result<f64, HarnessError> {
    if x.shape != y.shape {
        return Err(HarnessError::ShapeMismatch(x.shape.clone(), y.shape.clone()));
    }
    let both = x.voxels.iter().zip(&y.voxels).filter(|(a, b)| **a && **b).count();
    let total = x.count() + y.count();
    if total == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * both as f64 / total as f64)
}
