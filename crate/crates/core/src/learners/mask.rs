//! Random patch masking over feature vectors.

use rand::seq::SliceRandom;

use super::LearnerError;
use crate::scalar::Scalar;
use crate::seed;

/// Which contiguous feature "patches" to hide. The feature vector is split
/// into `patch_count` equal segments; `round(mask_ratio * patch_count)` of
/// them are masked, and that count must leave at least one patch on each
/// side.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskSpec {
    pub patch_count: usize,
    pub mask_ratio: f64,
    pub seed: u64,
}

impl MaskSpec {
    pub fn new(patch_count: usize, mask_ratio: f64, seed: u64) -> Self {
        MaskSpec {
            patch_count,
            mask_ratio,
            seed,
        }
    }

    pub fn masked_count(&self) -> usize {
        (self.mask_ratio * self.patch_count as f64).round() as usize
    }

    pub fn validate(&self) -> Result<(), LearnerError> {
        if self.patch_count < 2 {
            return Err(LearnerError::InvalidParam(
                "need at least two patches to mask some and keep some".into(),
            ));
        }
        if !self.mask_ratio.is_finite() || self.mask_ratio <= 0.0 || self.mask_ratio >= 1.0 {
            return Err(LearnerError::InvalidParam(format!(
                "mask_ratio must be in (0,1), got {}",
                self.mask_ratio
            )));
        }
        let masked = self.masked_count();
        if masked == 0 || masked >= self.patch_count {
            return Err(LearnerError::DegenerateMask {
                masked,
                patches: self.patch_count,
            });
        }
        Ok(())
    }

    /// The masked patch indices, sorted ascending; a pure function of this value.
    pub fn draw(&self) -> Result<Vec<usize>, LearnerError> {
        self.validate()?;
        let mut patches: Vec<usize> = (0..self.patch_count).collect();
        let mut rng = seed::rng(self.seed, &[]);
        patches.shuffle(&mut rng);
        let mut masked: Vec<usize> = patches.into_iter().take(self.masked_count()).collect();
        masked.sort_unstable();
        Ok(masked)
    }

    /// Expand masked patch ids to coordinate indices for dimension `d`.
    pub fn masked_coords(&self, feature_dim: usize) -> Result<Vec<usize>, LearnerError> {
        if feature_dim % self.patch_count != 0 {
            return Err(LearnerError::InvalidParam(format!(
                "feature dim {feature_dim} not divisible by {} patches",
                self.patch_count
            )));
        }
        let width = feature_dim / self.patch_count;
        let mut coords = Vec::with_capacity(self.masked_count() * width);
        for p in self.draw()? {
            coords.extend(p * width..(p + 1) * width);
        }
        Ok(coords)
    }
}

/// Zero out the masked patches of `x`. Returns the visible vector (original
/// values preserved on unmasked patches) and the masked patch index set.
pub fn apply_mask<S: Scalar>(
    x: &[S],
    spec: &MaskSpec,
) -> Result<(Vec<S>, Vec<usize>), LearnerError> {
    let masked = spec.draw()?;
    if x.len() % spec.patch_count != 0 {
        return Err(LearnerError::InvalidParam(format!(
            "feature dim {} not divisible by {} patches",
            x.len(),
            spec.patch_count
        )));
    }
    let width = x.len() / spec.patch_count;
    let mut visible = x.to_vec();
    for &p in &masked {
        for v in &mut visible[p * width..(p + 1) * width] {
            *v = S::zero();
        }
    }
    Ok((visible, masked))
}
