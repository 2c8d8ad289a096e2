//! Flat parameter vectors with named affine segments.

use rand::Rng;
use rand_distr::StandardNormal;

use super::{LearnerError, DECODER, ENCODER, HEAD};
use crate::scalar::{cast, Scalar};
use crate::seed;

/// One affine map `y = W x + b`, stored as the row-major weight block
/// followed by the bias: `out_dim * in_dim + out_dim` values.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentSpec {
    pub name: String,
    pub out_dim: usize,
    pub in_dim: usize,
}

impl SegmentSpec {
    pub fn new(name: impl Into<String>, out_dim: usize, in_dim: usize) -> Self {
        SegmentSpec {
            name: name.into(),
            out_dim,
            in_dim,
        }
    }

    pub fn len(&self) -> usize {
        self.out_dim * self.in_dim + self.out_dim
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Ordered, disjoint, exhaustive segment ranges over one flat vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    segments: Vec<SegmentSpec>,
    offsets: Vec<usize>,
    total: usize,
}

impl Layout {
    pub fn new(segments: Vec<SegmentSpec>) -> Result<Self, LearnerError> {
        if segments.is_empty() {
            return Err(LearnerError::InvalidParam("layout needs a segment".into()));
        }
        let mut offsets = Vec::with_capacity(segments.len());
        let mut total = 0usize;
        for (i, s) in segments.iter().enumerate() {
            if s.out_dim == 0 || s.in_dim == 0 {
                return Err(LearnerError::InvalidParam(format!(
                    "segment {:?} has a zero dimension",
                    s.name
                )));
            }
            if s.name.is_empty() || s.name.contains(char::is_whitespace) {
                return Err(LearnerError::InvalidParam(format!(
                    "segment name {:?} must be non-empty without whitespace",
                    s.name
                )));
            }
            if segments[..i].iter().any(|prev| prev.name == s.name) {
                return Err(LearnerError::InvalidParam(format!(
                    "duplicate segment name {:?}",
                    s.name
                )));
            }
            offsets.push(total);
            total += s.len();
        }
        Ok(Layout {
            segments,
            offsets,
            total,
        })
    }

    /// Masked autoencoder: affine encoder over the (zero-filled) input and an
    /// affine decoder back to full dimension.
    pub fn autoencoder(feature_dim: usize, hidden_dim: usize) -> Result<Self, LearnerError> {
        Layout::new(vec![
            SegmentSpec::new(ENCODER, hidden_dim, feature_dim),
            SegmentSpec::new(DECODER, feature_dim, hidden_dim),
        ])
    }

    /// Classifier: the same affine encoder followed by a softmax head over
    /// the global label space.
    pub fn classifier(
        feature_dim: usize,
        hidden_dim: usize,
        class_count: usize,
    ) -> Result<Self, LearnerError> {
        Layout::new(vec![
            SegmentSpec::new(ENCODER, hidden_dim, feature_dim),
            SegmentSpec::new(HEAD, class_count, hidden_dim),
        ])
    }

    pub fn segments(&self) -> &[SegmentSpec] {
        &self.segments
    }

    pub fn total_len(&self) -> usize {
        self.total
    }

    pub fn segment_range(&self, name: &str) -> Option<std::ops::Range<usize>> {
        self.segments
            .iter()
            .position(|s| s.name == name)
            .map(|i| self.offsets[i]..self.offsets[i] + self.segments[i].len())
    }

    pub fn spec(&self, name: &str) -> Option<&SegmentSpec> {
        self.segments.iter().find(|s| s.name == name)
    }
}

/// Borrowed view of one affine segment.
#[derive(Debug, Clone, Copy)]
pub struct AffineView<'a, S> {
    pub weight: &'a [S],
    pub bias: &'a [S],
    pub out_dim: usize,
    pub in_dim: usize,
}

impl<S: Scalar> AffineView<'_, S> {
    /// `out = W x + b`
    pub fn apply(&self, x: &[S], out: &mut [S]) {
        debug_assert_eq!(x.len(), self.in_dim);
        debug_assert_eq!(out.len(), self.out_dim);
        for (j, o) in out.iter_mut().enumerate() {
            let row = &self.weight[j * self.in_dim..(j + 1) * self.in_dim];
            let mut acc = self.bias[j];
            for (w, xi) in row.iter().zip(x) {
                acc += *w * *xi;
            }
            *o = acc;
        }
    }

    /// `dx = W^T dy` (backward through the linear part).
    pub fn apply_transpose(&self, dy: &[S], dx: &mut [S]) {
        debug_assert_eq!(dy.len(), self.out_dim);
        debug_assert_eq!(dx.len(), self.in_dim);
        for v in dx.iter_mut() {
            *v = S::zero();
        }
        for (j, g) in dy.iter().enumerate() {
            let row = &self.weight[j * self.in_dim..(j + 1) * self.in_dim];
            for (i, w) in row.iter().enumerate() {
                dx[i] += *w * *g;
            }
        }
    }
}

/// Flat model parameters. Values are immutable once built; updates produce
/// new vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector<S> {
    layout: Layout,
    values: Vec<S>,
}

impl<S: Scalar> ParamVector<S> {
    pub fn zeros(layout: Layout) -> Self {
        let values = vec![S::zero(); layout.total_len()];
        ParamVector { layout, values }
    }

    pub fn from_values(layout: Layout, values: Vec<S>) -> Result<Self, LearnerError> {
        if values.len() != layout.total_len() {
            return Err(LearnerError::LayoutMismatch(format!(
                "layout holds {} values, got {}",
                layout.total_len(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(LearnerError::InvalidParam(
                "parameter values must be finite".into(),
            ));
        }
        Ok(ParamVector { layout, values })
    }

    /// Bypass the finite-values check; only for optimizer internals where a
    /// divergence check follows immediately.
    pub(crate) fn from_values_unchecked(layout: Layout, values: Vec<S>) -> Self {
        debug_assert_eq!(values.len(), layout.total_len());
        ParamVector { layout, values }
    }

    /// Seeded Gaussian initialization, `N(0, scale^2)` per coordinate.
    pub fn gaussian_init(layout: Layout, init_seed: u64, scale: f64) -> Self {
        let mut rng = seed::rng(init_seed, &[]);
        let values = (0..layout.total_len())
            .map(|_| cast(scale * rng.sample::<f64, _>(StandardNormal)))
            .collect();
        ParamVector { layout, values }
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn values(&self) -> &[S] {
        &self.values
    }

    pub fn segment(&self, name: &str) -> Result<&[S], LearnerError> {
        let range = self
            .layout
            .segment_range(name)
            .ok_or_else(|| LearnerError::MissingSegment(name.into()))?;
        Ok(&self.values[range])
    }

    pub fn affine(&self, name: &str) -> Result<AffineView<'_, S>, LearnerError> {
        let spec = self
            .layout
            .spec(name)
            .ok_or_else(|| LearnerError::MissingSegment(name.into()))?;
        let vals = self.segment(name)?;
        let split = spec.out_dim * spec.in_dim;
        Ok(AffineView {
            weight: &vals[..split],
            bias: &vals[split..],
            out_dim: spec.out_dim,
            in_dim: spec.in_dim,
        })
    }

    /// Copy the named segments into a fresh vector with a reduced layout.
    pub fn extract(&self, names: &[&str]) -> Result<ParamVector<S>, LearnerError> {
        let mut segments = Vec::new();
        let mut values = Vec::new();
        for name in names {
            let spec = self
                .layout
                .spec(name)
                .ok_or_else(|| LearnerError::MissingSegment((*name).into()))?;
            segments.push(spec.clone());
            values.extend_from_slice(self.segment(name)?);
        }
        Ok(ParamVector {
            layout: Layout::new(segments)?,
            values,
        })
    }

    /// Build a vector over `layout`, filling each segment from `source` when
    /// it has one of the same name and shape, otherwise from `fallback`.
    pub fn compose(
        layout: Layout,
        source: &ParamVector<S>,
        fallback: &ParamVector<S>,
    ) -> Result<ParamVector<S>, LearnerError> {
        let mut values = Vec::with_capacity(layout.total_len());
        for spec in layout.segments() {
            let donor = if source.layout.spec(&spec.name) == Some(spec) {
                source
            } else if fallback.layout.spec(&spec.name) == Some(spec) {
                fallback
            } else {
                return Err(LearnerError::LayoutMismatch(format!(
                    "no donor provides segment {:?} of shape {}x{}",
                    spec.name, spec.out_dim, spec.in_dim
                )));
            };
            values.extend_from_slice(donor.segment(&spec.name)?);
        }
        Ok(ParamVector { layout, values })
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// FNV-1a over the little-endian `f64` image of the values; stable
    /// fingerprint for round logs.
    pub fn checksum(&self) -> u64 {
        let mut hash = 0xcbf2_9ce4_8422_2325u64;
        for v in &self.values {
            for byte in v.to_f64().unwrap_or(f64::NAN).to_le_bytes() {
                hash ^= u64::from(byte);
                hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
        hash
    }
}
