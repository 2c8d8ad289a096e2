//! Reference constants of the full-scale study configuration.
//!
//! Desk-scale runs use small synthetic corpora; these values document the
//! full-scale setup and serve as defaults where a full-scale quantity is
//! called for (e.g. the partition CLI's per-class sample size).

/// Full-scale corpus size before filtering.
pub const TOTAL_EXAMPLE_COUNT: usize = 83_570;

/// Labeled-example threshold below which a class is filtered out.
pub const FILTER_MIN_COUNT: usize = 350;

/// Classes surviving the filter at full scale.
pub const FILTERED_CLASS_COUNT: usize = 36;

/// Labeled examples surviving the filter at full scale.
pub const FILTERED_EXAMPLE_COUNT: usize = 55_542;

/// Unlabeled pool size at full scale (train split plus remainder).
pub const UNLABELED_POOL_TOTAL: usize = 72_461;

/// Uniform split of the full-scale pool over four clients.
pub const IID_CLIENT_SIZES: [usize; 4] = [18_115, 18_115, 18_115, 18_116];

/// Test fraction of the labeled train/test split.
pub const TEST_FRACTION: f64 = 0.2;

/// Participating clients.
pub const CLIENT_COUNT: usize = 4;

/// Labeled examples sampled per class for every client subset.
pub const SAMPLES_PER_CLASS: usize = 50;

/// Volume-skew concentrations studied for unlabeled pre-training data.
pub const VOLUME_ALPHAS: [f64; 4] = [1.0, 0.5, 0.2, 0.1];

/// Mean-prevalence targets of the label-space heterogeneity grid.
pub const PREVALENCE_TARGETS: [f64; 5] = [3.5, 3.0, 2.5, 2.0, 1.5];

/// Size-disparity targets of the label-space heterogeneity grid.
pub const DISPARITY_TARGETS: [f64; 4] = [0.0, 1.0, 2.0, 3.0];
