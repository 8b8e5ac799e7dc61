//! Gaussian anomaly detection with greedy eigencomponent selection.
//!
//! A multivariate Gaussian is fitted to feature vectors of normal images,
//! its shrunk covariance is eigendecomposed, and test vectors are whitened so
//! that the Mahalanobis distance is the Euclidean norm of the white vector.
//! Subsets of white-vector entries (eigencomponents) are then chosen by
//! greedy forward or backward search to maximize AUROC, and compared against
//! PCA/NPCA truncation.
//!
//! Modules, bottom-up: [`feature_store`] (FVS1 files), [`gaussian`]
//! (fitting and whitening), [`metrics`] (AUROC), [`selection`] (greedy
//! search and curves), [`experiments`] (split protocols), [`analysis`]
//! (regimes and replacement simulations), [`cli`].

pub mod analysis;
pub mod cli;
pub mod error;
pub mod experiments;
pub mod feature_store;
pub mod gaussian;
pub mod metrics;
pub mod selection;

pub use error::{Error, Result};
pub use feature_store::{
    read_feature_set, write_feature_set, FeatureSet, Label, SampleMeta, Split,
};
pub use gaussian::{GaussianModel, WhiteSet};
pub use metrics::{auroc, ScoredLabels};
pub use selection::{
    curve, greedy_bottom_up, greedy_top_down, ComponentSubset, Curve, Method, SelectionTrace,
};
