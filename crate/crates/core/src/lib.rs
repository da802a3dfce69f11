//! Normalized space alignment between corresponding point clouds.
//!
//! Two clouds of the same size (rows matched by index, dimensions free to
//! differ) are compared through two complementary discrepancies:
//!
//! - a global term: the mean absolute difference of their normalized
//!   pairwise distances, a pseudometric with an analytic subgradient and an
//!   unbiased minibatch estimator;
//! - a local term: the mean squared difference of inverse local intrinsic
//!   dimensionality estimates over matched neighbor tuples, a premetric
//!   that is differentiable with neighborhoods held fixed.
//!
//! Their weighted sum serves as a similarity index, a loss function, and
//! the objective of a direct gradient-descent embedding reducer with
//! optional geodesic reference distances. An evaluation toolkit covers
//! distance-preservation quality measures, layer-pair heatmaps, sensitivity
//! to principal-component removal, and per-point discrepancy reports.

pub mod analysis;
pub mod cloud;
pub mod composite;
pub mod error;
pub mod gnsa;
pub mod lnsa;
pub mod reducer;
pub mod synth;

pub use analysis::{
    knn_consistency, layer_heatmap, linear_correlation, pointwise_report, quality_report,
    sensitivity_curve, triplet_accuracy, HeatmapMatrix, HeatmapMeasure, PointwiseReport,
    QualityReport, SensitivityPoint,
};
pub use cloud::{
    center, compute_normalizer, pairwise_distances, remove_principal_components, ComponentOrder,
    DistanceMatrix, NormMode, NormalizationPolicy, Normalizer, PointCloud,
};
pub use composite::{
    grad_check, nsa_grad, nsa_loss, subset_estimate, GradCheckReport, LossKind, NormalizerSource,
    NsaConfig, SubsetEstimate,
};
pub use error::{NsaError, Result};
pub use gnsa::{gnsa, gnsa_grad, gnsa_pointwise, gnsa_with_normalizers, GnsaReport, Wrt};
pub use lnsa::{
    ad_inverse, intrinsic_dim, knn, knn_from_matrix, lid, lnsa_directed, lnsa_grad, lnsa_metric,
    symmetric_lid_inverse, LnsaReport, NeighborList,
};
pub use reducer::{
    geodesic_distances, principal_projection, reduce, GeodesicConfig, InitScheme, ReducerConfig,
    TrainTrace,
};
pub use synth::{make_blobs, make_spheres, make_swiss_roll, sphere_centers};
