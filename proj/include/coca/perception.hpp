#pragma once

#include <Eigen/Dense>
#include <cstdint>

#include "coca/geometry.hpp"
#include "coca/metrics.hpp"
#include "coca/scene.hpp"

namespace coca {

/// Unit class-signature vectors, one row per class id (row 0 = background).
/// Both the feature encoder and the detection head score against these.
struct ClassTemplates {
  Eigen::MatrixXd rows;  // (num_classes + 1) x C

  int channels() const { return static_cast<int>(rows.cols()); }
  int num_classes() const { return static_cast<int>(rows.rows()) - 1; }

  /// Orthonormal one-hot signatures with C channels (C >= num_classes + 1).
  static ClassTemplates unit(int num_classes, int channels);
};

struct ImageFeature {
  int height = 0;
  int width = 0;
  Eigen::MatrixXd values;  // (H*W) x C, pixel rows in h*W+w order
};

struct DepthDistribution {
  int height = 0;
  int width = 0;
  Eigen::MatrixXd values;  // (H*W) x D, each row a categorical distribution
};

/// Image features and depth probabilities carried into the shared voxel
/// grid. Rows follow the grid's row-major order; absent voxels are zero.
struct VoxelTensor {
  Eigen::MatrixXd features;    // size x C
  Eigen::VectorXd depth_conf;  // size
};

struct BevTensor {
  int nx = 0;
  int ny = 0;
  Eigen::MatrixXd values;  // (nx*ny) x C
};

/// Dense per-cell box hypotheses: channels are (confidence, x residual,
/// y residual, length, width, cos yaw, sin yaw). Residuals and sizes are in
/// meters; the winning class id is kept alongside.
struct DenseHeatmap {
  int nx = 0;
  int ny = 0;
  Eigen::MatrixXd values;    // (nx*ny) x 7
  Eigen::VectorXi class_id;  // nx*ny
};

/// Fixed box shape used for size regression (no learned size head).
struct BoxSizePrior {
  double length = 4.2;
  double width = 1.9;
  double height = 1.6;
  double center_z = 0.8;
};

/// Per-pixel class signature of the rendered semantics plus i.i.d.
/// Gaussian(0, sigma_f^2) channel noise.
ImageFeature encode(const RenderedView& view, const ClassTemplates& templates, double sigma_f,
                    std::uint64_t seed);

/// Range-dependent sharpness of the categorical depth analog: logit decay
/// kappa(d) = base / (1 + range_falloff * d / d_max), so distant pixels
/// come out flatter.
struct DepthSharpness {
  double base = 4.0;           // kappa at zero depth, > 0
  double range_falloff = 4.0;  // >= 0
};

/// Categorical depth with logits -kappa(d)*|k - k*| + Gaussian(0, sigma_d^2)
/// around the rendered depth's bin k*, softmax-normalized. Sky pixels and
/// pixels beyond the binning range get the uniform distribution.
DepthDistribution estimate_depth(const RenderedView& view, const DepthBinning& binning,
                                 const DepthSharpness& sharpness, double sigma_d,
                                 std::uint64_t seed);

/// Lifts features along every ray and gathers per-bin depth probabilities
/// into the voxel grid.
VoxelTensor voxelize(const ImageFeature& feature, const DepthDistribution& distribution,
                     const VoxelPixelMap& map);

/// Probability-weighted sum over the vertical axis, channel count kept.
BevTensor collapse(const VoxelTensor& vt, const VoxelGrid& grid);

/// Per-cell detection confidence: max over object classes of the clamped
/// normalized template response. Optionally reports the winning class.
Eigen::VectorXd bev_confidence(const BevTensor& bev, const ClassTemplates& templates,
                               Eigen::VectorXi* winning_class = nullptr);

/// Dense decode: confidence plane, sub-cell centroid residuals (3x3),
/// prior sizes, and heading from the confidence field's local principal
/// axis (5x5 second moments).
DenseHeatmap decode(const BevTensor& bev, const ClassTemplates& templates, const VoxelGrid& grid,
                    const BoxSizePrior& prior);

/// Greedy non-maximum suppression over cells above the confidence floor.
/// Candidates are ordered by descending confidence with ties broken by
/// (lower x index, lower y index); a candidate is dropped when its rotated
/// BEV IoU with any kept box exceeds the threshold.
DetectionSet nms(const DenseHeatmap& heatmap, double confidence_floor, double iou_threshold,
                 const VoxelGrid& grid, const BoxSizePrior& prior);

}  // namespace coca
