#pragma once

#include <Eigen/Dense>
#include <optional>
#include <vector>

#include "coca/geometry.hpp"
#include "coca/scene.hpp"

namespace coca {

struct Detection {
  GroundTruthBox box;
  double confidence = 0;
};

/// Decoded detections, sorted by descending confidence.
using DetectionSet = std::vector<Detection>;

/// BEV footprint corners of a box, counter-clockwise.
std::array<Eigen::Vector2d, 4> box_corners(const GroundTruthBox& box);

/// Rotated-box IoU of the BEV footprints: convex polygon clipping for the
/// intersection, shoelace for areas. Height is ignored. Throws
/// std::invalid_argument on non-positive footprint sizes.
double rotated_iou(const GroundTruthBox& a, const GroundTruthBox& b);

struct PrCurve {
  std::vector<double> recall;     // non-decreasing
  std::vector<double> precision;  // raw, per detection prefix
  double ap = 0;
};

/// Average precision at one IoU threshold. Detections are taken in
/// descending confidence (stable on ties); each greedily matches the
/// unmatched ground-truth box of the same class with highest IoU when that
/// IoU reaches the threshold. AP is the area under the precision-recall
/// curve with precision made monotone right to left. No ground truth and
/// no detections scores 1; detections against empty ground truth score 0.
PrCurve average_precision(const DetectionSet& detections,
                          const std::vector<GroundTruthBox>& ground_truth,
                          double iou_threshold);

enum class DepthRegion { FullPlane, Foreground };

/// Fraction of region pixels whose argmax depth bin equals the rendered
/// depth's bin. FullPlane covers non-sky pixels with depth inside the
/// binning range; Foreground additionally requires an instance hit.
/// nullopt when the region is empty.
std::optional<double> depth_accuracy(const Eigen::MatrixXd& distribution,
                                     const RenderedView& view, const DepthBinning& binning,
                                     DepthRegion region);

/// Same metric after depth collaboration. Each pixel's ray is marched
/// through the bin centers; a voxel the collaboration corroborated
/// (positive consistency score) adds the fusion's confidence lift
/// (fused - raw) as a bonus on the depth bin it lives in, so corroborated
/// regions outrank the rest while the pixel's own distribution breaks ties
/// inside them. With no corroboration anywhere this reduces exactly to
/// depth_accuracy on the distribution.
std::optional<double> depth_accuracy_from_voxels(const Eigen::MatrixXd& distribution,
                                                 const Eigen::VectorXd& fused_conf,
                                                 const Eigen::VectorXd& raw_conf,
                                                 const Eigen::VectorXd& consistency_score,
                                                 const VoxelPixelMap& map,
                                                 const AgentRig& rig,
                                                 const RenderedView& view,
                                                 const DepthBinning& binning,
                                                 DepthRegion region);

}  // namespace coca
