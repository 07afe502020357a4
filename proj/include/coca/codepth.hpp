#pragma once

#include <Eigen/Dense>
#include <vector>

#include "coca/geometry.hpp"
#include "coca/perception.hpp"

namespace coca {

/// Per-pixel Shannon entropy of the categorical depth, in bits
/// (0 * log 0 := 0). Bounded by log2 of the bin count.
Eigen::VectorXd uncertainty_map(const DepthDistribution& distribution);

/// Pixels confident enough to share, and the voxels on their rays.
struct DepthSelection {
  Eigen::Array<bool, Eigen::Dynamic, 1> pixel_mask;  // H*W
  Eigen::Array<bool, Eigen::Dynamic, 1> voxel_mask;  // grid size
};

/// pixel_mask = (uncertainty < threshold); voxel_mask marks present voxels
/// whose pixel passes.
DepthSelection select_confident_depth(const Eigen::VectorXd& uncertainty,
                                      const VoxelPixelMap& map, double uncertainty_threshold);

/// Sparse depth evidence for one receiver: per selected voxel its depth
/// confidence and feature vector. Values are exactly representable in f32
/// (they are rounded at packing time), so wire transport is lossless.
struct DepthMessage {
  int sender = 0;
  int receiver = 0;
  Eigen::VectorXi voxel;       // strictly increasing row-major voxel indices
  Eigen::VectorXd depth_conf;  // one per entry
  Eigen::MatrixXd features;    // entries x C

  Eigen::Index count() const { return voxel.size(); }
};

DepthMessage pack_depth_message(const VoxelTensor& vt, const Eigen::VectorXd& uncertainty,
                                const VoxelPixelMap& map, double uncertainty_threshold,
                                int sender, int receiver);

/// Multi-view consistency score: per voxel, the sum over gated message
/// entries of the inner product between the ego feature and the received
/// feature. Entries whose depth confidence is at or below the gate
/// contribute nothing. Messages are accumulated in sender order, so the
/// result is bitwise independent of arrival order.
Eigen::VectorXd matching_score(const VoxelTensor& ego, const std::vector<DepthMessage>& messages,
                               double gate_threshold);

struct DepthFusionParams {
  double alpha = 1.0;  // weight on the ego log-odds, > 0
  double beta = 1.0;   // weight on the consistency score, > 0
  double gamma = 0.0;  // bias
};

/// Pointwise logistic fusion of ego depth confidence with the consistency
/// score: sigmoid(alpha * logit(conf) + beta * score + gamma). Voxels
/// absent from the map stay zero. With beta * score = 0, alpha = 1,
/// gamma = 0 this is the identity up to 1e-6.
Eigen::VectorXd fuse_depth(const Eigen::VectorXd& depth_conf, const Eigen::VectorXd& score,
                           const VoxelPixelMap& map, const DepthFusionParams& params);

}  // namespace coca
