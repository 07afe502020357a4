#pragma once

#include <Eigen/Dense>
#include <vector>

#include "coca/perception.hpp"

namespace coca {

/// Per-cell detection confidence used to gate feature sharing. This is the
/// same code path the decoder's confidence channel runs through.
inline Eigen::VectorXd confidence_map(const BevTensor& bev, const ClassTemplates& templates) {
  return bev_confidence(bev, templates);
}

/// Sparse BEV features for one receiver, selected where confidence exceeds
/// the threshold. Feature values are f32-exact (rounded at packing time).
struct DetMessage {
  int sender = 0;
  int receiver = 0;
  Eigen::VectorXi cell;      // strictly increasing row-major BEV indices
  Eigen::MatrixXd features;  // entries x C

  Eigen::Index count() const { return cell.size(); }
};

DetMessage pack_detection_message(const BevTensor& bev, const Eigen::VectorXd& confidence,
                                  double confidence_threshold, int sender, int receiver);

/// Elementwise maximum of the ego feature and every message entry landing
/// on a cell; cells nobody wrote to keep the ego feature. Order-free and
/// idempotent. Throws on channel mismatch.
BevTensor fuse_features(const BevTensor& ego, const std::vector<DetMessage>& messages);

}  // namespace coca
