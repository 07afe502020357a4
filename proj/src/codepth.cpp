#include "coca/codepth.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace coca {

Eigen::VectorXd uncertainty_map(const DepthDistribution& distribution) {
  const Eigen::MatrixXd& p = distribution.values;
  Eigen::VectorXd entropy(p.rows());
  const double max_bits = std::log2(static_cast<double>(p.cols()));
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    double h = 0;
    for (Eigen::Index k = 0; k < p.cols(); ++k) {
      const double v = p(i, k);
      if (v > 0) {
        h -= v * std::log2(v);
      }
    }
    entropy[i] = std::clamp(h, 0.0, max_bits);
  }
  return entropy;
}

DepthSelection select_confident_depth(const Eigen::VectorXd& uncertainty,
                                      const VoxelPixelMap& map,
                                      double uncertainty_threshold) {
  DepthSelection sel;
  sel.pixel_mask = uncertainty.array() < uncertainty_threshold;
  sel.voxel_mask.setConstant(map.grid.size(), false);
  for (int idx = 0; idx < map.grid.size(); ++idx) {
    if (map.present(idx) && sel.pixel_mask[map.pixel(idx)]) {
      sel.voxel_mask[idx] = true;
    }
  }
  return sel;
}

DepthMessage pack_depth_message(const VoxelTensor& vt, const Eigen::VectorXd& uncertainty,
                                const VoxelPixelMap& map, double uncertainty_threshold,
                                int sender, int receiver) {
  if (uncertainty.size() != static_cast<Eigen::Index>(map.image_height) * map.image_width) {
    throw std::invalid_argument("pack_depth_message: uncertainty size does not match the map");
  }
  const DepthSelection sel = select_confident_depth(uncertainty, map, uncertainty_threshold);

  DepthMessage msg;
  msg.sender = sender;
  msg.receiver = receiver;
  const Eigen::Index n = sel.voxel_mask.count();
  msg.voxel.resize(n);
  msg.depth_conf.resize(n);
  msg.features.resize(n, vt.features.cols());
  Eigen::Index row = 0;
  for (int idx = 0; idx < map.grid.size(); ++idx) {
    if (!sel.voxel_mask[idx]) {
      continue;
    }
    msg.voxel[row] = idx;
    // Round through f32 here so the in-memory message equals its wire form.
    msg.depth_conf[row] = static_cast<double>(static_cast<float>(vt.depth_conf[idx]));
    msg.features.row(row) =
        vt.features.row(idx).cast<float>().cast<double>();
    ++row;
  }
  return msg;
}

Eigen::VectorXd matching_score(const VoxelTensor& ego, const std::vector<DepthMessage>& messages,
                               double gate_threshold) {
  Eigen::VectorXd score = Eigen::VectorXd::Zero(ego.depth_conf.size());

  std::vector<const DepthMessage*> ordered;
  ordered.reserve(messages.size());
  for (const DepthMessage& m : messages) {
    ordered.push_back(&m);
  }
  std::sort(ordered.begin(), ordered.end(),
            [](const DepthMessage* a, const DepthMessage* b) { return a->sender < b->sender; });

  for (const DepthMessage* msg : ordered) {
    if (msg->features.cols() != ego.features.cols()) {
      throw std::invalid_argument("matching_score: feature channel mismatch");
    }
    for (Eigen::Index e = 0; e < msg->count(); ++e) {
      if (!(msg->depth_conf[e] > gate_threshold)) {
        continue;
      }
      const int idx = msg->voxel[e];
      score[idx] += ego.features.row(idx).dot(msg->features.row(e));
    }
  }
  return score;
}

Eigen::VectorXd fuse_depth(const Eigen::VectorXd& depth_conf, const Eigen::VectorXd& score,
                           const VoxelPixelMap& map, const DepthFusionParams& params) {
  if (!(params.alpha > 0) || !(params.beta > 0)) {
    throw std::invalid_argument("fuse_depth: alpha and beta must be positive");
  }
  if (depth_conf.size() != map.grid.size() || score.size() != map.grid.size()) {
    throw std::invalid_argument("fuse_depth: field sizes do not match the map");
  }
  constexpr double kEps = 1e-6;
  Eigen::VectorXd out = Eigen::VectorXd::Zero(depth_conf.size());
  for (int idx = 0; idx < map.grid.size(); ++idx) {
    if (!map.present(idx)) {
      continue;
    }
    const double p = std::clamp(depth_conf[idx], kEps, 1.0 - kEps);
    const double logit = std::log(p / (1.0 - p));
    const double z = params.alpha * logit + params.beta * score[idx] + params.gamma;
    out[idx] = 1.0 / (1.0 + std::exp(-z));
  }
  return out;
}

}  // namespace coca
