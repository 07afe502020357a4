#include "coca/cofl.hpp"

#include <stdexcept>

namespace coca {

DetMessage pack_detection_message(const BevTensor& bev, const Eigen::VectorXd& confidence,
                                  double confidence_threshold, int sender, int receiver) {
  if (confidence.size() != bev.values.rows()) {
    throw std::invalid_argument("pack_detection_message: confidence size mismatch");
  }
  DetMessage msg;
  msg.sender = sender;
  msg.receiver = receiver;
  const Eigen::Index n = (confidence.array() > confidence_threshold).count();
  msg.cell.resize(n);
  msg.features.resize(n, bev.values.cols());
  Eigen::Index row = 0;
  for (Eigen::Index cell = 0; cell < confidence.size(); ++cell) {
    if (confidence[cell] > confidence_threshold) {
      msg.cell[row] = static_cast<int>(cell);
      msg.features.row(row) = bev.values.row(cell).cast<float>().cast<double>();
      ++row;
    }
  }
  return msg;
}

BevTensor fuse_features(const BevTensor& ego, const std::vector<DetMessage>& messages) {
  BevTensor out = ego;
  for (const DetMessage& msg : messages) {
    if (msg.features.cols() != ego.values.cols()) {
      throw std::invalid_argument("fuse_features: feature channel mismatch");
    }
    for (Eigen::Index e = 0; e < msg.count(); ++e) {
      out.values.row(msg.cell[e]) =
          out.values.row(msg.cell[e]).cwiseMax(msg.features.row(e));
    }
  }
  return out;
}

}  // namespace coca
