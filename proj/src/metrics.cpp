#include "coca/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace coca {

namespace {

double polygon_area(const std::vector<Eigen::Vector2d>& poly) {
  double twice = 0;
  const std::size_t n = poly.size();
  for (std::size_t i = 0; i < n; ++i) {
    const auto& a = poly[i];
    const auto& b = poly[(i + 1) % n];
    twice += a.x() * b.y() - b.x() * a.y();
  }
  return 0.5 * std::abs(twice);
}

// Sutherland-Hodgman clip of a convex polygon against the half-plane on the
// left of edge a->b.
std::vector<Eigen::Vector2d> clip_against_edge(const std::vector<Eigen::Vector2d>& poly,
                                               const Eigen::Vector2d& a,
                                               const Eigen::Vector2d& b) {
  std::vector<Eigen::Vector2d> out;
  const std::size_t n = poly.size();
  const Eigen::Vector2d dir = b - a;
  auto side = [&](const Eigen::Vector2d& p) {
    return dir.x() * (p.y() - a.y()) - dir.y() * (p.x() - a.x());
  };
  for (std::size_t i = 0; i < n; ++i) {
    const Eigen::Vector2d& cur = poly[i];
    const Eigen::Vector2d& nxt = poly[(i + 1) % n];
    const double sc = side(cur);
    const double sn = side(nxt);
    if (sc >= 0) {
      out.push_back(cur);
    }
    if ((sc >= 0) != (sn >= 0)) {
      const double t = sc / (sc - sn);
      out.push_back(cur + t * (nxt - cur));
    }
  }
  return out;
}

}  // namespace

std::array<Eigen::Vector2d, 4> box_corners(const GroundTruthBox& box) {
  const double c = std::cos(box.yaw);
  const double s = std::sin(box.yaw);
  const double hl = 0.5 * box.l;
  const double hw = 0.5 * box.w;
  auto corner = [&](double dl, double dw) {
    return Eigen::Vector2d(box.x + dl * c - dw * s, box.y + dl * s + dw * c);
  };
  return {corner(hl, hw), corner(-hl, hw), corner(-hl, -hw), corner(hl, -hw)};
}

double rotated_iou(const GroundTruthBox& a, const GroundTruthBox& b) {
  if (!(a.l > 0) || !(a.w > 0) || !(b.l > 0) || !(b.w > 0)) {
    throw std::invalid_argument("rotated_iou: non-positive footprint size");
  }
  const auto ca = box_corners(a);
  const auto cb = box_corners(b);
  std::vector<Eigen::Vector2d> poly(ca.begin(), ca.end());
  for (int i = 0; i < 4 && !poly.empty(); ++i) {
    poly = clip_against_edge(poly, cb[i], cb[(i + 1) % 4]);
  }
  if (poly.size() < 3) {
    return 0.0;
  }
  const double inter = polygon_area(poly);
  const double area_a = a.l * a.w;
  const double area_b = b.l * b.w;
  const double uni = area_a + area_b - inter;
  if (!(inter > 0) || !(uni > 0)) {
    return 0.0;
  }
  return inter / uni;
}

PrCurve average_precision(const DetectionSet& detections,
                          const std::vector<GroundTruthBox>& ground_truth,
                          double iou_threshold) {
  PrCurve curve;
  if (ground_truth.empty()) {
    curve.ap = detections.empty() ? 1.0 : 0.0;
    return curve;
  }

  std::vector<std::size_t> order(detections.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
    return detections[i].confidence > detections[j].confidence;
  });

  std::vector<bool> matched(ground_truth.size(), false);
  int tp = 0;
  int fp = 0;
  curve.recall.reserve(detections.size());
  curve.precision.reserve(detections.size());
  for (const std::size_t di : order) {
    const Detection& det = detections[di];
    int best = -1;
    double best_iou = 0;
    for (std::size_t gi = 0; gi < ground_truth.size(); ++gi) {
      if (matched[gi] || ground_truth[gi].class_id != det.box.class_id) {
        continue;
      }
      const double iou = rotated_iou(det.box, ground_truth[gi]);
      if (iou >= iou_threshold && iou > best_iou) {
        best_iou = iou;
        best = static_cast<int>(gi);
      }
    }
    if (best >= 0) {
      matched[static_cast<std::size_t>(best)] = true;
      ++tp;
    } else {
      ++fp;
    }
    curve.recall.push_back(static_cast<double>(tp) / static_cast<double>(ground_truth.size()));
    curve.precision.push_back(static_cast<double>(tp) / static_cast<double>(tp + fp));
  }

  // Area under the step curve, precision made monotone right to left.
  std::vector<double> mono(curve.precision);
  for (int i = static_cast<int>(mono.size()) - 2; i >= 0; --i) {
    mono[static_cast<std::size_t>(i)] =
        std::max(mono[static_cast<std::size_t>(i)], mono[static_cast<std::size_t>(i) + 1]);
  }
  double ap = 0;
  double prev_recall = 0;
  for (std::size_t i = 0; i < mono.size(); ++i) {
    ap += (curve.recall[i] - prev_recall) * mono[i];
    prev_recall = curve.recall[i];
  }
  curve.ap = ap;
  return curve;
}

namespace {

bool in_region(const RenderedView& view, const DepthBinning& binning, int p,
               DepthRegion region) {
  const double d = view.depth[p];
  if (!std::isfinite(d) || d < binning.d_min || d > binning.d_max) {
    return false;
  }
  return region == DepthRegion::FullPlane || view.instance[p] >= 0;
}

}  // namespace

std::optional<double> depth_accuracy(const Eigen::MatrixXd& distribution,
                                     const RenderedView& view, const DepthBinning& binning,
                                     DepthRegion region) {
  if (distribution.rows() != static_cast<Eigen::Index>(view.height) * view.width) {
    throw std::invalid_argument("depth_accuracy: distribution rows do not match the view");
  }
  long total = 0;
  long correct = 0;
  for (int p = 0; p < distribution.rows(); ++p) {
    if (!in_region(view, binning, p, region)) {
      continue;
    }
    const auto gt = depth_to_bin(view.depth[p], binning);
    ++total;
    Eigen::Index pred;
    distribution.row(p).maxCoeff(&pred);
    correct += (static_cast<int>(pred) == *gt);
  }
  if (total == 0) {
    return std::nullopt;
  }
  return static_cast<double>(correct) / static_cast<double>(total);
}

std::optional<double> depth_accuracy_from_voxels(const Eigen::MatrixXd& distribution,
                                                 const Eigen::VectorXd& fused_conf,
                                                 const Eigen::VectorXd& raw_conf,
                                                 const Eigen::VectorXd& consistency_score,
                                                 const VoxelPixelMap& map,
                                                 const AgentRig& rig,
                                                 const RenderedView& view,
                                                 const DepthBinning& binning,
                                                 DepthRegion region) {
  if (fused_conf.size() != map.grid.size() || raw_conf.size() != map.grid.size()) {
    throw std::invalid_argument("depth_accuracy_from_voxels: field does not match the map");
  }
  if (distribution.rows() != static_cast<Eigen::Index>(view.height) * view.width ||
      distribution.cols() != map.bin_count) {
    throw std::invalid_argument("depth_accuracy_from_voxels: distribution dims mismatch");
  }
  const VoxelGrid& grid = map.grid;
  const Eigen::Matrix3d world_from_cam = rig.world_to_camera().transpose();

  Eigen::MatrixXd merged = distribution;
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> covered =
      Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(distribution.rows(),
                                                                    distribution.cols(), false);
  for (int h = 0; h < view.height; ++h) {
    for (int w = 0; w < view.width; ++w) {
      const int p = h * view.width + w;
      if (!in_region(view, binning, p, region)) {
        continue;
      }
      const Eigen::Vector3d dir =
          world_from_cam *
          Eigen::Vector3d((w - rig.cx) / rig.fx, (h - rig.cy) / rig.fy, 1.0);
      for (int k = 0; k < binning.count(); ++k) {
        const Eigen::Vector3d pt = rig.position + binning.centers[k] * dir;
        const Eigen::Vector3d rel = (pt - grid.origin).cwiseQuotient(grid.cell);
        const int x = static_cast<int>(std::floor(rel.x()));
        const int y = static_cast<int>(std::floor(rel.y()));
        const int z = static_cast<int>(std::floor(rel.z()));
        if (x < 0 || x >= grid.nx || y < 0 || y >= grid.ny || z < 0 || z >= grid.nz) {
          continue;
        }
        const int idx = grid.index(x, y, z);
        if (!map.present(idx) || !(consistency_score[idx] > 0)) {
          continue;
        }
        // Corroborated voxels replace the sampled bin's probability with
        // the fused confidence, tapered by how close the sample passes to
        // the voxel's center plane: the fused readout peaks at the bin
        // whose ray point sits on the corroborated surface.
        const double taper = 1.0 - 2.0 * std::abs(rel.z() - z - 0.5);
        const double value = taper * fused_conf[idx];
        if (!covered(p, k)) {
          covered(p, k) = true;
          merged(p, k) = std::max(distribution(p, k), value);
        } else {
          merged(p, k) = std::max(merged(p, k), value);
        }
      }
    }
  }
  return depth_accuracy(merged, view, binning, region);
}

}  // namespace coca
