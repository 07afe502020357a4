#include "coca/perception.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "coca/rng.hpp"

namespace coca {

ClassTemplates ClassTemplates::unit(int num_classes, int channels) {
  if (channels < num_classes + 1) {
    throw std::invalid_argument("ClassTemplates: need at least num_classes + 1 channels");
  }
  ClassTemplates t;
  t.rows = Eigen::MatrixXd::Identity(num_classes + 1, channels);
  return t;
}

ImageFeature encode(const RenderedView& view, const ClassTemplates& templates, double sigma_f,
                    std::uint64_t seed) {
  ImageFeature feat;
  feat.height = view.height;
  feat.width = view.width;
  const int num_pixels = view.height * view.width;
  feat.values.resize(num_pixels, templates.channels());
  for (int p = 0; p < num_pixels; ++p) {
    feat.values.row(p) = templates.rows.row(view.semantic[p]);
  }
  if (sigma_f > 0) {
    SeededRng rng(seed);
    for (int p = 0; p < num_pixels; ++p) {
      for (int c = 0; c < templates.channels(); ++c) {
        feat.values(p, c) += rng.gaussian(0, sigma_f);
      }
    }
  }
  return feat;
}

DepthDistribution estimate_depth(const RenderedView& view, const DepthBinning& binning,
                                 const DepthSharpness& sharpness, double sigma_d,
                                 std::uint64_t seed) {
  if (!(sharpness.base > 0)) {
    throw std::invalid_argument("estimate_depth: sharpness base must be positive");
  }
  DepthDistribution dist;
  dist.height = view.height;
  dist.width = view.width;
  const int num_pixels = view.height * view.width;
  const int num_bins = binning.count();
  dist.values.resize(num_pixels, num_bins);

  SeededRng rng(seed);
  Eigen::VectorXd logits(num_bins);
  const double uniform = 1.0 / num_bins;
  for (int p = 0; p < num_pixels; ++p) {
    const double d = view.depth[p];
    const auto gt_bin = std::isfinite(d) ? depth_to_bin(d, binning) : std::nullopt;
    if (!gt_bin) {
      dist.values.row(p).setConstant(uniform);
      continue;
    }
    const double kappa =
        sharpness.base / (1.0 + sharpness.range_falloff * d / binning.d_max);
    for (int k = 0; k < num_bins; ++k) {
      logits[k] = -kappa * std::abs(k - *gt_bin);
      if (sigma_d > 0) {
        logits[k] += rng.gaussian(0, sigma_d);
      }
    }
    const double top = logits.maxCoeff();
    dist.values.row(p) = (logits.array() - top).exp();
    dist.values.row(p) /= dist.values.row(p).sum();
  }
  return dist;
}

VoxelTensor voxelize(const ImageFeature& feature, const DepthDistribution& distribution,
                     const VoxelPixelMap& map) {
  if (feature.height != map.image_height || feature.width != map.image_width ||
      distribution.height != map.image_height || distribution.width != map.image_width) {
    throw std::invalid_argument("voxelize: image dims do not match the map");
  }
  VoxelTensor vt;
  vt.features = lift(feature.values, map);
  vt.depth_conf = lift_depth_probs(distribution.values, map);
  return vt;
}

BevTensor collapse(const VoxelTensor& vt, const VoxelGrid& grid) {
  if (vt.features.rows() != grid.size() || vt.depth_conf.size() != grid.size()) {
    throw std::invalid_argument("collapse: tensor does not match the grid");
  }
  BevTensor bev;
  bev.nx = grid.nx;
  bev.ny = grid.ny;
  bev.values.resize(grid.bev_size(), vt.features.cols());
  for (int cell = 0; cell < grid.bev_size(); ++cell) {
    const int base = cell * grid.nz;
    bev.values.row(cell) = vt.depth_conf.segment(base, grid.nz).transpose() *
                           vt.features.middleRows(base, grid.nz);
  }
  return bev;
}

Eigen::VectorXd bev_confidence(const BevTensor& bev, const ClassTemplates& templates,
                               Eigen::VectorXi* winning_class) {
  if (bev.values.cols() != templates.channels()) {
    throw std::invalid_argument("bev_confidence: channel mismatch with templates");
  }
  const int cells = static_cast<int>(bev.values.rows());
  Eigen::VectorXd conf = Eigen::VectorXd::Zero(cells);
  if (winning_class != nullptr) {
    winning_class->setZero(cells);
  }
  for (int cell = 0; cell < cells; ++cell) {
    double best = 0;
    int best_class = 0;
    for (int c = 1; c <= templates.num_classes(); ++c) {
      const double response =
          bev.values.row(cell).dot(templates.rows.row(c)) / templates.rows.row(c).norm();
      if (response > best) {
        best = response;
        best_class = c;
      }
    }
    conf[cell] = std::clamp(best, 0.0, 1.0);
    if (winning_class != nullptr) {
      (*winning_class)[cell] = best_class;
    }
  }
  return conf;
}

DenseHeatmap decode(const BevTensor& bev, const ClassTemplates& templates, const VoxelGrid& grid,
                    const BoxSizePrior& prior) {
  if (bev.nx != grid.nx || bev.ny != grid.ny) {
    throw std::invalid_argument("decode: BEV dims do not match the grid");
  }
  DenseHeatmap hm;
  hm.nx = bev.nx;
  hm.ny = bev.ny;
  const Eigen::VectorXd conf = bev_confidence(bev, templates, &hm.class_id);
  hm.values = Eigen::MatrixXd::Zero(grid.bev_size(), 7);
  hm.values.col(0) = conf;
  hm.values.col(3).setConstant(prior.length);
  hm.values.col(4).setConstant(prior.width);
  hm.values.col(5).setOnes();  // default heading (1, 0) keeps the unit norm

  for (int x = 0; x < grid.nx; ++x) {
    for (int y = 0; y < grid.ny; ++y) {
      const int cell = grid.bev_index(x, y);
      if (!(conf[cell] > 0)) {
        continue;
      }

      // Sub-cell center from the 3x3 confidence-weighted centroid.
      double wsum = 0, cx = 0, cy = 0;
      for (int dx = -1; dx <= 1; ++dx) {
        for (int dy = -1; dy <= 1; ++dy) {
          const int nx = x + dx, ny = y + dy;
          if (nx < 0 || nx >= grid.nx || ny < 0 || ny >= grid.ny) {
            continue;
          }
          const double w = conf[grid.bev_index(nx, ny)];
          wsum += w;
          cx += w * dx * grid.cell.x();
          cy += w * dy * grid.cell.y();
        }
      }
      if (wsum > 0) {
        hm.values(cell, 1) = cx / wsum;
        hm.values(cell, 2) = cy / wsum;
      }

      // Heading from the principal axis of the 5x5 confidence mass.
      double m = 0, mx = 0, my = 0, mxx = 0, mxy = 0, myy = 0;
      for (int dx = -2; dx <= 2; ++dx) {
        for (int dy = -2; dy <= 2; ++dy) {
          const int nx = x + dx, ny = y + dy;
          if (nx < 0 || nx >= grid.nx || ny < 0 || ny >= grid.ny) {
            continue;
          }
          const double w = conf[grid.bev_index(nx, ny)];
          const double px = dx * grid.cell.x();
          const double py = dy * grid.cell.y();
          m += w;
          mx += w * px;
          my += w * py;
          mxx += w * px * px;
          mxy += w * px * py;
          myy += w * py * py;
        }
      }
      if (m > 0) {
        const double ex = mx / m, ey = my / m;
        const double cxx = mxx / m - ex * ex;
        const double cxy = mxy / m - ex * ey;
        const double cyy = myy / m - ey * ey;
        if (std::abs(cxy) > 1e-12 || std::abs(cxx - cyy) > 1e-12) {
          const double theta = 0.5 * std::atan2(2.0 * cxy, cxx - cyy);
          hm.values(cell, 5) = std::cos(theta);
          hm.values(cell, 6) = std::sin(theta);
        }
      }
    }
  }
  return hm;
}

DetectionSet nms(const DenseHeatmap& heatmap, double confidence_floor, double iou_threshold,
                 const VoxelGrid& grid, const BoxSizePrior& prior) {
  if (confidence_floor < 0 || confidence_floor > 1) {
    throw std::invalid_argument("nms: confidence floor outside [0, 1]");
  }
  struct Candidate {
    Detection det;
    int x, y;
  };
  std::vector<Candidate> candidates;
  for (int x = 0; x < heatmap.nx; ++x) {
    for (int y = 0; y < heatmap.ny; ++y) {
      const int cell = grid.bev_index(x, y);
      const double conf = heatmap.values(cell, 0);
      if (!(conf > confidence_floor)) {
        continue;
      }
      const Eigen::Vector2d center = grid.bev_center(x, y);
      Detection det;
      det.confidence = conf;
      det.box.class_id = heatmap.class_id[cell];
      det.box.x = center.x() + heatmap.values(cell, 1);
      det.box.y = center.y() + heatmap.values(cell, 2);
      det.box.z = prior.center_z;
      det.box.l = heatmap.values(cell, 3);
      det.box.w = heatmap.values(cell, 4);
      det.box.h = prior.height;
      det.box.yaw = std::atan2(heatmap.values(cell, 6), heatmap.values(cell, 5));
      candidates.push_back({det, x, y});
    }
  }
  std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
    if (a.det.confidence != b.det.confidence) {
      return a.det.confidence > b.det.confidence;
    }
    if (a.x != b.x) {
      return a.x < b.x;
    }
    return a.y < b.y;
  });

  DetectionSet kept;
  for (const Candidate& cand : candidates) {
    bool suppressed = false;
    for (const Detection& k : kept) {
      if (rotated_iou(cand.det.box, k.box) > iou_threshold) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) {
      kept.push_back(cand.det);
    }
  }
  return kept;
}

}  // namespace coca
