#include "coca/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace coca {

std::optional<PixelDepth> project_point(const ProjectionMatrix& proj,
                                        const Eigen::Vector3d& point) {
  const Eigen::Vector3d q = proj * point.homogeneous();
  if (!(q.z() > 0.0)) {
    return std::nullopt;
  }
  return PixelDepth{q.x() / q.z(), q.y() / q.z(), q.z()};
}

DepthBinning make_binning(DepthSpacing mode, double d_min, double d_max, int bin_count) {
  if (!(d_min >= 0.0) || !(d_min < d_max) || bin_count < 1) {
    throw std::invalid_argument("make_binning: need 0 <= d_min < d_max and bin_count >= 1");
  }
  DepthBinning b;
  b.mode = mode;
  b.d_min = d_min;
  b.d_max = d_max;
  b.edges.resize(bin_count + 1);
  const double span = d_max - d_min;
  const double n = static_cast<double>(bin_count);
  for (int i = 0; i <= bin_count; ++i) {
    if (mode == DepthSpacing::Uniform) {
      b.edges[i] = d_min + span * i / n;
    } else {
      // Quadratic edge law: successive widths form an arithmetic progression.
      b.edges[i] = d_min + span * (static_cast<double>(i) * (i + 1)) / (n * (n + 1));
    }
  }
  b.edges[bin_count] = d_max;
  b.centers = 0.5 * (b.edges.head(bin_count) + b.edges.tail(bin_count));
  return b;
}

std::optional<int> depth_to_bin(double depth, const DepthBinning& binning) {
  if (!(depth >= binning.d_min) || !(depth <= binning.d_max)) {
    return std::nullopt;
  }
  const double* begin = binning.edges.data();
  const double* end = begin + binning.edges.size();
  // Half-open bins [edge_k, edge_{k+1}); the top edge closes onto the
  // last bin.
  int k = static_cast<int>(std::upper_bound(begin, end, depth) - begin) - 1;
  return std::min(k, binning.count() - 1);
}

int VoxelPixelMap::present_count() const {
  int n = 0;
  for (const Entry& e : entries) {
    n += (e.h >= 0);
  }
  return n;
}

VoxelPixelMap build_voxel_pixel_map(const VoxelGrid& grid, const ProjectionMatrix& proj,
                                    int image_height, int image_width,
                                    const DepthBinning& binning) {
  VoxelPixelMap map;
  map.grid = grid;
  map.image_height = image_height;
  map.image_width = image_width;
  map.bin_count = binning.count();
  map.entries.assign(static_cast<std::size_t>(grid.size()), {});

  for (int x = 0; x < grid.nx; ++x) {
    for (int y = 0; y < grid.ny; ++y) {
      for (int z = 0; z < grid.nz; ++z) {
        const auto px = project_point(proj, grid.center(x, y, z));
        if (!px) {
          continue;
        }
        const int w = static_cast<int>(std::lround(px->u));
        const int h = static_cast<int>(std::lround(px->v));
        if (h < 0 || h >= image_height || w < 0 || w >= image_width) {
          continue;
        }
        const auto bin = depth_to_bin(px->depth, binning);
        if (!bin) {
          continue;
        }
        map.entries[static_cast<std::size_t>(grid.index(x, y, z))] = {h, w, *bin};
      }
    }
  }
  return map;
}

Eigen::MatrixXd lift(const Eigen::MatrixXd& pixel_field, const VoxelPixelMap& map) {
  if (pixel_field.rows() != static_cast<Eigen::Index>(map.image_height) * map.image_width) {
    throw std::invalid_argument("lift: pixel field rows do not match the map's image size");
  }
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(map.grid.size(), pixel_field.cols());
  for (int idx = 0; idx < map.grid.size(); ++idx) {
    if (map.present(idx)) {
      out.row(idx) = pixel_field.row(map.pixel(idx));
    }
  }
  return out;
}

Eigen::VectorXd lift_depth_probs(const Eigen::MatrixXd& distribution, const VoxelPixelMap& map) {
  if (distribution.rows() != static_cast<Eigen::Index>(map.image_height) * map.image_width ||
      distribution.cols() != map.bin_count) {
    throw std::invalid_argument("lift_depth_probs: distribution dims do not match the map");
  }
  Eigen::VectorXd out = Eigen::VectorXd::Zero(map.grid.size());
  for (int idx = 0; idx < map.grid.size(); ++idx) {
    if (map.present(idx)) {
      out[idx] = distribution(map.pixel(idx), map.entries[idx].bin);
    }
  }
  return out;
}

}  // namespace coca
