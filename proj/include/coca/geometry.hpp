#pragma once

#include <Eigen/Dense>
#include <optional>
#include <vector>

namespace coca {

/// 3x4 matrix taking homogeneous world coordinates (meters) to homogeneous
/// pixel coordinates. The third row of the product is the camera depth.
using ProjectionMatrix = Eigen::Matrix<double, 3, 4>;

struct PixelDepth {
  double u = 0;      // column coordinate, pixels
  double v = 0;      // row coordinate, pixels
  double depth = 0;  // camera-frame depth, meters
};

/// Perspective projection of a world point. Returns nullopt when the point
/// is not in front of the camera (non-positive depth). u, v carry the
/// perspective divide; depth is the raw third homogeneous component.
std::optional<PixelDepth> project_point(const ProjectionMatrix& proj,
                                        const Eigen::Vector3d& point);

enum class DepthSpacing { Uniform, LinearIncreasing };

/// Discretization of [d_min, d_max] into bins. Bin k covers
/// [edges[k], edges[k+1]); the top edge is closed so d_max lands in the
/// last bin. LinearIncreasing bin widths grow in arithmetic progression.
struct DepthBinning {
  DepthSpacing mode = DepthSpacing::Uniform;
  double d_min = 0;
  double d_max = 0;
  Eigen::VectorXd edges;    // count + 1, strictly increasing
  Eigen::VectorXd centers;  // midpoints

  int count() const { return static_cast<int>(centers.size()); }
};

/// Throws std::invalid_argument unless 0 <= d_min < d_max and bin_count >= 1.
DepthBinning make_binning(DepthSpacing mode, double d_min, double d_max, int bin_count);

/// Bin index of a metric depth, or nullopt when outside [d_min, d_max].
std::optional<int> depth_to_bin(double depth, const DepthBinning& binning);

/// Axis-aligned grid over the detection volume. Linear indices are
/// row-major with x outermost and z innermost.
struct VoxelGrid {
  Eigen::Vector3d origin = Eigen::Vector3d::Zero();  // min corner, meters
  Eigen::Vector3d cell = Eigen::Vector3d::Ones();    // cell sizes, meters
  int nx = 0;
  int ny = 0;
  int nz = 0;

  int size() const { return nx * ny * nz; }
  int bev_size() const { return nx * ny; }
  int index(int x, int y, int z) const { return (x * ny + y) * nz + z; }
  int bev_index(int x, int y) const { return x * ny + y; }

  Eigen::Vector3d center(int x, int y, int z) const {
    return origin + cell.cwiseProduct(Eigen::Vector3d(x + 0.5, y + 0.5, z + 0.5));
  }
  Eigen::Vector2d bev_center(int x, int y) const {
    return origin.head<2>() + cell.head<2>().cwiseProduct(Eigen::Vector2d(x + 0.5, y + 0.5));
  }
};

/// Per-voxel link into image space: the pixel the voxel center projects to,
/// and the depth bin its camera depth falls in. Voxels behind the camera,
/// outside the image after nearest-pixel rounding, or outside the depth
/// range are absent (marked with h = -1).
struct VoxelPixelMap {
  struct Entry {
    int h = -1;
    int w = -1;
    int bin = -1;
  };

  VoxelGrid grid;
  int image_height = 0;
  int image_width = 0;
  int bin_count = 0;
  std::vector<Entry> entries;  // grid.size() entries, row-major

  bool present(int idx) const { return entries[idx].h >= 0; }
  int pixel(int idx) const { return entries[idx].h * image_width + entries[idx].w; }
  int present_count() const;
};

VoxelPixelMap build_voxel_pixel_map(const VoxelGrid& grid, const ProjectionMatrix& proj,
                                    int image_height, int image_width,
                                    const DepthBinning& binning);

/// Gathers a pixel field (one row per pixel in h*W+w order, one column per
/// channel) into a voxel field (one row per voxel). A pixel feeds every
/// voxel on its ray; absent voxels receive zeros.
Eigen::MatrixXd lift(const Eigen::MatrixXd& pixel_field, const VoxelPixelMap& map);

/// Per-bin gather of a categorical depth field (one row per pixel, one
/// column per bin): a voxel mapped to (h, w, k) receives element (h*W+w, k).
Eigen::VectorXd lift_depth_probs(const Eigen::MatrixXd& distribution, const VoxelPixelMap& map);

}  // namespace coca
