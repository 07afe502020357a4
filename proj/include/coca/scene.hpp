#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "coca/geometry.hpp"

namespace coca {

/// Upright rectangular cuboid with yaw about the vertical axis.
/// (x, y, z) is the center; l runs along the heading, w across it, h up.
struct GroundTruthBox {
  int class_id = 1;
  double x = 0;
  double y = 0;
  double z = 0;
  double h = 0;
  double w = 0;
  double l = 0;
  double yaw = 0;  // radians in (-pi, pi]
};

/// One camera per agent: pinhole intrinsics plus a planar pose (position
/// and heading). The optical axis is horizontal; image rows below the
/// principal row look down.
struct AgentRig {
  int id = 0;
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  double yaw = 0;
  double fx = 0;
  double fy = 0;
  double cx = 0;
  double cy = 0;
  int image_height = 0;
  int image_width = 0;

  /// Camera-from-world rotation, rows = (right, down, forward).
  Eigen::Matrix3d world_to_camera() const;
  ProjectionMatrix projection() const;
};

struct BevRect {
  double x_min = 0;
  double x_max = 0;
  double y_min = 0;
  double y_max = 0;

  double width() const { return x_max - x_min; }
  double height() const { return y_max - y_min; }
  Eigen::Vector2d center() const { return {0.5 * (x_min + x_max), 0.5 * (y_min + y_max)}; }
  bool contains(double x, double y) const {
    return x >= x_min && x <= x_max && y >= y_min && y <= y_max;
  }
};

struct Scene {
  BevRect range;
  double ground_z = 0;
  std::vector<GroundTruthBox> boxes;
  std::vector<AgentRig> agents;
  std::uint64_t seed = 0;
};

/// Per-pixel ground truth for one agent. depth is the camera-frame depth of
/// the nearest hit (+inf for sky); semantic 0 is background/ground;
/// instance is the index into Scene::boxes, -1 where no box is hit.
struct RenderedView {
  int height = 0;
  int width = 0;
  Eigen::VectorXd depth;
  Eigen::VectorXi semantic;
  Eigen::VectorXi instance;

  int pixel(int h, int w) const { return h * width + w; }
};

struct SceneGenConfig {
  int box_count = 12;
  double length_min = 3.8, length_max = 4.6;
  double width_min = 1.7, width_max = 2.1;
  double height_min = 1.4, height_max = 1.8;
  int num_classes = 1;
  double min_gap = 1.0;      // clearance between box footprints, meters
  double box_inset = 4.0;    // keep-out margin from the range boundary
  int num_agents = 4;
  double camera_height = 1.6;
  double focal = 64.0;       // fx = fy, pixels
  int image_height = 96;
  int image_width = 128;
  BevRect range{-20.0, 20.0, -20.0, 20.0};
  double ground_z = 0.0;
};

class SceneError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Places boxes uniformly at random with non-overlapping footprints
/// (rejection sampling, at most 1000 attempts per box) and agents evenly
/// along the range perimeter, cameras aimed at the range center. Identical
/// (config, seed) yields bit-identical scenes. Throws SceneError when
/// placement exhausts its attempts.
Scene generate_scene(const SceneGenConfig& config, std::uint64_t seed);

/// Per-pixel nearest hit against box faces and the ground plane.
RenderedView render(const Scene& scene, int agent_id);

/// Position jittered by i.i.d. Gaussian(0, sigma^2) per axis; yaw is kept.
/// sigma = 0 returns the rig unchanged. Throws on negative sigma.
AgentRig perturb_pose(const AgentRig& rig, double sigma, std::uint64_t seed);

std::string save_scene(const Scene& scene);

/// Parses a scene document; throws SceneError naming the offending key or
/// parse position on malformed input.
Scene load_scene(const std::string& text);

}  // namespace coca
