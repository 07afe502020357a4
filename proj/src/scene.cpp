#include "coca/scene.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include <json.hpp>

#include "coca/metrics.hpp"
#include "coca/rng.hpp"

namespace coca {

Eigen::Matrix3d AgentRig::world_to_camera() const {
  const double c = std::cos(yaw);
  const double s = std::sin(yaw);
  Eigen::Matrix3d rot;
  rot.row(0) = Eigen::Vector3d(s, -c, 0);  // right
  rot.row(1) = Eigen::Vector3d(0, 0, -1);  // down
  rot.row(2) = Eigen::Vector3d(c, s, 0);   // forward (optical axis)
  return rot;
}

ProjectionMatrix AgentRig::projection() const {
  Eigen::Matrix3d intrinsics;
  intrinsics << fx, 0, cx, 0, fy, cy, 0, 0, 1;
  const Eigen::Matrix3d rot = world_to_camera();
  ProjectionMatrix proj;
  proj.leftCols<3>() = intrinsics * rot;
  proj.col(3) = intrinsics * (-rot * position);
  return proj;
}

namespace {

constexpr double kRayEps = 1e-9;

// Entry depth of a ray against an upright yawed cuboid, in the caller's ray
// parametrization; nullopt on miss. Slab test in the box frame.
std::optional<double> ray_box_hit(const Eigen::Vector3d& origin, const Eigen::Vector3d& dir,
                                  const GroundTruthBox& box) {
  const double c = std::cos(box.yaw);
  const double s = std::sin(box.yaw);
  const Eigen::Vector3d rel = origin - Eigen::Vector3d(box.x, box.y, box.z);
  const Eigen::Vector3d o(c * rel.x() + s * rel.y(), -s * rel.x() + c * rel.y(), rel.z());
  const Eigen::Vector3d d(c * dir.x() + s * dir.y(), -s * dir.x() + c * dir.y(), dir.z());
  const Eigen::Vector3d ext(0.5 * box.l, 0.5 * box.w, 0.5 * box.h);

  double t_near = -std::numeric_limits<double>::infinity();
  double t_far = std::numeric_limits<double>::infinity();
  for (int axis = 0; axis < 3; ++axis) {
    if (std::abs(d[axis]) < 1e-300) {
      if (std::abs(o[axis]) > ext[axis]) {
        return std::nullopt;
      }
      continue;
    }
    double t1 = (-ext[axis] - o[axis]) / d[axis];
    double t2 = (ext[axis] - o[axis]) / d[axis];
    if (t1 > t2) {
      std::swap(t1, t2);
    }
    t_near = std::max(t_near, t1);
    t_far = std::min(t_far, t2);
    if (t_near > t_far) {
      return std::nullopt;
    }
  }
  if (t_near > kRayEps) {
    return t_near;
  }
  if (t_far > kRayEps) {
    return t_far;  // ray starts inside the box
  }
  return std::nullopt;
}

}  // namespace

RenderedView render(const Scene& scene, int agent_id) {
  const AgentRig* rig = nullptr;
  for (const AgentRig& a : scene.agents) {
    if (a.id == agent_id) {
      rig = &a;
      break;
    }
  }
  if (rig == nullptr) {
    throw SceneError("render: unknown agent id " + std::to_string(agent_id));
  }

  RenderedView view;
  view.height = rig->image_height;
  view.width = rig->image_width;
  const int num_pixels = view.height * view.width;
  view.depth = Eigen::VectorXd::Constant(num_pixels, std::numeric_limits<double>::infinity());
  view.semantic = Eigen::VectorXi::Zero(num_pixels);
  view.instance = Eigen::VectorXi::Constant(num_pixels, -1);

  const Eigen::Matrix3d cam_from_world = rig->world_to_camera();
  const Eigen::Matrix3d world_from_cam = cam_from_world.transpose();

  for (int h = 0; h < view.height; ++h) {
    for (int w = 0; w < view.width; ++w) {
      // Unit camera-frame depth per parameter step, so the hit parameter is
      // directly the camera depth.
      const Eigen::Vector3d dir_cam((w - rig->cx) / rig->fx, (h - rig->cy) / rig->fy, 1.0);
      const Eigen::Vector3d dir = world_from_cam * dir_cam;

      double best = std::numeric_limits<double>::infinity();
      int best_box = -1;
      for (std::size_t bi = 0; bi < scene.boxes.size(); ++bi) {
        const auto hit = ray_box_hit(rig->position, dir, scene.boxes[bi]);
        if (hit && *hit < best) {
          best = *hit;
          best_box = static_cast<int>(bi);
        }
      }
      if (dir.z() < -1e-300) {
        const double t_ground = (scene.ground_z - rig->position.z()) / dir.z();
        if (t_ground > kRayEps && t_ground < best) {
          best = t_ground;
          best_box = -1;
        }
      }

      const int p = view.pixel(h, w);
      if (std::isfinite(best)) {
        view.depth[p] = best;
        if (best_box >= 0) {
          view.instance[p] = best_box;
          view.semantic[p] = scene.boxes[static_cast<std::size_t>(best_box)].class_id;
        }
      }
    }
  }
  return view;
}

namespace {

double footprint_radius(const GroundTruthBox& box) {
  return 0.5 * std::hypot(box.l, box.w);
}

Eigen::Vector2d perimeter_point(const BevRect& range, double arc) {
  const double wx = range.width();
  const double wy = range.height();
  if (arc < wx) {
    return {range.x_min + arc, range.y_min};
  }
  arc -= wx;
  if (arc < wy) {
    return {range.x_max, range.y_min + arc};
  }
  arc -= wy;
  if (arc < wx) {
    return {range.x_max - arc, range.y_max};
  }
  arc -= wx;
  return {range.x_min, range.y_max - arc};
}

}  // namespace

Scene generate_scene(const SceneGenConfig& config, std::uint64_t seed) {
  if (config.num_agents < 1) {
    throw SceneError("generate_scene: need at least one agent");
  }
  Scene scene;
  scene.range = config.range;
  scene.ground_z = config.ground_z;
  scene.seed = seed;

  SeededRng rng(derive_seed(seed, 0x5ce2e));

  const double inset = config.box_inset;
  const double x_lo = config.range.x_min + inset;
  const double x_hi = config.range.x_max - inset;
  const double y_lo = config.range.y_min + inset;
  const double y_hi = config.range.y_max - inset;
  if (config.box_count > 0 && (x_lo >= x_hi || y_lo >= y_hi)) {
    throw SceneError("generate_scene: range too small for the box inset");
  }

  for (int i = 0; i < config.box_count; ++i) {
    bool placed = false;
    for (int attempt = 0; attempt < 1000 && !placed; ++attempt) {
      GroundTruthBox box;
      box.x = rng.uniform(x_lo, x_hi);
      box.y = rng.uniform(y_lo, y_hi);
      box.yaw = rng.uniform(-std::numbers::pi, std::numbers::pi);
      box.l = rng.uniform(config.length_min, config.length_max);
      box.w = rng.uniform(config.width_min, config.width_max);
      box.h = rng.uniform(config.height_min, config.height_max);
      box.z = config.ground_z + 0.5 * box.h;
      box.class_id = config.num_classes > 1 ? rng.uniform_int(1, config.num_classes) : 1;

      bool clear = true;
      for (const GroundTruthBox& other : scene.boxes) {
        const double dist = std::hypot(box.x - other.x, box.y - other.y);
        if (dist < footprint_radius(box) + footprint_radius(other) + config.min_gap) {
          clear = false;
          break;
        }
      }
      if (clear) {
        scene.boxes.push_back(box);
        placed = true;
      }
    }
    if (!placed) {
      throw SceneError("generate_scene: box placement exhausted 1000 attempts");
    }
  }

  const double perimeter = 2.0 * (config.range.width() + config.range.height());
  const Eigen::Vector2d center = config.range.center();
  for (int i = 0; i < config.num_agents; ++i) {
    AgentRig rig;
    rig.id = i;
    // Arc zero sits at the middle of the bottom edge so 1, 2 and 4 agents
    // land on edge midpoints rather than corners.
    const double arc =
        std::fmod(perimeter * i / config.num_agents + 0.5 * config.range.width(), perimeter);
    const Eigen::Vector2d pos = perimeter_point(config.range, arc);
    rig.position = Eigen::Vector3d(pos.x(), pos.y(), config.ground_z + config.camera_height);
    rig.yaw = std::atan2(center.y() - pos.y(), center.x() - pos.x());
    rig.fx = rig.fy = config.focal;
    rig.cx = 0.5 * (config.image_width - 1);
    rig.cy = 0.5 * (config.image_height - 1);
    rig.image_height = config.image_height;
    rig.image_width = config.image_width;
    scene.agents.push_back(rig);
  }
  return scene;
}

AgentRig perturb_pose(const AgentRig& rig, double sigma, std::uint64_t seed) {
  if (sigma < 0) {
    throw SceneError("perturb_pose: negative sigma");
  }
  if (sigma == 0) {
    return rig;
  }
  SeededRng rng(seed);
  AgentRig out = rig;
  out.position.x() += rng.gaussian(0, sigma);
  out.position.y() += rng.gaussian(0, sigma);
  out.position.z() += rng.gaussian(0, sigma);
  return out;
}

namespace {

using json = nlohmann::ordered_json;

const json& require(const json& j, const char* key, const char* context) {
  const auto it = j.find(key);
  if (it == j.end()) {
    throw SceneError(std::string(context) + ": missing key '" + key + "'");
  }
  return *it;
}

}  // namespace

std::string save_scene(const Scene& scene) {
  json j;
  j["range"] = {{"x_min", scene.range.x_min},
                {"x_max", scene.range.x_max},
                {"y_min", scene.range.y_min},
                {"y_max", scene.range.y_max}};
  j["ground_z"] = scene.ground_z;
  j["boxes"] = json::array();
  for (const GroundTruthBox& b : scene.boxes) {
    j["boxes"].push_back({{"class", b.class_id},
                          {"x", b.x},
                          {"y", b.y},
                          {"z", b.z},
                          {"h", b.h},
                          {"w", b.w},
                          {"l", b.l},
                          {"yaw", b.yaw}});
  }
  j["agents"] = json::array();
  for (const AgentRig& a : scene.agents) {
    j["agents"].push_back({{"id", a.id},
                           {"pos", {a.position.x(), a.position.y(), a.position.z()}},
                           {"yaw", a.yaw},
                           {"fx", a.fx},
                           {"fy", a.fy},
                           {"cx", a.cx},
                           {"cy", a.cy},
                           {"H", a.image_height},
                           {"W", a.image_width}});
  }
  j["seed"] = scene.seed;
  return j.dump(2) + "\n";
}

Scene load_scene(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw SceneError(std::string("scene: ") + e.what());
  }

  Scene scene;
  const json& range = require(j, "range", "scene");
  scene.range.x_min = require(range, "x_min", "scene.range").get<double>();
  scene.range.x_max = require(range, "x_max", "scene.range").get<double>();
  scene.range.y_min = require(range, "y_min", "scene.range").get<double>();
  scene.range.y_max = require(range, "y_max", "scene.range").get<double>();
  scene.ground_z = require(j, "ground_z", "scene").get<double>();

  for (const json& jb : require(j, "boxes", "scene")) {
    GroundTruthBox b;
    b.class_id = require(jb, "class", "scene.boxes").get<int>();
    b.x = require(jb, "x", "scene.boxes").get<double>();
    b.y = require(jb, "y", "scene.boxes").get<double>();
    b.z = require(jb, "z", "scene.boxes").get<double>();
    b.h = require(jb, "h", "scene.boxes").get<double>();
    b.w = require(jb, "w", "scene.boxes").get<double>();
    b.l = require(jb, "l", "scene.boxes").get<double>();
    b.yaw = require(jb, "yaw", "scene.boxes").get<double>();
    scene.boxes.push_back(b);
  }
  for (const json& ja : require(j, "agents", "scene")) {
    AgentRig a;
    a.id = require(ja, "id", "scene.agents").get<int>();
    const json& pos = require(ja, "pos", "scene.agents");
    if (!pos.is_array() || pos.size() != 3) {
      throw SceneError("scene.agents: 'pos' must be a 3-element array");
    }
    a.position = Eigen::Vector3d(pos[0].get<double>(), pos[1].get<double>(),
                                 pos[2].get<double>());
    a.yaw = require(ja, "yaw", "scene.agents").get<double>();
    a.fx = require(ja, "fx", "scene.agents").get<double>();
    a.fy = require(ja, "fy", "scene.agents").get<double>();
    a.cx = require(ja, "cx", "scene.agents").get<double>();
    a.cy = require(ja, "cy", "scene.agents").get<double>();
    a.image_height = require(ja, "H", "scene.agents").get<int>();
    a.image_width = require(ja, "W", "scene.agents").get<int>();
    scene.agents.push_back(a);
  }
  scene.seed = require(j, "seed", "scene").get<std::uint64_t>();
  return scene;
}

}  // namespace coca
