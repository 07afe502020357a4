#include <cstdint>
#include <fstream>
#include <iostream>
#include <limits>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "coca/harness.hpp"

namespace {

struct CliOptions {
  coca::RunConfig config;
  std::string out_path;
  std::string dump_frames_dir;
  std::string spacing = "linear";
  std::string budget = "";
  std::vector<int> agent_counts{1, 2, 4, 8};
  std::vector<std::string> budgets{"0", "1024", "16384", "262144", "inf"};
  std::vector<double> pose_sigmas{0.0, 0.2, 0.4, 0.6};
};

std::uint64_t parse_budget(const std::string& text) {
  if (text == "inf") {
    return std::numeric_limits<std::uint64_t>::max();
  }
  return std::stoull(text);
}

void add_run_options(CLI::App* cmd, CliOptions& opt) {
  coca::RunConfig& cfg = opt.config;
  cmd->set_config("--config");

  cmd->add_option("--seed", cfg.seed, "Base seed for scenes and noise");
  cmd->add_option("--reps", cfg.repetitions, "Seeded repetitions per sweep point");
  cmd->add_option("--out", opt.out_path, "CSV output path (default: stdout)");
  cmd->add_option("--dump-frames", opt.dump_frames_dir,
                  "Directory for raw wire frames, one file per transmitted frame");
  cmd->add_option("--scene-file", cfg.scene_file, "Ingest this scene instead of generating");

  cmd->add_option("--n-agents", cfg.scene.num_agents, "Collaborating agents");
  cmd->add_option("--boxes", cfg.scene.box_count, "Objects per generated scene");
  cmd->add_option("--classes", cfg.scene.num_classes, "Object classes");
  cmd->add_option("--range", [&cfg](const std::vector<std::string>& vals) {
    const double half = 0.5 * std::stod(vals.at(0));
    cfg.scene.range = coca::BevRect{-half, half, -half, half};
    return true;
  }, "Square detection range side length, meters")->expected(1);
  cmd->add_option("--min-gap", cfg.scene.min_gap, "Clearance between box footprints, meters");
  cmd->add_option("--length-min", cfg.scene.length_min, "Box length range lower bound, meters");
  cmd->add_option("--length-max", cfg.scene.length_max, "Box length range upper bound, meters");
  cmd->add_option("--width-min", cfg.scene.width_min, "Box width range lower bound, meters");
  cmd->add_option("--width-max", cfg.scene.width_max, "Box width range upper bound, meters");
  cmd->add_option("--height-min", cfg.scene.height_min, "Box height range lower bound, meters");
  cmd->add_option("--height-max", cfg.scene.height_max, "Box height range upper bound, meters");
  cmd->add_option("--box-inset", cfg.scene.box_inset, "Box keep-out from the range edge, meters");
  cmd->add_option("--camera-height", cfg.scene.camera_height, "Camera height, meters");
  cmd->add_option("--focal", cfg.scene.focal, "Focal length (fx = fy), pixels");
  cmd->add_option("--image-height", cfg.scene.image_height, "Image rows");
  cmd->add_option("--image-width", cfg.scene.image_width, "Image columns");

  cmd->add_option("--spacing", opt.spacing, "Depth bin spacing: uniform | linear")
      ->check(CLI::IsMember({"uniform", "linear"}));
  cmd->add_option("--d-min", cfg.d_min, "Nearest binned depth, meters");
  cmd->add_option("--d-max", cfg.d_max, "Farthest binned depth, meters");
  cmd->add_option("--bins", cfg.depth_bins, "Depth bin count");
  cmd->add_option("--cell-xy", cfg.cell_xy, "BEV cell size, meters");
  cmd->add_option("--cell-z", cfg.cell_z, "Vertical cell size, meters");
  cmd->add_option("--z-cells", cfg.z_cells, "Vertical cell count");

  cmd->add_option("--sigma-f", cfg.sigma_f, "Feature noise standard deviation");
  cmd->add_option("--sigma-d", cfg.sigma_d, "Depth logit noise standard deviation");
  cmd->add_option("--kappa0", cfg.sharpness.base, "Depth logit sharpness at zero range");
  cmd->add_option("--kappa-slope", cfg.sharpness.range_falloff,
                  "Sharpness falloff with range");
  cmd->add_option("--pose-sigma", cfg.pose_sigma, "Pose noise standard deviation, meters");

  cmd->add_flag("--co-depth,!--no-co-depth", cfg.co_depth, "Collaborative depth estimation");
  cmd->add_flag("--co-fl,!--no-co-fl", cfg.co_fl, "Collaborative feature fusion");
  cmd->add_option("--u-thre", cfg.u_threshold, "Depth uncertainty threshold, bits");
  cmd->add_option("--p-thre", cfg.p_threshold, "Depth confidence gate in fusion");
  cmd->add_option("--c-thre", cfg.c_threshold, "Detection confidence threshold");
  cmd->add_option("--budget", opt.budget,
                  "Byte budget per round (thresholds calibrated); number or 'inf'");

  cmd->add_option("--alpha", cfg.fusion.alpha, "Fusion weight on ego log-odds");
  cmd->add_option("--beta", cfg.fusion.beta, "Fusion weight on the consistency score");
  cmd->add_option("--gamma", cfg.fusion.gamma, "Fusion bias");

  cmd->add_option("--nms-iou", cfg.nms_iou, "NMS suppression IoU");
  cmd->add_option("--conf-floor", cfg.confidence_floor, "Detection confidence floor");
  cmd->add_option("--prior-length", cfg.prior.length, "Predicted box length, meters");
  cmd->add_option("--prior-width", cfg.prior.width, "Predicted box width, meters");
  cmd->add_option("--prior-height", cfg.prior.height, "Predicted box height, meters");
}

void finalize(CliOptions& opt) {
  opt.config.spacing = opt.spacing == "uniform" ? coca::DepthSpacing::Uniform
                                                : coca::DepthSpacing::LinearIncreasing;
  if (!opt.budget.empty()) {
    opt.config.budget = parse_budget(opt.budget);
  }
  if (!opt.dump_frames_dir.empty()) {
    std::string prefix = opt.dump_frames_dir;
    if (prefix.back() != '/') {
      prefix += '/';
    }
    opt.config.dump_frames_prefix = prefix;
  }
}

int emit(const std::vector<coca::SweepRow>& rows, const CliOptions& opt) {
  const std::string csv = coca::report_csv(rows, opt.config);
  if (opt.out_path.empty()) {
    std::cout << csv;
  } else {
    std::ofstream out(opt.out_path, std::ios::trunc);
    if (!out) {
      std::cerr << "cannot open " << opt.out_path << "\n";
      return 1;
    }
    out << csv;
  }
  std::cerr << coca::summarize(rows, opt.config);
  double elapsed = 0;
  for (const auto& row : rows) {
    elapsed += row.report.elapsed_ms;
  }
  std::cerr << "total pipeline time " << elapsed / 1000.0 << " s\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Collaborative camera-only 3D detection simulator"};
  app.require_subcommand(1);

  CliOptions opt;

  CLI::App* cmd_run = app.add_subcommand("run", "Seeded repetitions of one configuration");
  CLI::App* cmd_agents =
      app.add_subcommand("sweep-agents", "Detection quality vs number of collaborators");
  CLI::App* cmd_bandwidth =
      app.add_subcommand("sweep-bandwidth", "Detection quality vs per-round byte budget");
  CLI::App* cmd_pose = app.add_subcommand("sweep-pose", "Robustness to pose noise");
  CLI::App* cmd_spacing =
      app.add_subcommand("sweep-spacing", "Uniform vs linear-increasing depth bins");
  CLI::App* cmd_gen = app.add_subcommand("gen-scene", "Generate and print a scene document");

  for (CLI::App* cmd : {cmd_run, cmd_agents, cmd_bandwidth, cmd_pose, cmd_spacing, cmd_gen}) {
    add_run_options(cmd, opt);
  }
  cmd_agents->add_option("--agent-counts", opt.agent_counts, "Agent counts to sweep");
  cmd_bandwidth->add_option("--budgets", opt.budgets,
                            "Per-round byte budgets to sweep; 'inf' allowed");
  cmd_pose->add_option("--pose-sigmas", opt.pose_sigmas, "Pose noise levels, meters");

  CLI11_PARSE(app, argc, argv);
  finalize(opt);

  try {
    if (cmd_gen->parsed()) {
      const coca::Scene scene = coca::generate_scene(opt.config.scene, opt.config.seed);
      const std::string text = coca::save_scene(scene);
      if (opt.out_path.empty()) {
        std::cout << text;
      } else {
        std::ofstream out(opt.out_path, std::ios::trunc);
        if (!out) {
          std::cerr << "cannot open " << opt.out_path << "\n";
          return 1;
        }
        out << text;
      }
      return 0;
    }
    if (cmd_run->parsed()) {
      return emit(coca::run_repetitions(opt.config), opt);
    }
    if (cmd_agents->parsed()) {
      return emit(coca::sweep_agents(opt.config, opt.agent_counts), opt);
    }
    if (cmd_bandwidth->parsed()) {
      std::vector<std::uint64_t> budgets;
      for (const std::string& b : opt.budgets) {
        budgets.push_back(parse_budget(b));
      }
      return emit(coca::sweep_bandwidth(opt.config, budgets), opt);
    }
    if (cmd_pose->parsed()) {
      return emit(coca::sweep_pose_noise(opt.config, opt.pose_sigmas), opt);
    }
    if (cmd_spacing->parsed()) {
      return emit(coca::sweep_spacing(opt.config), opt);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
