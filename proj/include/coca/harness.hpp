#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "coca/codepth.hpp"
#include "coca/cofl.hpp"
#include "coca/geometry.hpp"
#include "coca/metrics.hpp"
#include "coca/perception.hpp"
#include "coca/scene.hpp"
#include "coca/wire.hpp"

namespace coca {

/// Everything a run needs. Defaults describe the standard desk-scale
/// suite: perimeter cameras around a 40 m x 40 m range, linear-increasing
/// depth bins, one object class.
struct RunConfig {
  SceneGenConfig scene;
  std::string scene_file;  // when set, ingest this scene instead of generating

  DepthSpacing spacing = DepthSpacing::LinearIncreasing;
  double d_min = 1.0;
  double d_max = 64.0;
  int depth_bins = 48;

  double cell_xy = 1.0;
  double cell_z = 0.75;
  int z_cells = 4;

  double sigma_f = 0.05;
  double sigma_d = 0.5;
  DepthSharpness sharpness{4.0, 4.0};
  double pose_sigma = 0.0;

  bool co_depth = true;
  bool co_fl = true;
  double u_threshold = 1.0;   // bits
  double p_threshold = 0.25;
  double c_threshold = 0.25;
  /// Byte budget per communication round across all ordered pairs; when
  /// set, the round thresholds come from calibration instead.
  std::optional<std::uint64_t> budget;

  DepthFusionParams fusion;
  double nms_iou = 0.3;
  double confidence_floor = 0.1;
  std::vector<double> ap_thresholds{0.3, 0.5, 0.7, 0.8};
  BoxSizePrior prior;

  std::uint64_t seed = 1;
  int repetitions = 20;
  std::string dump_frames_prefix;  // when set, raw frames land here
};

struct AgentReport {
  int agent = 0;
  std::vector<double> ap;  // aligned with RunConfig::ap_thresholds
  std::optional<double> depth_full_single;
  std::optional<double> depth_fg_single;
  std::optional<double> depth_full_collab;
  std::optional<double> depth_fg_collab;
  std::uint64_t bytes_received = 0;
};

struct RunReport {
  std::vector<AgentReport> agents;
  CommLedger ledger;
  double u_threshold_used = 0;
  double c_threshold_used = 0;
  double elapsed_ms = 0;  // wall time; never part of the CSV

  double mean_ap(std::size_t threshold_index) const;
};

/// Full two-round pipeline for one scene: render, encode, estimate depth,
/// lift; depth-message exchange and consistency fusion; collapse;
/// detection-feature exchange and max fusion; decode, NMS, metrics.
/// Deterministic for a fixed (scene, config).
RunReport run_pipeline(const Scene& scene, const RunConfig& config);

struct SweepRow {
  std::string sweep;
  std::string param;  // printed verbatim in the CSV
  int repetition = 0;
  std::uint64_t scene_seed = 0;
  RunReport report;
};

/// R seeded repetitions of the configured run.
std::vector<SweepRow> run_repetitions(const RunConfig& config);

/// Same seeded scenes per point; only the collaborator count varies.
std::vector<SweepRow> sweep_agents(const RunConfig& config, const std::vector<int>& agent_counts);

/// Budgets in bytes per round; UINT64_MAX means unconstrained.
std::vector<SweepRow> sweep_bandwidth(const RunConfig& config,
                                      const std::vector<std::uint64_t>& budgets);

std::vector<SweepRow> sweep_pose_noise(const RunConfig& config, const std::vector<double>& sigmas);

/// Uniform vs linear-increasing depth spacing under identical seeds.
std::vector<SweepRow> sweep_spacing(const RunConfig& config);

/// One row per (repetition, agent); stable column order. Undefined values
/// (empty metric regions, zero communication) print as "nan".
std::string report_csv(const std::vector<SweepRow>& rows, const RunConfig& config);

/// Per-parameter mean and sample standard deviation of each AP threshold,
/// plus mean communication volume.
std::string summarize(const std::vector<SweepRow>& rows, const RunConfig& config);

/// Grid over the detection range. The lowest cell layer is centered on the
/// ground plane so ground-surface voxels sit at their true camera depth.
VoxelGrid make_grid(const RunConfig& config, const BevRect& range, double ground_z);
DepthBinning make_run_binning(const RunConfig& config);

/// Scene for one repetition: generated from the config, or loaded from
/// scene_file (in which case agent_override must be absent).
Scene scene_for_run(const RunConfig& config, std::uint64_t scene_seed, int agent_override = -1);

/// Worker cap honoring the COCA_THREADS environment variable.
int max_threads();

}  // namespace coca
