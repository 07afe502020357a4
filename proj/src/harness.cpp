#include "coca/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "coca/rng.hpp"

namespace coca {

namespace {

// Independent seed streams per randomness consumer.
constexpr std::uint64_t kSceneStream = 1;
constexpr std::uint64_t kEncodeStream = 2;
constexpr std::uint64_t kDepthStream = 3;
constexpr std::uint64_t kPoseStream = 4;

std::string format_double(double v) {
  if (std::isnan(v)) {
    return "nan";
  }
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

std::string format_optional(const std::optional<double>& v) {
  return v ? format_double(*v) : "nan";
}

void write_frame_file(const std::string& prefix, int round, int sender, int receiver,
                      const WireFrame& frame) {
  std::ostringstream name;
  name << prefix << "round" << round << "_" << sender << "to" << receiver << ".bin";
  std::ofstream out(name.str(), std::ios::binary | std::ios::trunc);
  if (!out) {
    throw std::runtime_error("cannot open frame dump file " + name.str());
  }
  out.write(reinterpret_cast<const char*>(frame.bytes.data()),
            static_cast<std::streamsize>(frame.bytes.size()));
}

struct AgentState {
  RenderedView view;
  AgentRig believed;
  DepthDistribution dist;
  Eigen::VectorXd score;
  VoxelPixelMap map;
  VoxelTensor vt;
  Eigen::VectorXd uncertainty;
  Eigen::VectorXd fused_conf;
  BevTensor bev;
};

}  // namespace

double RunReport::mean_ap(std::size_t threshold_index) const {
  if (agents.empty()) {
    return 0;
  }
  double sum = 0;
  for (const AgentReport& a : agents) {
    sum += a.ap.at(threshold_index);
  }
  return sum / static_cast<double>(agents.size());
}

VoxelGrid make_grid(const RunConfig& config, const BevRect& range, double ground_z) {
  VoxelGrid grid;
  grid.origin = Eigen::Vector3d(range.x_min, range.y_min, ground_z - 0.5 * config.cell_z);
  grid.cell = Eigen::Vector3d(config.cell_xy, config.cell_xy, config.cell_z);
  grid.nx = std::max(1, static_cast<int>(std::lround(range.width() / config.cell_xy)));
  grid.ny = std::max(1, static_cast<int>(std::lround(range.height() / config.cell_xy)));
  grid.nz = config.z_cells;
  return grid;
}

DepthBinning make_run_binning(const RunConfig& config) {
  return make_binning(config.spacing, config.d_min, config.d_max, config.depth_bins);
}

Scene scene_for_run(const RunConfig& config, std::uint64_t scene_seed, int agent_override) {
  if (!config.scene_file.empty()) {
    if (agent_override >= 0) {
      throw std::invalid_argument("agent-count sweeps need generated scenes, not a scene file");
    }
    std::ifstream in(config.scene_file);
    if (!in) {
      throw SceneError("cannot open scene file " + config.scene_file);
    }
    std::ostringstream text;
    text << in.rdbuf();
    return load_scene(text.str());
  }
  SceneGenConfig gen = config.scene;
  if (agent_override >= 0) {
    gen.num_agents = agent_override;
  }
  return generate_scene(gen, scene_seed);
}

RunReport run_pipeline(const Scene& scene, const RunConfig& config) {
  const auto t_start = std::chrono::steady_clock::now();

  const DepthBinning binning = make_run_binning(config);
  const VoxelGrid grid = make_grid(config, scene.range, scene.ground_z);
  int num_classes = 1;
  for (const GroundTruthBox& b : scene.boxes) {
    num_classes = std::max(num_classes, b.class_id);
  }
  const ClassTemplates templates = ClassTemplates::unit(num_classes, num_classes + 1);

  const int n = static_cast<int>(scene.agents.size());
  std::vector<AgentState> agents(static_cast<std::size_t>(n));

  for (int i = 0; i < n; ++i) {
    const AgentRig& rig = scene.agents[static_cast<std::size_t>(i)];
    AgentState& st = agents[static_cast<std::size_t>(i)];
    st.view = render(scene, rig.id);
    // Localization error goes into the pose the agent believes, which
    // drives projection and message placement; the image itself comes from
    // the true pose.
    st.believed =
        config.pose_sigma > 0
            ? perturb_pose(rig, config.pose_sigma,
                           derive_seed(config.seed, kPoseStream, static_cast<std::uint64_t>(i)))
            : rig;
    const ImageFeature feature =
        encode(st.view, templates, config.sigma_f,
               derive_seed(config.seed, kEncodeStream, static_cast<std::uint64_t>(i)));
    st.dist = estimate_depth(st.view, binning, config.sharpness, config.sigma_d,
                             derive_seed(config.seed, kDepthStream, static_cast<std::uint64_t>(i)));
    st.map = build_voxel_pixel_map(grid, st.believed.projection(), rig.image_height,
                                   rig.image_width, binning);
    st.vt = voxelize(feature, st.dist, st.map);
    st.uncertainty = uncertainty_map(st.dist);
  }

  RunReport report;
  double u_thre = config.u_threshold;
  double c_thre = config.c_threshold;

  // Round 1: depth evidence exchange and consistency fusion.
  const bool depth_round = config.co_depth && n > 1;
  if (depth_round && config.budget) {
    DepthCostModel model;
    model.channels = templates.channels();
    model.receivers_per_sender = n - 1;
    model.max_uncertainty = std::log2(static_cast<double>(binning.count()));
    for (const AgentState& st : agents) {
      model.uncertainty.push_back(st.uncertainty);
      Eigen::VectorXi rays = Eigen::VectorXi::Zero(st.view.height * st.view.width);
      for (int idx = 0; idx < st.map.grid.size(); ++idx) {
        if (st.map.present(idx)) {
          rays[st.map.pixel(idx)] += 1;
        }
      }
      model.ray_voxels.push_back(std::move(rays));
    }
    u_thre = calibrate_uncertainty_threshold(model, *config.budget);
  }
  if (depth_round) {
    std::vector<std::vector<DepthMessage>> inbox(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        if (i == j) {
          continue;
        }
        const DepthMessage msg =
            pack_depth_message(agents[static_cast<std::size_t>(i)].vt,
                               agents[static_cast<std::size_t>(i)].uncertainty,
                               agents[static_cast<std::size_t>(i)].map, u_thre,
                               scene.agents[static_cast<std::size_t>(i)].id,
                               scene.agents[static_cast<std::size_t>(j)].id);
        if (msg.count() == 0) {
          continue;  // empty frames carry nothing and are not transmitted
        }
        const WireFrame frame = encode_frame(msg, grid.nx, grid.ny, grid.nz);
        report.ledger.record(1, msg.sender, msg.receiver, frame.size());
        if (!config.dump_frames_prefix.empty()) {
          write_frame_file(config.dump_frames_prefix, 1, msg.sender, msg.receiver, frame);
        }
        inbox[static_cast<std::size_t>(j)].push_back(
            std::get<DecodedDepthFrame>(decode_frame(frame)).message);
      }
    }
    for (int j = 0; j < n; ++j) {
      AgentState& st = agents[static_cast<std::size_t>(j)];
      if (inbox[static_cast<std::size_t>(j)].empty()) {
        st.score = Eigen::VectorXd::Zero(grid.size());
        st.fused_conf = st.vt.depth_conf;  // nothing arrived: keep the single view
        continue;
      }
      st.score = matching_score(st.vt, inbox[static_cast<std::size_t>(j)], config.p_threshold);
      st.fused_conf = fuse_depth(st.vt.depth_conf, st.score, st.map, config.fusion);
    }
  } else {
    for (AgentState& st : agents) {
      st.score = Eigen::VectorXd::Zero(grid.size());
      st.fused_conf = st.vt.depth_conf;
    }
  }

  for (AgentState& st : agents) {
    st.bev = collapse(VoxelTensor{st.vt.features, st.fused_conf}, grid);
  }

  // Round 2: detection feature exchange, elementwise max fusion.
  const bool det_round = config.co_fl && n > 1;
  if (det_round) {
    std::vector<Eigen::VectorXd> confidence(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      confidence[static_cast<std::size_t>(i)] =
          confidence_map(agents[static_cast<std::size_t>(i)].bev, templates);
    }
    if (config.budget) {
      DetCostModel model;
      model.channels = templates.channels();
      model.receivers_per_sender = n - 1;
      model.confidence = confidence;
      c_thre = calibrate_confidence_threshold(model, *config.budget);
    }
    std::vector<std::vector<DetMessage>> inbox(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        if (i == j) {
          continue;
        }
        const DetMessage msg = pack_detection_message(
            agents[static_cast<std::size_t>(i)].bev, confidence[static_cast<std::size_t>(i)],
            c_thre, scene.agents[static_cast<std::size_t>(i)].id,
            scene.agents[static_cast<std::size_t>(j)].id);
        if (msg.count() == 0) {
          continue;
        }
        const WireFrame frame = encode_frame(msg, grid.nx, grid.ny);
        report.ledger.record(2, msg.sender, msg.receiver, frame.size());
        if (!config.dump_frames_prefix.empty()) {
          write_frame_file(config.dump_frames_prefix, 2, msg.sender, msg.receiver, frame);
        }
        inbox[static_cast<std::size_t>(j)].push_back(
            std::get<DecodedDetFrame>(decode_frame(frame)).message);
      }
    }
    for (int j = 0; j < n; ++j) {
      AgentState& st = agents[static_cast<std::size_t>(j)];
      if (!inbox[static_cast<std::size_t>(j)].empty()) {
        st.bev = fuse_features(st.bev, inbox[static_cast<std::size_t>(j)]);
      }
    }
  }

  report.u_threshold_used = u_thre;
  report.c_threshold_used = c_thre;

  for (int i = 0; i < n; ++i) {
    AgentState& st = agents[static_cast<std::size_t>(i)];
    const DenseHeatmap heatmap = decode(st.bev, templates, grid, config.prior);
    const DetectionSet dets =
        nms(heatmap, config.confidence_floor, config.nms_iou, grid, config.prior);

    AgentReport ar;
    ar.agent = scene.agents[static_cast<std::size_t>(i)].id;
    for (const double t : config.ap_thresholds) {
      ar.ap.push_back(average_precision(dets, scene.boxes, t).ap);
    }
    ar.depth_full_single =
        depth_accuracy(st.dist.values, st.view, binning, DepthRegion::FullPlane);
    ar.depth_fg_single =
        depth_accuracy(st.dist.values, st.view, binning, DepthRegion::Foreground);
    ar.depth_full_collab = depth_accuracy_from_voxels(st.dist.values, st.fused_conf,
                                                      st.vt.depth_conf, st.score, st.map,
                                                      st.believed, st.view, binning,
                                                      DepthRegion::FullPlane);
    ar.depth_fg_collab = depth_accuracy_from_voxels(st.dist.values, st.fused_conf,
                                                    st.vt.depth_conf, st.score, st.map,
                                                    st.believed, st.view, binning,
                                                    DepthRegion::Foreground);
    ar.bytes_received = report.ledger.received_by(ar.agent);
    report.agents.push_back(std::move(ar));
  }

  report.elapsed_ms = std::chrono::duration<double, std::milli>(
                          std::chrono::steady_clock::now() - t_start)
                          .count();
  return report;
}

int max_threads() {
  if (const char* env = std::getenv("COCA_THREADS")) {
    const int v = std::atoi(env);
    if (v > 0) {
      return v;
    }
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

namespace {

template <typename Fn>
void parallel_for(int count, Fn&& fn) {
  const int workers = std::min(max_threads(), count);
  if (workers <= 1) {
    for (int i = 0; i < count; ++i) {
      fn(i);
    }
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (int t = 0; t < workers; ++t) {
    pool.emplace_back([&]() {
      for (int i = next.fetch_add(1); i < count; i = next.fetch_add(1)) {
        fn(i);
      }
    });
  }
  for (std::thread& t : pool) {
    t.join();
  }
}

struct Job {
  std::string sweep;
  std::string param;
  int repetition = 0;
  RunConfig config;
  int agent_override = -1;
};

std::vector<SweepRow> execute(const std::vector<Job>& jobs) {
  std::vector<SweepRow> rows(jobs.size());
  std::exception_ptr failure;
  std::atomic<bool> failed{false};
  parallel_for(static_cast<int>(jobs.size()), [&](int i) {
    if (failed.load()) {
      return;
    }
    try {
      const Job& job = jobs[static_cast<std::size_t>(i)];
      const std::uint64_t scene_seed =
          derive_seed(job.config.seed, kSceneStream, static_cast<std::uint64_t>(job.repetition));
      const Scene scene = scene_for_run(job.config, scene_seed, job.agent_override);
      RunConfig cfg = job.config;
      cfg.seed = derive_seed(job.config.seed, kSceneStream + 100,
                             static_cast<std::uint64_t>(job.repetition));
      SweepRow row;
      row.sweep = job.sweep;
      row.param = job.param;
      row.repetition = job.repetition;
      row.scene_seed = scene_seed;
      row.report = run_pipeline(scene, cfg);
      rows[static_cast<std::size_t>(i)] = std::move(row);
    } catch (...) {
      if (!failed.exchange(true)) {
        failure = std::current_exception();
      }
    }
  });
  if (failed.load()) {
    std::rethrow_exception(failure);
  }
  return rows;
}

std::string format_u64(std::uint64_t v) { return std::to_string(v); }

}  // namespace

std::vector<SweepRow> run_repetitions(const RunConfig& config) {
  std::vector<Job> jobs;
  for (int r = 0; r < config.repetitions; ++r) {
    Job job;
    job.sweep = "run";
    job.param = format_u64(static_cast<std::uint64_t>(config.scene.num_agents));
    job.repetition = r;
    job.config = config;
    if (!config.dump_frames_prefix.empty()) {
      job.config.dump_frames_prefix = config.dump_frames_prefix + "rep" + std::to_string(r) + "_";
    }
    jobs.push_back(std::move(job));
  }
  return execute(jobs);
}

std::vector<SweepRow> sweep_agents(const RunConfig& config,
                                   const std::vector<int>& agent_counts) {
  std::vector<Job> jobs;
  for (const int n : agent_counts) {
    for (int r = 0; r < config.repetitions; ++r) {
      Job job;
      job.sweep = "agents";
      job.param = std::to_string(n);
      job.repetition = r;
      job.config = config;
      job.agent_override = n;
      jobs.push_back(std::move(job));
    }
  }
  return execute(jobs);
}

std::vector<SweepRow> sweep_bandwidth(const RunConfig& config,
                                      const std::vector<std::uint64_t>& budgets) {
  std::vector<Job> jobs;
  for (const std::uint64_t b : budgets) {
    for (int r = 0; r < config.repetitions; ++r) {
      Job job;
      job.sweep = "bandwidth";
      job.param = b == std::numeric_limits<std::uint64_t>::max() ? "inf" : format_u64(b);
      job.repetition = r;
      job.config = config;
      job.config.budget = b;
      jobs.push_back(std::move(job));
    }
  }
  return execute(jobs);
}

std::vector<SweepRow> sweep_pose_noise(const RunConfig& config,
                                       const std::vector<double>& sigmas) {
  std::vector<Job> jobs;
  for (const double s : sigmas) {
    for (int r = 0; r < config.repetitions; ++r) {
      Job job;
      job.sweep = "pose";
      job.param = format_double(s);
      job.repetition = r;
      job.config = config;
      job.config.pose_sigma = s;
      jobs.push_back(std::move(job));
    }
  }
  return execute(jobs);
}

std::vector<SweepRow> sweep_spacing(const RunConfig& config) {
  std::vector<Job> jobs;
  for (const DepthSpacing mode : {DepthSpacing::Uniform, DepthSpacing::LinearIncreasing}) {
    for (int r = 0; r < config.repetitions; ++r) {
      Job job;
      job.sweep = "spacing";
      job.param = mode == DepthSpacing::Uniform ? "uniform" : "linear";
      job.repetition = r;
      job.config = config;
      job.config.spacing = mode;
      jobs.push_back(std::move(job));
    }
  }
  return execute(jobs);
}

std::string report_csv(const std::vector<SweepRow>& rows, const RunConfig& config) {
  std::ostringstream out;
  out << "sweep,param,repetition,scene_seed,agent";
  for (const double t : config.ap_thresholds) {
    out << ",ap" << static_cast<int>(std::lround(t * 100));
  }
  out << ",depth_full_single,depth_full_collab,depth_fg_single,depth_fg_collab"
      << ",bytes_received,log2_bytes_received,bytes_round1,bytes_round2,bytes_total"
      << ",u_threshold,c_threshold\n";
  for (const SweepRow& row : rows) {
    for (const AgentReport& a : row.report.agents) {
      out << row.sweep << ',' << row.param << ',' << row.repetition << ',' << row.scene_seed
          << ',' << a.agent;
      for (const double ap : a.ap) {
        out << ',' << format_double(ap);
      }
      out << ',' << format_optional(a.depth_full_single) << ','
          << format_optional(a.depth_full_collab) << ',' << format_optional(a.depth_fg_single)
          << ',' << format_optional(a.depth_fg_collab);
      const auto log2_bytes = comm_volume_log2(a.bytes_received);
      out << ',' << a.bytes_received << ','
          << (log2_bytes ? format_double(*log2_bytes) : "nan") << ','
          << row.report.ledger.round_total(1) << ',' << row.report.ledger.round_total(2) << ','
          << row.report.ledger.total() << ',' << format_double(row.report.u_threshold_used)
          << ',' << format_double(row.report.c_threshold_used) << '\n';
    }
  }
  return out.str();
}

std::string summarize(const std::vector<SweepRow>& rows, const RunConfig& config) {
  // Preserve first-appearance order of parameters.
  std::vector<std::string> params;
  for (const SweepRow& row : rows) {
    if (std::find(params.begin(), params.end(), row.param) == params.end()) {
      params.push_back(row.param);
    }
  }
  std::ostringstream out;
  for (const std::string& param : params) {
    std::vector<std::vector<double>> ap(config.ap_thresholds.size());
    std::vector<double> volume;
    for (const SweepRow& row : rows) {
      if (row.param != param) {
        continue;
      }
      for (const AgentReport& a : row.report.agents) {
        for (std::size_t t = 0; t < a.ap.size(); ++t) {
          ap[t].push_back(a.ap[t]);
        }
        if (a.bytes_received > 0) {
          volume.push_back(std::log2(static_cast<double>(a.bytes_received)));
        }
      }
    }
    out << (rows.empty() ? "" : rows.front().sweep) << "=" << param << ":";
    for (std::size_t t = 0; t < ap.size(); ++t) {
      double mean = 0;
      for (const double v : ap[t]) {
        mean += v;
      }
      mean = ap[t].empty() ? 0 : mean / static_cast<double>(ap[t].size());
      double var = 0;
      for (const double v : ap[t]) {
        var += (v - mean) * (v - mean);
      }
      const double stddev =
          ap[t].size() > 1 ? std::sqrt(var / static_cast<double>(ap[t].size() - 1)) : 0.0;
      char buf[96];
      std::snprintf(buf, sizeof(buf), " AP@%d %.4f+/-%.4f",
                    static_cast<int>(std::lround(config.ap_thresholds[t] * 100)), mean, stddev);
      out << buf;
    }
    if (!volume.empty()) {
      double mean = 0;
      for (const double v : volume) {
        mean += v;
      }
      char buf[48];
      std::snprintf(buf, sizeof(buf), " log2B %.2f", mean / static_cast<double>(volume.size()));
      out << buf;
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace coca
