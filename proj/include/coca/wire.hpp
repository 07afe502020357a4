#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "coca/codepth.hpp"
#include "coca/cofl.hpp"

namespace coca {

/// Binary frame, little-endian throughout:
///   magic "CC3D" (4) | version u8 = 1 | kind u8 (1 = depth, 2 = det) |
///   sender u16 | receiver u16 | entry count u32 |
///   dims (depth: nx, ny, nz, C as u16 x 4; det: nx, ny, C as u16 x 3) |
///   entries (depth: index u32, conf f32, C x f32; det: index u32, C x f32)
struct WireFrame {
  std::vector<std::uint8_t> bytes;

  std::size_t size() const { return bytes.size(); }
};

enum class WireFault {
  BadMagic,
  BadVersion,
  BadKind,
  TruncatedFrame,
  NonMonotoneIndex,
  IndexOutOfRange,
};

class WireError : public std::runtime_error {
 public:
  WireError(WireFault fault, const std::string& what)
      : std::runtime_error(what), fault_(fault) {}
  WireFault fault() const { return fault_; }

 private:
  WireFault fault_;
};

std::size_t depth_frame_bytes(std::size_t entries, int channels);
std::size_t det_frame_bytes(std::size_t entries, int channels);

WireFrame encode_frame(const DepthMessage& msg, int nx, int ny, int nz);
WireFrame encode_frame(const DetMessage& msg, int nx, int ny);

struct DecodedDepthFrame {
  DepthMessage message;
  int nx = 0, ny = 0, nz = 0;
};
struct DecodedDetFrame {
  DetMessage message;
  int nx = 0, ny = 0;
};
using DecodedFrame = std::variant<DecodedDepthFrame, DecodedDetFrame>;

/// Parses a frame; throws WireError with the matching fault on corruption.
DecodedFrame decode_frame(const WireFrame& frame);

/// Communication volume in log base 2 of bytes; nullopt for zero bytes
/// ("no communication" rather than 0.0).
std::optional<double> comm_volume_log2(std::uint64_t bytes);

/// Authoritative per-link byte accounting. Totals always equal the sum of
/// frame lengths recorded, per round and overall.
class CommLedger {
 public:
  struct Record {
    int round = 0;
    int sender = 0;
    int receiver = 0;
    std::uint64_t bytes = 0;
  };

  void record(int round, int sender, int receiver, std::uint64_t bytes) {
    records_.push_back({round, sender, receiver, bytes});
  }

  std::uint64_t total() const;
  std::uint64_t round_total(int round) const;
  std::uint64_t sent_by(int agent) const;
  std::uint64_t received_by(int agent) const;
  const std::vector<Record>& records() const { return records_; }

 private:
  std::vector<Record> records_;
};

/// Inputs for projecting depth-round traffic as a function of the
/// uncertainty threshold: per agent, the pixel uncertainty map and how many
/// present voxels each pixel's ray carries. Frames with zero entries are
/// never transmitted, so they project zero cost.
struct DepthCostModel {
  std::vector<Eigen::VectorXd> uncertainty;
  std::vector<Eigen::VectorXi> ray_voxels;
  int channels = 0;
  int receivers_per_sender = 0;
  double max_uncertainty = 0;  // log2 of the depth bin count
};

/// Largest uncertainty threshold whose projected round traffic fits the
/// budget (32 binary-search steps). A budget below the smallest usable
/// frame yields the select-nothing threshold 0.
double calibrate_uncertainty_threshold(const DepthCostModel& model, std::uint64_t budget);

struct DetCostModel {
  std::vector<Eigen::VectorXd> confidence;
  int channels = 0;
  int receivers_per_sender = 0;
};

/// Smallest confidence threshold whose projected round traffic fits the
/// budget; select-nothing degenerates to threshold 1.
double calibrate_confidence_threshold(const DetCostModel& model, std::uint64_t budget);

std::uint64_t projected_depth_bytes(const DepthCostModel& model, double threshold);
std::uint64_t projected_det_bytes(const DetCostModel& model, double threshold);

}  // namespace coca
