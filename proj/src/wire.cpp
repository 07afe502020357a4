#include "coca/wire.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <limits>

namespace coca {

namespace {

constexpr std::uint8_t kMagic[4] = {'C', 'C', '3', 'D'};
constexpr std::uint8_t kVersion = 1;
constexpr std::uint8_t kKindDepth = 1;
constexpr std::uint8_t kKindDet = 2;

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) {
    out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
  }
}

void put_f32(std::vector<std::uint8_t>& out, float v) {
  put_u32(out, std::bit_cast<std::uint32_t>(v));
}

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  std::uint8_t u8() {
    need(1);
    return bytes_[pos_++];
  }
  std::uint16_t u16() {
    need(2);
    std::uint16_t v = static_cast<std::uint16_t>(bytes_[pos_] | (bytes_[pos_ + 1] << 8));
    pos_ += 2;
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    }
    pos_ += 4;
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }

  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n) {
    if (bytes_.size() - pos_ < n) {
      throw WireError(WireFault::TruncatedFrame, "wire: frame ends mid-field");
    }
  }

  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

constexpr std::size_t kCommonHeader = 4 + 1 + 1 + 2 + 2 + 4;

void put_common_header(std::vector<std::uint8_t>& out, std::uint8_t kind, int sender,
                       int receiver, std::uint32_t count) {
  out.insert(out.end(), kMagic, kMagic + 4);
  out.push_back(kVersion);
  out.push_back(kind);
  put_u16(out, static_cast<std::uint16_t>(sender));
  put_u16(out, static_cast<std::uint16_t>(receiver));
  put_u32(out, count);
}

}  // namespace

std::size_t depth_frame_bytes(std::size_t entries, int channels) {
  return kCommonHeader + 8 + entries * (8 + 4 * static_cast<std::size_t>(channels));
}

std::size_t det_frame_bytes(std::size_t entries, int channels) {
  return kCommonHeader + 6 + entries * (4 + 4 * static_cast<std::size_t>(channels));
}

WireFrame encode_frame(const DepthMessage& msg, int nx, int ny, int nz) {
  const int channels = static_cast<int>(msg.features.cols());
  WireFrame frame;
  frame.bytes.reserve(depth_frame_bytes(static_cast<std::size_t>(msg.count()), channels));
  put_common_header(frame.bytes, kKindDepth, msg.sender, msg.receiver,
                    static_cast<std::uint32_t>(msg.count()));
  put_u16(frame.bytes, static_cast<std::uint16_t>(nx));
  put_u16(frame.bytes, static_cast<std::uint16_t>(ny));
  put_u16(frame.bytes, static_cast<std::uint16_t>(nz));
  put_u16(frame.bytes, static_cast<std::uint16_t>(channels));
  for (Eigen::Index e = 0; e < msg.count(); ++e) {
    put_u32(frame.bytes, static_cast<std::uint32_t>(msg.voxel[e]));
    put_f32(frame.bytes, static_cast<float>(msg.depth_conf[e]));
    for (int c = 0; c < channels; ++c) {
      put_f32(frame.bytes, static_cast<float>(msg.features(e, c)));
    }
  }
  return frame;
}

WireFrame encode_frame(const DetMessage& msg, int nx, int ny) {
  const int channels = static_cast<int>(msg.features.cols());
  WireFrame frame;
  frame.bytes.reserve(det_frame_bytes(static_cast<std::size_t>(msg.count()), channels));
  put_common_header(frame.bytes, kKindDet, msg.sender, msg.receiver,
                    static_cast<std::uint32_t>(msg.count()));
  put_u16(frame.bytes, static_cast<std::uint16_t>(nx));
  put_u16(frame.bytes, static_cast<std::uint16_t>(ny));
  put_u16(frame.bytes, static_cast<std::uint16_t>(channels));
  for (Eigen::Index e = 0; e < msg.count(); ++e) {
    put_u32(frame.bytes, static_cast<std::uint32_t>(msg.cell[e]));
    for (int c = 0; c < channels; ++c) {
      put_f32(frame.bytes, static_cast<float>(msg.features(e, c)));
    }
  }
  return frame;
}

DecodedFrame decode_frame(const WireFrame& frame) {
  Reader r(frame.bytes);
  std::uint8_t magic[4];
  for (std::uint8_t& b : magic) {
    b = r.u8();
  }
  if (std::memcmp(magic, kMagic, 4) != 0) {
    throw WireError(WireFault::BadMagic, "wire: bad magic");
  }
  const std::uint8_t version = r.u8();
  if (version != kVersion) {
    throw WireError(WireFault::BadVersion, "wire: unsupported version");
  }
  const std::uint8_t kind = r.u8();
  if (kind != kKindDepth && kind != kKindDet) {
    throw WireError(WireFault::BadKind, "wire: unknown frame kind");
  }
  const int sender = r.u16();
  const int receiver = r.u16();
  const std::uint32_t count = r.u32();

  if (kind == kKindDepth) {
    DecodedDepthFrame out;
    out.nx = r.u16();
    out.ny = r.u16();
    out.nz = r.u16();
    const int channels = r.u16();
    const std::int64_t max_index =
        static_cast<std::int64_t>(out.nx) * out.ny * out.nz;
    if (r.remaining() != count * (8 + 4 * static_cast<std::size_t>(channels))) {
      throw WireError(WireFault::TruncatedFrame, "wire: length does not match entry count");
    }
    out.message.sender = sender;
    out.message.receiver = receiver;
    out.message.voxel.resize(count);
    out.message.depth_conf.resize(count);
    out.message.features.resize(count, channels);
    std::int64_t prev = -1;
    for (std::uint32_t e = 0; e < count; ++e) {
      const std::uint32_t idx = r.u32();
      if (static_cast<std::int64_t>(idx) <= prev) {
        throw WireError(WireFault::NonMonotoneIndex, "wire: voxel indices not increasing");
      }
      if (static_cast<std::int64_t>(idx) >= max_index) {
        throw WireError(WireFault::IndexOutOfRange, "wire: voxel index outside the grid");
      }
      prev = idx;
      out.message.voxel[e] = static_cast<int>(idx);
      out.message.depth_conf[e] = r.f32();
      for (int c = 0; c < channels; ++c) {
        out.message.features(e, c) = r.f32();
      }
    }
    return out;
  }

  DecodedDetFrame out;
  out.nx = r.u16();
  out.ny = r.u16();
  const int channels = r.u16();
  const std::int64_t max_index = static_cast<std::int64_t>(out.nx) * out.ny;
  if (r.remaining() != count * (4 + 4 * static_cast<std::size_t>(channels))) {
    throw WireError(WireFault::TruncatedFrame, "wire: length does not match entry count");
  }
  out.message.sender = sender;
  out.message.receiver = receiver;
  out.message.cell.resize(count);
  out.message.features.resize(count, channels);
  std::int64_t prev = -1;
  for (std::uint32_t e = 0; e < count; ++e) {
    const std::uint32_t idx = r.u32();
    if (static_cast<std::int64_t>(idx) <= prev) {
      throw WireError(WireFault::NonMonotoneIndex, "wire: cell indices not increasing");
    }
    if (static_cast<std::int64_t>(idx) >= max_index) {
      throw WireError(WireFault::IndexOutOfRange, "wire: cell index outside the grid");
    }
    prev = idx;
    out.message.cell[e] = static_cast<int>(idx);
    for (int c = 0; c < channels; ++c) {
      out.message.features(e, c) = r.f32();
    }
  }
  return out;
}

std::optional<double> comm_volume_log2(std::uint64_t bytes) {
  if (bytes == 0) {
    return std::nullopt;
  }
  return std::log2(static_cast<double>(bytes));
}

std::uint64_t CommLedger::total() const {
  std::uint64_t sum = 0;
  for (const Record& r : records_) {
    sum += r.bytes;
  }
  return sum;
}

std::uint64_t CommLedger::round_total(int round) const {
  std::uint64_t sum = 0;
  for (const Record& r : records_) {
    if (r.round == round) {
      sum += r.bytes;
    }
  }
  return sum;
}

std::uint64_t CommLedger::sent_by(int agent) const {
  std::uint64_t sum = 0;
  for (const Record& r : records_) {
    if (r.sender == agent) {
      sum += r.bytes;
    }
  }
  return sum;
}

std::uint64_t CommLedger::received_by(int agent) const {
  std::uint64_t sum = 0;
  for (const Record& r : records_) {
    if (r.receiver == agent) {
      sum += r.bytes;
    }
  }
  return sum;
}

std::uint64_t projected_depth_bytes(const DepthCostModel& model, double threshold) {
  std::uint64_t total = 0;
  for (std::size_t i = 0; i < model.uncertainty.size(); ++i) {
    std::size_t entries = 0;
    for (Eigen::Index p = 0; p < model.uncertainty[i].size(); ++p) {
      if (model.uncertainty[i][p] < threshold) {
        entries += static_cast<std::size_t>(model.ray_voxels[i][p]);
      }
    }
    if (entries > 0) {
      total += static_cast<std::uint64_t>(depth_frame_bytes(entries, model.channels)) *
               static_cast<std::uint64_t>(model.receivers_per_sender);
    }
  }
  return total;
}

std::uint64_t projected_det_bytes(const DetCostModel& model, double threshold) {
  std::uint64_t total = 0;
  for (const Eigen::VectorXd& conf : model.confidence) {
    const std::size_t entries =
        static_cast<std::size_t>((conf.array() > threshold).count());
    if (entries > 0) {
      total += static_cast<std::uint64_t>(det_frame_bytes(entries, model.channels)) *
               static_cast<std::uint64_t>(model.receivers_per_sender);
    }
  }
  return total;
}

double calibrate_uncertainty_threshold(const DepthCostModel& model, std::uint64_t budget) {
  double lo = 0.0;  // entropy is never below zero, so this selects nothing
  double hi = model.max_uncertainty + 1.0;
  if (projected_depth_bytes(model, hi) <= budget) {
    return hi;
  }
  for (int step = 0; step < 32; ++step) {
    const double mid = 0.5 * (lo + hi);
    if (projected_depth_bytes(model, mid) <= budget) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return lo;
}

double calibrate_confidence_threshold(const DetCostModel& model, std::uint64_t budget) {
  double lo = -1.0;  // confidence is never negative, so this selects everything
  double hi = 1.0;   // strict inequality: nothing exceeds 1
  if (projected_det_bytes(model, lo) <= budget) {
    return lo;
  }
  for (int step = 0; step < 32; ++step) {
    const double mid = 0.5 * (lo + hi);
    if (projected_det_bytes(model, mid) <= budget) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  return hi;
}

}  // namespace coca
