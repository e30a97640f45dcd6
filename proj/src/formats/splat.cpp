#include <algorithm>
#include <cmath>

#include <spdlog/spdlog.h>

#include "byte_io.hpp"
#include "gs2pc/errors.hpp"
#include "gs2pc/formats.hpp"

namespace gs2pc {
namespace {

constexpr double kAlphaClamp = 1.0 / 512.0;

std::uint8_t quantize_u8(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::floor(v + 0.5), 0.0, 255.0));
}

}  // namespace

std::vector<RawGaussianRecord> decode_splat(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() % kSplatRecordSize != 0) {
    throw FormatError(".splat length " + std::to_string(bytes.size()) +
                      " is not a multiple of 32 (remainder " +
                      std::to_string(bytes.size() % kSplatRecordSize) + ")");
  }
  const std::size_t n = bytes.size() / kSplatRecordSize;
  std::vector<RawGaussianRecord> records;
  records.reserve(n);
  detail::ByteReader reader(bytes.data(), bytes.size());
  std::size_t dropped = 0;
  for (std::size_t i = 0; i < n; ++i) {
    RawGaussianRecord rec;
    for (auto& p : rec.position) p = reader.read<float>();
    for (int a = 0; a < 3; ++a) {
      const double scale = reader.read<float>();
      if (!(scale > 0.0) || !std::isfinite(scale)) {
        throw FormatError(".splat record " + std::to_string(i) + " has non-positive scale");
      }
      rec.log_scale[a] = std::log(scale);
    }
    for (int a = 0; a < 3; ++a) {
      const double c = reader.read<std::uint8_t>() / 255.0;
      rec.sh_dc[a] = (c - 0.5) / kShC0;
    }
    const double alpha =
        std::clamp(reader.read<std::uint8_t>() / 255.0, kAlphaClamp, 1.0 - kAlphaClamp);
    rec.logit_opacity = std::log(alpha / (1.0 - alpha));
    double norm2 = 0.0;
    for (auto& q : rec.rotation) {
      q = (static_cast<double>(reader.read<std::uint8_t>()) - 128.0) / 128.0;
      norm2 += q * q;
    }
    if (norm2 == 0.0) {
      ++dropped;
      continue;
    }
    records.push_back(std::move(rec));
  }
  if (dropped > 0) {
    spdlog::warn(".splat: dropped {} records with zero-norm rotation", dropped);
  }
  return records;
}

std::vector<std::uint8_t> encode_splat(const std::vector<RawGaussianRecord>& records) {
  std::vector<std::uint8_t> out;
  out.reserve(records.size() * kSplatRecordSize);
  for (const auto& r : records) {
    for (double p : r.position) detail::append_le(out, static_cast<float>(p));
    for (double s : r.log_scale) detail::append_le(out, static_cast<float>(std::exp(s)));
    for (double dc : r.sh_dc) out.push_back(quantize_u8((0.5 + kShC0 * dc) * 255.0));
    const double alpha = 1.0 / (1.0 + std::exp(-r.logit_opacity));
    out.push_back(quantize_u8(alpha * 255.0));
    // Components are quantized as given; callers pass unit quaternions.
    for (double q : r.rotation) out.push_back(quantize_u8(q * 128.0 + 128.0));
  }
  return out;
}

std::vector<RawGaussianRecord> load_gaussians_splat(const std::filesystem::path& path) {
  return decode_splat(detail::read_file_bytes(path));
}

void write_gaussians_splat(const std::vector<RawGaussianRecord>& records,
                           const std::filesystem::path& path) {
  detail::write_file_bytes(path, encode_splat(records));
}

}  // namespace gs2pc
