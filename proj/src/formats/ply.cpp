#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <sstream>
#include <string_view>
#include <unordered_map>

#include <spdlog/spdlog.h>

#include "byte_io.hpp"
#include "gs2pc/errors.hpp"
#include "gs2pc/formats.hpp"

namespace gs2pc {
namespace {

enum class PlyFormat { kAscii, kBinaryLittleEndian };

enum class PlyType { kInt8, kUInt8, kInt16, kUInt16, kInt32, kUInt32, kFloat32, kFloat64 };

std::size_t type_size(PlyType t) {
  switch (t) {
    case PlyType::kInt8:
    case PlyType::kUInt8: return 1;
    case PlyType::kInt16:
    case PlyType::kUInt16: return 2;
    case PlyType::kInt32:
    case PlyType::kUInt32:
    case PlyType::kFloat32: return 4;
    case PlyType::kFloat64: return 8;
  }
  return 0;
}

PlyType parse_type(std::string_view name) {
  static const std::map<std::string_view, PlyType> kTypes = {
      {"char", PlyType::kInt8},     {"int8", PlyType::kInt8},       {"uchar", PlyType::kUInt8},
      {"uint8", PlyType::kUInt8},   {"short", PlyType::kInt16},     {"int16", PlyType::kInt16},
      {"ushort", PlyType::kUInt16}, {"uint16", PlyType::kUInt16},   {"int", PlyType::kInt32},
      {"int32", PlyType::kInt32},   {"uint", PlyType::kUInt32},     {"uint32", PlyType::kUInt32},
      {"float", PlyType::kFloat32}, {"float32", PlyType::kFloat32}, {"double", PlyType::kFloat64},
      {"float64", PlyType::kFloat64}};
  const auto it = kTypes.find(name);
  if (it == kTypes.end()) {
    throw FormatError("unknown PLY property type: " + std::string(name));
  }
  return it->second;
}

struct PlyProperty {
  std::string name;
  PlyType type = PlyType::kFloat32;
  bool is_list = false;
  PlyType count_type = PlyType::kUInt8;
};

struct PlyElement {
  std::string name;
  std::size_t count = 0;
  std::vector<PlyProperty> properties;
};

struct PlyHeader {
  PlyFormat format = PlyFormat::kAscii;
  std::vector<PlyElement> elements;
  std::size_t body_offset = 0;
};

PlyHeader parse_header(const std::vector<std::uint8_t>& bytes) {
  const std::string_view text(reinterpret_cast<const char*>(bytes.data()), bytes.size());
  if (!text.starts_with("ply\n") && !text.starts_with("ply\r\n")) {
    throw FormatError("not a PLY file (missing 'ply' magic)");
  }
  PlyHeader header;
  bool have_format = false;
  std::size_t pos = 0;
  while (true) {
    const auto eol = text.find('\n', pos);
    if (eol == std::string_view::npos) {
      throw FormatError("PLY header is not terminated by end_header");
    }
    std::string line(text.substr(pos, eol - pos));
    pos = eol + 1;
    if (!line.empty() && line.back() == '\r') line.pop_back();

    std::istringstream ss(line);
    std::string keyword;
    ss >> keyword;
    if (keyword == "end_header") break;
    if (keyword == "ply" || keyword == "comment" || keyword == "obj_info" || keyword.empty()) {
      continue;
    }
    if (keyword == "format") {
      std::string fmt;
      ss >> fmt;
      if (fmt == "ascii") {
        header.format = PlyFormat::kAscii;
      } else if (fmt == "binary_little_endian") {
        header.format = PlyFormat::kBinaryLittleEndian;
      } else {
        throw FormatError("unsupported PLY format: " + fmt);
      }
      have_format = true;
    } else if (keyword == "element") {
      PlyElement element;
      long long count = -1;
      ss >> element.name >> count;
      if (!ss || count < 0) throw FormatError("malformed PLY element line: " + line);
      element.count = static_cast<std::size_t>(count);
      header.elements.push_back(std::move(element));
    } else if (keyword == "property") {
      if (header.elements.empty()) throw FormatError("PLY property before any element");
      PlyProperty prop;
      std::string type_name;
      ss >> type_name;
      if (type_name == "list") {
        std::string count_type, item_type;
        ss >> count_type >> item_type;
        prop.is_list = true;
        prop.count_type = parse_type(count_type);
        prop.type = parse_type(item_type);
      } else {
        prop.type = parse_type(type_name);
      }
      ss >> prop.name;
      if (prop.name.empty()) throw FormatError("malformed PLY property line: " + line);
      header.elements.back().properties.push_back(std::move(prop));
    } else {
      throw FormatError("unexpected PLY header keyword: " + keyword);
    }
  }
  if (!have_format) throw FormatError("PLY header lacks a format line");
  header.body_offset = pos;
  return header;
}

double read_binary_value(detail::ByteReader& reader, PlyType t) {
  switch (t) {
    case PlyType::kInt8: return reader.read<std::int8_t>();
    case PlyType::kUInt8: return reader.read<std::uint8_t>();
    case PlyType::kInt16: return reader.read<std::int16_t>();
    case PlyType::kUInt16: return reader.read<std::uint16_t>();
    case PlyType::kInt32: return reader.read<std::int32_t>();
    case PlyType::kUInt32: return reader.read<std::uint32_t>();
    case PlyType::kFloat32: return reader.read<float>();
    case PlyType::kFloat64: return reader.read<double>();
  }
  return 0.0;
}

/// Narrows an ascii value to the declared property type, so ascii and binary
/// files holding the same numbers load identically.
double as_declared(double v, PlyType t) {
  switch (t) {
    case PlyType::kFloat32: return static_cast<float>(v);
    case PlyType::kFloat64: return v;
    default: return std::trunc(v);
  }
}

/// Whitespace tokenizer over the ascii body that tracks the byte offset.
class AsciiTokens {
 public:
  AsciiTokens(std::string_view text, std::size_t offset) : text_(text), pos_(offset) {}

  double next() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    if (pos_ >= text_.size()) {
      throw IoError("truncated PLY body at byte offset " + std::to_string(pos_));
    }
    const std::size_t start = pos_;
    while (pos_ < text_.size() && !std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    double value = 0.0;
    const char* first = text_.data() + start;
    const char* last = text_.data() + pos_;
    if (*first == '+') ++first;
    const auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc() || ptr != last) {
      throw FormatError("invalid number in PLY body at byte offset " + std::to_string(start));
    }
    return value;
  }

 private:
  std::string_view text_;
  std::size_t pos_;
};

/// Reads every row of every element; only rows of `wanted` are returned, as
/// one double per scalar property (list properties are consumed and dropped).
std::vector<std::vector<double>> read_element_rows(const std::vector<std::uint8_t>& bytes,
                                                   const PlyHeader& header,
                                                   const std::string& wanted) {
  std::vector<std::vector<double>> rows;
  if (header.format == PlyFormat::kBinaryLittleEndian) {
    detail::ByteReader reader(bytes.data(), bytes.size(), header.body_offset);
    for (const auto& element : header.elements) {
      const bool keep = element.name == wanted;
      const bool fixed = std::none_of(element.properties.begin(), element.properties.end(),
                                      [](const PlyProperty& p) { return p.is_list; });
      if (!keep && fixed) {
        std::size_t row_size = 0;
        for (const auto& p : element.properties) row_size += type_size(p.type);
        reader.skip(row_size * element.count);
        continue;
      }
      if (keep) rows.reserve(element.count);
      for (std::size_t r = 0; r < element.count; ++r) {
        std::vector<double> row;
        if (keep) row.reserve(element.properties.size());
        for (const auto& p : element.properties) {
          if (p.is_list) {
            const auto n = static_cast<std::size_t>(read_binary_value(reader, p.count_type));
            reader.skip(n * type_size(p.type));
            if (keep) row.push_back(0.0);
          } else {
            const double v = read_binary_value(reader, p.type);
            if (keep) row.push_back(v);
          }
        }
        if (keep) rows.push_back(std::move(row));
      }
      if (keep) break;
    }
  } else {
    const std::string_view text(reinterpret_cast<const char*>(bytes.data()), bytes.size());
    AsciiTokens tokens(text, header.body_offset);
    for (const auto& element : header.elements) {
      const bool keep = element.name == wanted;
      for (std::size_t r = 0; r < element.count; ++r) {
        std::vector<double> row;
        for (const auto& p : element.properties) {
          if (p.is_list) {
            const auto n = static_cast<std::size_t>(tokens.next());
            for (std::size_t i = 0; i < n; ++i) tokens.next();
            row.push_back(0.0);
          } else {
            row.push_back(as_declared(tokens.next(), p.type));
          }
        }
        if (keep) rows.push_back(std::move(row));
      }
      if (keep) break;
    }
  }
  return rows;
}

std::string header_text(std::size_t vertex_count, const std::vector<std::string>& float_props,
                        const std::vector<std::string>& uchar_props = {},
                        const std::vector<std::string>& trailing_float_props = {}) {
  std::ostringstream h;
  h << "ply\nformat binary_little_endian 1.0\nelement vertex " << vertex_count << "\n";
  for (const auto& p : float_props) h << "property float " << p << "\n";
  for (const auto& p : uchar_props) h << "property uchar " << p << "\n";
  for (const auto& p : trailing_float_props) h << "property float " << p << "\n";
  h << "end_header\n";
  return h.str();
}

}  // namespace

std::vector<RawGaussianRecord> load_gaussians_ply(const std::filesystem::path& path) {
  const auto bytes = detail::read_file_bytes(path);
  const PlyHeader header = parse_header(bytes);

  const auto vertex_it = std::find_if(header.elements.begin(), header.elements.end(),
                                      [](const PlyElement& e) { return e.name == "vertex"; });
  if (vertex_it == header.elements.end()) {
    throw FormatError("PLY has no vertex element");
  }

  std::unordered_map<std::string, std::size_t> column;
  for (std::size_t i = 0; i < vertex_it->properties.size(); ++i) {
    if (!vertex_it->properties[i].is_list) column.emplace(vertex_it->properties[i].name, i);
  }
  auto require = [&](const std::string& name) {
    const auto it = column.find(name);
    if (it == column.end()) throw FormatError("missing property: " + name);
    return it->second;
  };

  const std::array<std::size_t, 3> pos_col{require("x"), require("y"), require("z")};
  const std::array<std::size_t, 3> dc_col{require("f_dc_0"), require("f_dc_1"), require("f_dc_2")};
  const std::size_t opacity_col = require("opacity");
  const std::array<std::size_t, 3> scale_col{require("scale_0"), require("scale_1"),
                                             require("scale_2")};
  const std::array<std::size_t, 4> rot_col{require("rot_0"), require("rot_1"), require("rot_2"),
                                           require("rot_3")};

  std::vector<std::pair<int, std::size_t>> rest_cols;
  for (const auto& [name, idx] : column) {
    if (name.starts_with("f_rest_")) {
      int n = 0;
      const auto [ptr, ec] = std::from_chars(name.data() + 7, name.data() + name.size(), n);
      if (ec == std::errc() && ptr == name.data() + name.size()) rest_cols.emplace_back(n, idx);
    }
  }
  std::sort(rest_cols.begin(), rest_cols.end());

  const auto rows = read_element_rows(bytes, header, "vertex");

  std::vector<RawGaussianRecord> records;
  records.reserve(rows.size());
  std::size_t dropped = 0;
  for (const auto& row : rows) {
    RawGaussianRecord rec;
    for (int a = 0; a < 3; ++a) {
      rec.position[a] = row[pos_col[a]];
      rec.log_scale[a] = row[scale_col[a]];
      rec.sh_dc[a] = row[dc_col[a]];
    }
    for (int a = 0; a < 4; ++a) rec.rotation[a] = row[rot_col[a]];
    rec.logit_opacity = row[opacity_col];
    rec.sh_rest.reserve(rest_cols.size());
    for (const auto& [n, idx] : rest_cols) rec.sh_rest.push_back(row[idx]);

    const double qnorm2 = rec.rotation[0] * rec.rotation[0] + rec.rotation[1] * rec.rotation[1] +
                          rec.rotation[2] * rec.rotation[2] + rec.rotation[3] * rec.rotation[3];
    const bool finite_scale = std::all_of(rec.log_scale.begin(), rec.log_scale.end(),
                                          [](double s) { return std::isfinite(s); });
    if (qnorm2 == 0.0 || !std::isfinite(qnorm2) || !finite_scale) {
      ++dropped;
      continue;
    }
    records.push_back(std::move(rec));
  }
  if (dropped > 0) {
    spdlog::warn("{}: dropped {} Gaussians with zero-norm rotation or non-finite scale",
                 path.string(), dropped);
  }
  return records;
}

void write_gaussians_ply(const std::vector<RawGaussianRecord>& records,
                         const std::filesystem::path& path) {
  const std::size_t rest = records.empty() ? 0 : records.front().sh_rest.size();
  std::vector<std::string> props{"x", "y", "z", "nx", "ny", "nz", "f_dc_0", "f_dc_1", "f_dc_2"};
  for (std::size_t i = 0; i < rest; ++i) props.push_back("f_rest_" + std::to_string(i));
  for (const char* p : {"opacity", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2",
                        "rot_3"}) {
    props.emplace_back(p);
  }

  const std::string header = header_text(records.size(), props);
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.reserve(out.size() + records.size() * props.size() * sizeof(float));
  for (const auto& r : records) {
    if (r.sh_rest.size() != rest) {
      throw DomainError("all records must carry the same number of f_rest coefficients");
    }
    for (double v : r.position) detail::append_le(out, static_cast<float>(v));
    for (int i = 0; i < 3; ++i) detail::append_le(out, 0.0f);
    for (double v : r.sh_dc) detail::append_le(out, static_cast<float>(v));
    for (double v : r.sh_rest) detail::append_le(out, static_cast<float>(v));
    detail::append_le(out, static_cast<float>(r.logit_opacity));
    for (double v : r.log_scale) detail::append_le(out, static_cast<float>(v));
    for (double v : r.rotation) detail::append_le(out, static_cast<float>(v));
  }
  detail::write_file_bytes(path, out);
}

void write_pointcloud_ply(const PointCloud& cloud, const std::filesystem::path& path) {
  cloud.validate();
  const bool normals = cloud.has_normals();
  const std::string header =
      header_text(cloud.size(), {"x", "y", "z"}, {"red", "green", "blue"},
                  normals ? std::vector<std::string>{"nx", "ny", "nz"} : std::vector<std::string>{});
  const std::size_t stride = 12 + 3 + (normals ? 12 : 0);
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.reserve(out.size() + cloud.size() * stride);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    for (int a = 0; a < 3; ++a) detail::append_le(out, cloud.points[i][a]);
    for (int a = 0; a < 3; ++a) out.push_back(cloud.colours[i][a]);
    if (normals) {
      for (int a = 0; a < 3; ++a) detail::append_le(out, cloud.normals[i][a]);
    }
  }
  detail::write_file_bytes(path, out);
}

}  // namespace gs2pc
