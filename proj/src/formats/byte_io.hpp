#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <type_traits>
#include <vector>

#include "gs2pc/errors.hpp"

namespace gs2pc::detail {

template <typename T>
T byteswap_value(T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  for (std::size_t i = 0; i < sizeof(T) / 2; ++i) {
    std::swap(bytes[i], bytes[sizeof(T) - 1 - i]);
  }
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

/// Bounds-checked little-endian reader over an in-memory file.
class ByteReader {
 public:
  ByteReader(const std::uint8_t* data, std::size_t size, std::size_t offset = 0)
      : data_(data), size_(size), offset_(offset) {}

  template <typename T>
  T read() {
    require(sizeof(T));
    T value;
    std::memcpy(&value, data_ + offset_, sizeof(T));
    offset_ += sizeof(T);
    if constexpr (std::endian::native == std::endian::big && sizeof(T) > 1) {
      value = byteswap_value(value);
    }
    return value;
  }

  std::string read_cstring() {
    std::string out;
    while (true) {
      require(1);
      const char c = static_cast<char>(data_[offset_++]);
      if (c == '\0') break;
      out.push_back(c);
    }
    return out;
  }

  void skip(std::size_t n) {
    require(n);
    offset_ += n;
  }

  std::size_t offset() const noexcept { return offset_; }
  std::size_t remaining() const noexcept { return size_ - offset_; }

 private:
  void require(std::size_t n) const {
    if (n > size_ - offset_) {
      throw IoError("unexpected end of data at byte offset " + std::to_string(offset_) +
                    " (need " + std::to_string(n) + " bytes, " +
                    std::to_string(size_ - offset_) + " available)");
    }
  }

  const std::uint8_t* data_;
  std::size_t size_;
  std::size_t offset_;
};

template <typename T>
void append_le(std::vector<std::uint8_t>& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  if constexpr (std::endian::native == std::endian::big && sizeof(T) > 1) {
    value = byteswap_value(value);
  }
  const auto* p = reinterpret_cast<const std::uint8_t*>(&value);
  out.insert(out.end(), p, p + sizeof(T));
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);

}  // namespace gs2pc::detail
