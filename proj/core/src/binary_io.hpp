#pragma once

// Little-endian byte buffers shared by the weight and vector file formats.

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cfsteer/error.hpp"

namespace cfsteer::detail {

std::uint32_t crc32(std::span<const std::uint8_t> bytes);

class ByteWriter {
 public:
  void raw(std::string_view s) { bytes_.insert(bytes_.end(), s.begin(), s.end()); }
  void u8(std::uint8_t v) { bytes_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void f32s(std::span<const float> vs) {
    for (float v : vs) f32(v);
  }
  void bytes(std::span<const std::uint8_t> b) { bytes_.insert(bytes_.end(), b.begin(), b.end()); }

  std::vector<std::uint8_t>& data() { return bytes_; }

 private:
  std::vector<std::uint8_t> bytes_;
};

class ByteReader {
 public:
  ByteReader(std::span<const std::uint8_t> bytes, std::string what) : bytes_(bytes), what_(std::move(what)) {}

  std::size_t offset() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

  void need(std::size_t n) const {
    if (remaining() < n) {
      throw FormatError(FormatError::Kind::kTruncated,
                        what_ + ": truncated at byte " + std::to_string(pos_) + " (need " + std::to_string(n) + ")");
    }
  }
  std::uint8_t u8() {
    need(1);
    return bytes_[pos_++];
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_++]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_++]) << (8 * i);
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  void f32s(std::span<float> out) {
    need(out.size() * 4);
    for (float& v : out) v = f32();
  }
  std::span<const std::uint8_t> take(std::size_t n) {
    need(n);
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::string what_;
  std::size_t pos_ = 0;
};

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

/// Checks magic, then the version word that follows it, then the trailing
/// CRC over everything between magic and CRC. Returns a reader positioned
/// after the version and limited to the CRC-covered region.
ByteReader open_checked(std::span<const std::uint8_t> file, std::string_view magic, std::uint32_t version,
                        const std::string& what);

/// Appends CRC-32 of everything after the 4-byte magic.
void seal(ByteWriter& writer);

}  // namespace cfsteer::detail
