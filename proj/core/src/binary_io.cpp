#include "binary_io.hpp"

#include <zlib.h>

#include <fstream>
#include <iterator>

namespace cfsteer::detail {

std::uint32_t crc32(std::span<const std::uint8_t> bytes) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in chunks.
  std::size_t off = 0;
  while (off < bytes.size()) {
    const std::size_t n = std::min<std::size_t>(bytes.size() - off, 1u << 30);
    crc = ::crc32(crc, bytes.data() + off, static_cast<uInt>(n));
    off += n;
  }
  return static_cast<std::uint32_t>(crc);
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(FormatError::Kind::kIo, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError(FormatError::Kind::kIo, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError(FormatError::Kind::kIo, "write failed for " + path.string());
}

ByteReader open_checked(std::span<const std::uint8_t> file, std::string_view magic, std::uint32_t version,
                        const std::string& what) {
  if (file.size() < magic.size() ||
      std::string_view(reinterpret_cast<const char*>(file.data()), magic.size()) != magic) {
    throw FormatError(FormatError::Kind::kBadMagic, what + ": bad magic, expected \"" + std::string(magic) + "\"");
  }
  if (file.size() < magic.size() + 8) {
    throw FormatError(FormatError::Kind::kTruncated, what + ": file too short for header and checksum");
  }
  ByteReader header(file.subspan(magic.size(), 4), what);
  const std::uint32_t found = header.u32();
  if (found != version) {
    throw FormatError(FormatError::Kind::kVersionMismatch,
                      what + ": unsupported version " + std::to_string(found) + " (expected " +
                          std::to_string(version) + ")");
  }
  const auto body = file.subspan(magic.size(), file.size() - magic.size() - 4);
  ByteReader tail(file.subspan(file.size() - 4), what);
  const std::uint32_t stored = tail.u32();
  if (crc32(body) != stored) {
    throw FormatError(FormatError::Kind::kCrcMismatch, what + ": CRC mismatch");
  }
  ByteReader reader(body, what);
  reader.u32();  // version
  return reader;
}

void seal(ByteWriter& writer) {
  auto& bytes = writer.data();
  const std::uint32_t crc = crc32(std::span<const std::uint8_t>(bytes).subspan(4));
  writer.u32(crc);
}

}  // namespace cfsteer::detail
