#include "faceparse/fileio.hpp"

#include <cstdio>
#include <fstream>
#include <iterator>

#include "faceparse/error.hpp"
#include "faceparse/tensor/checksum.hpp"

namespace faceparse {

namespace fs = std::filesystem;

std::vector<std::byte> read_file_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed: " + path.string());
  std::vector<std::byte> out(raw.size());
  std::memcpy(out.data(), raw.data(), raw.size());
  return out;
}

std::string read_file_text(const fs::path& path) {
  auto bytes = read_file_bytes(path);
  return std::string(reinterpret_cast<const char*>(bytes.data()), bytes.size());
}

void write_file_atomic(const fs::path& path, std::span<const std::byte> bytes) {
  std::error_code ec;
  if (path.has_parent_path()) {
    fs::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create directory " + path.parent_path().string() + ": " + ec.message());
  }
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw IoError("write failed: " + path.string());
  }
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw IoError("cannot move temp file into place at " + path.string());
  }
}

void write_file_atomic(const fs::path& path, std::string_view text) {
  write_file_atomic(path, std::as_bytes(std::span(text.data(), text.size())));
}

std::uint64_t file_digest(const fs::path& path) { return fnv1a64(read_file_bytes(path)); }

std::string hex64(std::uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(value));
  return buf;
}

void ByteReader::need(std::size_t n) {
  if (remaining() < n) {
    throw TruncatedError(what_ + ": truncated at byte " + std::to_string(pos_) + " (needed " +
                         std::to_string(n) + ", have " + std::to_string(remaining()) + ")");
  }
}

std::span<const std::byte> ByteReader::bytes(std::size_t n) {
  need(n);
  auto s = data_.subspan(pos_, n);
  pos_ += n;
  return s;
}

std::string ByteReader::text(std::size_t n) {
  auto b = bytes(n);
  return std::string(reinterpret_cast<const char*>(b.data()), b.size());
}

}  // namespace faceparse
