#include "faceparse/faceseg/planes.hpp"

#include <cstring>

#include "faceparse/error.hpp"
#include "faceparse/fileio.hpp"
#include "faceparse/tensor/checksum.hpp"

namespace faceparse::faceseg {

namespace {
constexpr std::size_t kHeaderBytes = 16;
constexpr std::size_t kTrailerBytes = 8;
}  // namespace

std::vector<std::byte> encode_planes(const PlaneStack& s) {
  if (s.width == 0 || s.height == 0 || s.planes == 0) throw ShapeError("encode_planes: empty plane stack");
  if (s.values.size() != s.width * s.height * s.planes) {
    throw ShapeError("encode_planes: " + std::to_string(s.values.size()) + " values for " +
                     std::to_string(s.planes) + " planes of " + std::to_string(s.width) + "x" +
                     std::to_string(s.height));
  }
  ByteWriter w;
  w.bytes(std::as_bytes(std::span(kPlaneMagic)));
  w.u32(kPlaneVersion);
  w.u32(static_cast<std::uint32_t>(s.width));
  w.u32(static_cast<std::uint32_t>(s.height));
  for (double v : s.values) w.f64(v);
  const std::uint64_t sum = fnv1a64(w.buffer());
  w.u64(sum);
  return w.take();
}

PlaneStack decode_planes(std::span<const std::byte> bytes, const std::string& what,
                         std::optional<std::size_t> expected_planes) {
  ByteReader r(bytes, what);
  const auto magic = r.bytes(4);
  if (std::memcmp(magic.data(), kPlaneMagic, 4) != 0) throw FormatError(what + ": not a plane file (bad magic)");
  const std::uint32_t version = r.u32();
  if (version != kPlaneVersion) {
    throw VersionError(what + ": plane file version " + std::to_string(version) + " is not supported (expected " +
                       std::to_string(kPlaneVersion) + ")");
  }
  PlaneStack s;
  s.width = r.u32();
  s.height = r.u32();
  if (s.width == 0 || s.height == 0) throw FormatError(what + ": zero-sized planes");
  const std::size_t plane_bytes = 8 * s.width * s.height;
  if (bytes.size() < kHeaderBytes + kTrailerBytes + plane_bytes) {
    throw TruncatedError(what + ": shorter than one " + std::to_string(s.width) + "x" + std::to_string(s.height) +
                         " plane");
  }
  const std::size_t body = bytes.size() - kHeaderBytes - kTrailerBytes;
  if (body % plane_bytes != 0) {
    throw TruncatedError(what + ": " + std::to_string(body) + " payload bytes are not a whole number of planes");
  }
  s.planes = body / plane_bytes;
  s.values.resize(s.planes * s.width * s.height);
  for (auto& v : s.values) v = r.f64();
  const std::uint64_t expected = fnv1a64(r.consumed());
  if (r.u64() != expected) throw ChecksumError(what + ": checksum mismatch");
  if (expected_planes && *expected_planes != s.planes) {
    throw CompatibilityError(what + ": holds " + std::to_string(s.planes) + " planes, expected " +
                             std::to_string(*expected_planes));
  }
  return s;
}

void save_planes(const std::filesystem::path& path, const PlaneStack& stack) {
  write_file_atomic(path, encode_planes(stack));
}

PlaneStack load_planes(const std::filesystem::path& path, std::optional<std::size_t> expected_planes) {
  return decode_planes(read_file_bytes(path), path.string(), expected_planes);
}

}  // namespace faceparse::faceseg
