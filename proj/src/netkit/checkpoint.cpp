#include "faceparse/netkit/checkpoint.hpp"

#include <cstring>

#include "faceparse/error.hpp"
#include "faceparse/fileio.hpp"
#include "faceparse/tensor/checksum.hpp"

namespace faceparse::netkit {

using nlohmann::json;

namespace {

json meta_to_json(const CheckpointMeta& m) {
  return json{{"role", m.role}, {"train", m.config}, {"epoch", m.epoch}, {"seed", m.seed}, {"extra", m.extra}};
}

CheckpointMeta meta_from_json(const json& j) {
  CheckpointMeta m;
  m.role = j.value("role", std::string{});
  m.config = j.at("train").get<TrainConfig>();
  m.epoch = j.value("epoch", std::size_t{0});
  m.seed = j.value("seed", std::uint64_t{0});
  m.extra = j.value("extra", json::object());
  return m;
}

}  // namespace

std::vector<std::byte> encode_checkpoint(const NetworkSpec& spec, const ParamSet& params,
                                         const CheckpointMeta& meta) {
  Network(spec).check_parameters(params);
  const std::string blob = json{{"network", spec}, {"meta", meta_to_json(meta)}}.dump();

  ByteWriter w;
  w.bytes(std::as_bytes(std::span(kCheckpointMagic)));
  w.u32(kCheckpointVersion);
  w.u64(blob.size());
  w.text(blob);
  for (const auto& b : params.blocks) {
    ByteWriter block;
    block.u32(static_cast<std::uint32_t>(b.name.size()));
    block.text(b.name);
    block.u64(b.value.size());
    for (double v : b.value.data()) block.f32(static_cast<float>(v));
    w.bytes(block.buffer());
    w.u64(fnv1a64(block.buffer()));
  }
  return w.take();
}

Checkpoint decode_checkpoint(std::span<const std::byte> bytes, const std::string& what) {
  ByteReader r(bytes, what);
  const auto magic = r.bytes(4);
  if (std::memcmp(magic.data(), kCheckpointMagic, 4) != 0) {
    throw FormatError(what + ": not a checkpoint (bad magic)");
  }
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw VersionError(what + ": checkpoint version " + std::to_string(version) + " is not supported (expected " +
                       std::to_string(kCheckpointVersion) + ")");
  }
  const std::uint64_t blob_len = r.u64();
  if (blob_len > r.remaining()) throw TruncatedError(what + ": truncated inside the spec blob");
  const std::string blob = r.text(blob_len);

  Checkpoint ck;
  try {
    const json j = json::parse(blob);
    ck.spec = j.at("network").get<NetworkSpec>();
    ck.meta = meta_from_json(j.at("meta"));
  } catch (const json::exception& e) {
    throw FormatError(what + ": malformed spec blob: " + e.what());
  }

  const Network net(ck.spec);
  const auto layout = net.parameter_layout();
  for (const auto& [name, shape] : layout) {
    if (r.at_end()) {
      throw TruncatedError(what + ": truncated before parameter block '" + name + "'");
    }
    const std::size_t start = r.position();
    const std::uint32_t name_len = r.u32();
    if (name_len > r.remaining()) throw TruncatedError(what + ": truncated inside a block name");
    const std::string block_name = r.text(name_len);
    const std::uint64_t count = r.u64();
    if (count > r.remaining() / 4) throw TruncatedError(what + ": truncated inside block '" + block_name + "'");
    Tensor value(shape);
    std::vector<double> values(count);
    for (auto& v : values) v = static_cast<double>(r.f32());
    const std::uint64_t expected = fnv1a64(r.consumed().subspan(start));
    const std::uint64_t stored = r.u64();
    if (stored != expected) throw ChecksumError(what + ": checksum mismatch in block '" + block_name + "'");
    if (block_name != name || count != value.size()) {
      throw CompatibilityError(what + ": block '" + block_name + "' with " + std::to_string(count) +
                               " values does not match expected '" + name + "' " + to_string(shape));
    }
    ck.params.blocks.push_back({block_name, Tensor(shape, std::move(values))});
  }
  if (!r.at_end()) {
    throw FormatError(what + ": " + std::to_string(r.remaining()) + " trailing bytes after the last block");
  }
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const NetworkSpec& spec, const ParamSet& params,
                     const CheckpointMeta& meta) {
  write_file_atomic(path, encode_checkpoint(spec, params, meta));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_file_bytes(path), path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path, const NetworkSpec& expected) {
  Checkpoint ck = load_checkpoint(path);
  if (!(resolve_padding(ck.spec) == resolve_padding(expected))) {
    std::string detail;
    if (ck.spec.class_count != expected.class_count) {
      detail = ": class_count " + std::to_string(ck.spec.class_count) + " vs " + std::to_string(expected.class_count);
    } else if (ck.spec.input_shape != expected.input_shape) {
      detail = ": input " + to_string(ck.spec.input_shape) + " vs " + to_string(expected.input_shape);
    }
    throw CompatibilityError(path.string() + ": checkpoint network '" + ck.spec.name +
                             "' is incompatible with the expected network '" + expected.name + "'" + detail);
  }
  return ck;
}

void round_to_checkpoint_precision(ParamSet& params) {
  for (auto& b : params.blocks)
    for (auto& v : b.value.data()) v = static_cast<double>(static_cast<float>(v));
}

}  // namespace faceparse::netkit
