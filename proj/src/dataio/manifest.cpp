#include "faceparse/dataio/manifest.hpp"

#include <map>
#include <numeric>
#include <set>

#include "faceparse/error.hpp"
#include "faceparse/fileio.hpp"
#include "faceparse/tensor/rng.hpp"

namespace faceparse::dataio {

namespace fs = std::filesystem;
using nlohmann::json;

void AttributeScheme::validate() const {
  if (labels.size() < 2) throw ConfigError("attribute scheme '" + name + "': needs at least 2 labels");
  std::set<std::string> seen;
  for (const auto& l : labels) {
    if (l.empty()) throw ConfigError("attribute scheme '" + name + "': empty label");
    if (!seen.insert(l).second) throw ConfigError("attribute scheme '" + name + "': duplicate label '" + l + "'");
  }
}

std::size_t AttributeScheme::index_of(const std::string& label) const {
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == label) return i;
  }
  throw DataError("label '" + label + "' is not part of attribute scheme '" + name + "'");
}

void to_json(json& j, const AttributeScheme& s) { j = json{{"name", s.name}, {"labels", s.labels}}; }

void from_json(const json& j, AttributeScheme& s) {
  s.name = j.at("name").get<std::string>();
  s.labels = j.at("labels").get<std::vector<std::string>>();
  s.validate();
}

const ManifestEntry* DatasetManifest::find(const std::string& id) const {
  for (const auto& e : entries) {
    if (e.id == id) return &e;
  }
  return nullptr;
}

ManifestEntry* DatasetManifest::find(const std::string& id) {
  return const_cast<ManifestEntry*>(std::as_const(*this).find(id));
}

std::vector<std::optional<std::size_t>> DatasetManifest::labels() const {
  std::vector<std::optional<std::size_t>> out;
  for (const auto& e : entries) out.push_back(e.label);
  return out;
}

namespace {

std::uint64_t parse_hex(const std::string& s, const std::string& what) {
  std::size_t used = 0;
  std::uint64_t v = 0;
  try {
    v = std::stoull(s, &used, 16);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != s.size() || s.empty()) throw FormatError(what + ": bad digest '" + s + "'");
  return v;
}

}  // namespace

std::string manifest_to_text(const DatasetManifest& m) {
  json j{{"format", "faceparse-manifest"}, {"version", kManifestVersion}, {"entries", json::array()}};
  j["scheme"] = m.scheme ? json(*m.scheme) : json(nullptr);
  for (const auto& e : m.entries) {
    json je{{"id", e.id}, {"image", e.image}, {"image_digest", hex64(e.image_digest)}};
    if (e.mask) {
      je["mask"] = *e.mask;
      je["mask_digest"] = hex64(e.mask_digest.value_or(0));
    }
    if (e.label) je["label"] = m.scheme->labels.at(*e.label);
    j["entries"].push_back(je);
  }
  return j.dump(2) + "\n";
}

DatasetManifest load_manifest(const fs::path& path, bool verify_digests) {
  const fs::path file = fs::is_directory(path) ? path / kManifestFile : path;
  const std::string what = file.string();
  DatasetManifest m;
  m.root = file.parent_path();
  json j;
  try {
    j = json::parse(read_file_text(file));
  } catch (const json::parse_error& e) {
    throw FormatError(what + ": not valid JSON: " + e.what());
  }
  try {
    if (j.value("format", std::string{}) != "faceparse-manifest") throw FormatError(what + ": not a manifest");
    const int version = j.at("version").get<int>();
    if (version != kManifestVersion) {
      throw VersionError(what + ": manifest version " + std::to_string(version) + " is not supported");
    }
    if (j.contains("scheme") && !j["scheme"].is_null()) m.scheme = j["scheme"].get<AttributeScheme>();
    std::set<std::string> ids;
    for (const auto& je : j.at("entries")) {
      ManifestEntry e;
      e.id = je.at("id").get<std::string>();
      if (e.id.empty()) throw FormatError(what + ": entry with an empty id");
      if (!ids.insert(e.id).second) throw FormatError(what + ": duplicate image id '" + e.id + "'");
      e.image = je.at("image").get<std::string>();
      e.image_digest = parse_hex(je.value("image_digest", std::string{"0"}), what);
      if (je.contains("mask")) {
        e.mask = je["mask"].get<std::string>();
        e.mask_digest = parse_hex(je.value("mask_digest", std::string{"0"}), what);
      }
      if (je.contains("label")) {
        if (!m.scheme) throw FormatError(what + ": entry '" + e.id + "' has a label but the manifest has no scheme");
        e.label = m.scheme->index_of(je["label"].get<std::string>());
      }
      m.entries.push_back(std::move(e));
    }
  } catch (const json::exception& e) {
    throw FormatError(what + ": malformed manifest: " + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(what + ": " + e.what());
  }

  auto check = [&](const std::string& rel, std::uint64_t digest) {
    const fs::path p = m.resolve(rel);
    if (!fs::exists(p)) throw IoError(what + ": referenced file does not exist: " + p.string());
    if (verify_digests && file_digest(p) != digest) {
      throw ChecksumError(what + ": digest mismatch for " + p.string());
    }
  };
  for (const auto& e : m.entries) {
    check(e.image, e.image_digest);
    if (e.mask) check(*e.mask, *e.mask_digest);
  }
  return m;
}

void save_manifest(const DatasetManifest& m) { write_file_atomic(m.root / kManifestFile, manifest_to_text(m)); }

void refresh_digests(DatasetManifest& m) {
  for (auto& e : m.entries) {
    e.image_digest = file_digest(m.resolve(e.image));
    if (e.mask) e.mask_digest = file_digest(m.resolve(*e.mask));
  }
}

std::vector<std::size_t> FoldPlan::test_indices(std::size_t fold) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < fold_of.size(); ++i) {
    if (fold_of[i] == fold) out.push_back(i);
  }
  return out;
}

std::vector<std::size_t> FoldPlan::train_indices(std::size_t fold) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < fold_of.size(); ++i) {
    if (fold_of[i] != fold) out.push_back(i);
  }
  return out;
}

std::vector<std::size_t> FoldPlan::fold_sizes() const {
  std::vector<std::size_t> sizes(k, 0);
  for (auto f : fold_of) ++sizes[f];
  return sizes;
}

FoldPlan make_folds(std::span<const std::optional<std::size_t>> labels, std::size_t k, std::uint64_t seed) {
  const std::size_t n = labels.size();
  if (k < 2 || k > n) {
    throw ConfigError("make_folds: k = " + std::to_string(k) + " must lie in [2, " + std::to_string(n) + "]");
  }
  FoldPlan plan;
  plan.k = k;
  plan.seed = seed;

  // Label groups keyed so that unlabeled entries sort last.
  std::map<std::size_t, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < n; ++i) groups[labels[i] ? *labels[i] : SIZE_MAX].push_back(i);

  plan.stratified = true;
  for (const auto& [label, members] : groups) {
    if (members.size() < k) {
      plan.stratified = false;
      plan.warnings.push_back("label " + (label == SIZE_MAX ? std::string("<none>") : std::to_string(label)) +
                              " has " + std::to_string(members.size()) + " entries, fewer than k = " +
                              std::to_string(k) + "; folds are not stratified");
    }
  }
  if (groups.size() == 1) plan.stratified = false;

  std::vector<std::size_t> sequence;
  if (plan.stratified) {
    std::size_t stream = 0;
    for (auto& [label, members] : groups) {
      Rng rng(derive_seed(seed, stream++));
      rng.shuffle(std::span(members));
      sequence.insert(sequence.end(), members.begin(), members.end());
    }
  } else {
    sequence.resize(n);
    std::iota(sequence.begin(), sequence.end(), std::size_t{0});
    Rng rng(derive_seed(seed, 0xF01D));
    rng.shuffle(std::span(sequence));
  }
  plan.fold_of.assign(n, 0);
  for (std::size_t p = 0; p < n; ++p) plan.fold_of[sequence[p]] = p % k;
  return plan;
}

FoldPlan make_folds(const DatasetManifest& m, std::size_t k, std::uint64_t seed) {
  const auto labels = m.labels();
  return make_folds(labels, k, seed);
}

}  // namespace faceparse::dataio
