#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace faceparse::dataio {

/// Named attribute labeling, e.g. a binary grouping of a dataset.
struct AttributeScheme {
  std::string name;
  std::vector<std::string> labels;

  std::size_t class_count() const { return labels.size(); }
  /// ConfigError unless there are >= 2 unique, non-empty labels.
  void validate() const;
  /// DataError naming the label if it is not part of the scheme.
  std::size_t index_of(const std::string& label) const;

  friend bool operator==(const AttributeScheme&, const AttributeScheme&) = default;
};

void to_json(nlohmann::json& j, const AttributeScheme& s);
void from_json(const nlohmann::json& j, AttributeScheme& s);

struct ManifestEntry {
  std::string id;
  std::string image;                 // relative to the manifest root
  std::optional<std::string> mask;   // relative to the manifest root
  std::optional<std::size_t> label;  // index into the scheme
  std::uint64_t image_digest = 0;
  std::optional<std::uint64_t> mask_digest;

  friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

inline constexpr const char* kManifestFile = "manifest.json";
inline constexpr int kManifestVersion = 1;

struct DatasetManifest {
  std::filesystem::path root;
  std::optional<AttributeScheme> scheme;
  std::vector<ManifestEntry> entries;

  std::filesystem::path resolve(const std::string& relative) const { return root / relative; }
  const ManifestEntry* find(const std::string& id) const;
  ManifestEntry* find(const std::string& id);
  std::vector<std::optional<std::size_t>> labels() const;
};

/// Canonical text; keys sorted, digests as 16 hex digits.
std::string manifest_to_text(const DatasetManifest& m);

/// `path` may be the manifest file or its directory. Checks the version,
/// duplicate ids, labels against the scheme, that every referenced file
/// exists and, when `verify_digests`, that file digests match
/// (ChecksumError naming the file).
DatasetManifest load_manifest(const std::filesystem::path& path, bool verify_digests = true);

/// Writes root/manifest.json atomically.
void save_manifest(const DatasetManifest& m);

/// Recomputes every digest from the files on disk.
void refresh_digests(DatasetManifest& m);

/// Assignment of entries to k folds.
struct FoldPlan {
  std::size_t k = 0;
  std::uint64_t seed = 0;
  bool stratified = false;
  std::vector<std::size_t> fold_of;
  std::vector<std::string> warnings;

  std::vector<std::size_t> test_indices(std::size_t fold) const;
  std::vector<std::size_t> train_indices(std::size_t fold) const;
  std::vector<std::size_t> fold_sizes() const;
};

/// Shuffles each label group with its own derived stream, concatenates the
/// groups in label order (unlabeled last) and deals position p to fold
/// p mod k. Falls back to one shuffled group, with a warning, when some
/// group is smaller than k. Requires 2 <= k <= entry count.
FoldPlan make_folds(std::span<const std::optional<std::size_t>> labels, std::size_t k, std::uint64_t seed);
FoldPlan make_folds(const DatasetManifest& m, std::size_t k, std::uint64_t seed);

}  // namespace faceparse::dataio
