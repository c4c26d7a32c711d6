#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>

#include "faceparse/dataio/image.hpp"
#include "faceparse/dataio/manifest.hpp"

namespace httplib {
class Server;
}

namespace faceparse::cli {

inline constexpr const char* kApiPrefix = "/api/v1";
inline constexpr const char* kVersionHeader = "X-Mask-Version";
inline constexpr const char* kNoMaskVersion = "none";

/// Optimistic-concurrency token of a stored mask: 16 hex digits of the
/// FNV-1a 64 digest of its file bytes.
std::string mask_version(std::span<const std::byte> png);

/// Share of mask pixels with a class other than 0 (back).
double labeled_fraction(const dataio::LabelMask& mask);

/// HTTP backend of the annotation tool, serving one dataset directory.
///
///   GET  /api/v1/images              [{id, width, height, has_mask, label, mask_version}]
///   GET  /api/v1/images/{id}/image   image PNG bytes
///   GET  /api/v1/images/{id}/mask    mask PNG bytes, X-Mask-Version header; 404 without mask
///   PUT  /api/v1/images/{id}/mask    body: mask PNG; X-Mask-Version must equal the
///                                    current token ("none" when no mask exists);
///                                    409 on a stale token, 422 on an invalid mask
///   GET  /api/v1/palette             {classes: [{index, name, color "#rrggbb"}]}
///   GET  /api/v1/progress            {images: [{id, labeled_fraction}], total, with_mask,
///                                     mean_labeled_fraction}
///
/// Masks are written atomically to masks/<id>.png exactly as received and the
/// manifest is rewritten with the new digest. Writes to one image are
/// serialized; the manifest has its own lock.
class AnnotationServer {
 public:
  explicit AnnotationServer(const std::filesystem::path& dataset,
                            std::optional<std::filesystem::path> ui_dir = std::nullopt);
  ~AnnotationServer();
  AnnotationServer(const AnnotationServer&) = delete;
  AnnotationServer& operator=(const AnnotationServer&) = delete;

  /// Port 0 picks a free port; returns the bound port. Throws
  /// AddressInUseError when the address cannot be bound.
  int bind(const std::string& host, int port);
  /// Serves until stop(); requires bind().
  void listen();
  void stop();
  bool running() const;

 private:
  struct ImageState {
    std::size_t width = 0, height = 0;
    std::optional<double> labeled;
    std::mutex lock;
  };

  void routes();

  dataio::DatasetManifest manifest_;
  std::mutex manifest_lock_;
  std::map<std::string, std::unique_ptr<ImageState>> images_;
  std::optional<std::filesystem::path> ui_dir_;
  std::unique_ptr<httplib::Server> server_;
};

}  // namespace faceparse::cli
