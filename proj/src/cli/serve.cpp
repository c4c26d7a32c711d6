#include "faceparse/cli/serve.hpp"

#include <cstdio>

#include "httplib.h"
#include "json.hpp"

#include "faceparse/dataio/image.hpp"
#include "faceparse/dataio/png.hpp"
#include "faceparse/error.hpp"
#include "faceparse/fileio.hpp"
#include "faceparse/palette.hpp"
#include "faceparse/tensor/checksum.hpp"

namespace faceparse::cli {

using nlohmann::json;

namespace {

constexpr const char* kJson = "application/json";
constexpr const char* kPng = "image/png";
const char* kIdPattern = "/api/v1/images/([A-Za-z0-9_.-]+)";

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(2) + "\n", kJson);
}

void send_error(httplib::Response& res, int status, const std::string& message) {
  send_json(res, status, json{{"error", message}});
}

std::span<const std::byte> as_bytes(const std::string& s) {
  return {reinterpret_cast<const std::byte*>(s.data()), s.size()};
}

std::string as_string(std::span<const std::byte> b) {
  return {reinterpret_cast<const char*>(b.data()), b.size()};
}

std::string hex_color(const std::array<std::uint8_t, 3>& c) {
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", c[0], c[1], c[2]);
  return buf;
}

}  // namespace

std::string mask_version(std::span<const std::byte> png) { return hex64(fnv1a64(png)); }

double labeled_fraction(const dataio::LabelMask& mask) {
  const auto hist = mask.histogram();
  const std::size_t n = mask.width() * mask.height();
  return n ? static_cast<double>(n - hist[0]) / static_cast<double>(n) : 0.0;
}

AnnotationServer::AnnotationServer(const std::filesystem::path& dataset, std::optional<std::filesystem::path> ui_dir)
    : manifest_(dataio::load_manifest(dataset)), ui_dir_(std::move(ui_dir)), server_(std::make_unique<httplib::Server>()) {
  for (const auto& e : manifest_.entries) {
    auto st = std::make_unique<ImageState>();
    const auto raw = dataio::read_png(manifest_.resolve(e.image));
    st->width = raw.width;
    st->height = raw.height;
    if (e.mask) st->labeled = labeled_fraction(dataio::load_mask(manifest_.resolve(*e.mask)));
    images_.emplace(e.id, std::move(st));
  }
  if (ui_dir_ && !std::filesystem::is_directory(*ui_dir_)) {
    throw IoError("serve: UI directory " + ui_dir_->string() + " does not exist");
  }
  // httplib's default adds SO_REUSEPORT, which would let a second server
  // share an occupied port instead of failing.
  server_->set_socket_options([](socket_t sock) {
    int yes = 1;
    setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const void*>(&yes), sizeof yes);
  });
  routes();
}

AnnotationServer::~AnnotationServer() { stop(); }

void AnnotationServer::routes() {
  auto& s = *server_;

  s.Get("/api/v1/images", [this](const httplib::Request&, httplib::Response& res) {
    json list = json::array();
    std::lock_guard manifest_guard(manifest_lock_);
    for (const auto& e : manifest_.entries) {
      const auto& st = *images_.at(e.id);
      json item{{"id", e.id}, {"width", st.width}, {"height", st.height}, {"has_mask", e.mask.has_value()}};
      item["label"] = e.label && manifest_.scheme ? json(manifest_.scheme->labels.at(*e.label)) : json(nullptr);
      item["mask_version"] = e.mask_digest ? hex64(*e.mask_digest) : std::string(kNoMaskVersion);
      list.push_back(item);
    }
    send_json(res, 200, json{{"images", list}});
  });

  s.Get(std::string(kIdPattern) + "/image", [this](const httplib::Request& req, httplib::Response& res) {
    const std::string id = req.matches[1];
    std::filesystem::path path;
    {
      std::lock_guard guard(manifest_lock_);
      const auto* e = manifest_.find(id);
      if (!e) return send_error(res, 404, "unknown image '" + id + "'");
      path = manifest_.resolve(e->image);
    }
    res.set_content(as_string(read_file_bytes(path)), kPng);
  });

  s.Get(std::string(kIdPattern) + "/mask", [this](const httplib::Request& req, httplib::Response& res) {
    const std::string id = req.matches[1];
    auto it = images_.find(id);
    if (it == images_.end()) return send_error(res, 404, "unknown image '" + id + "'");
    std::lock_guard image_guard(it->second->lock);
    std::optional<std::filesystem::path> path;
    {
      std::lock_guard guard(manifest_lock_);
      const auto* e = manifest_.find(id);
      if (e->mask) path = manifest_.resolve(*e->mask);
    }
    if (!path) {
      res.set_header(kVersionHeader, kNoMaskVersion);
      return send_error(res, 404, "image '" + id + "' has no mask yet");
    }
    const auto bytes = read_file_bytes(*path);
    res.set_header(kVersionHeader, mask_version(bytes));
    res.set_content(as_string(bytes), kPng);
  });

  s.Put(std::string(kIdPattern) + "/mask", [this](const httplib::Request& req, httplib::Response& res) {
    const std::string id = req.matches[1];
    auto it = images_.find(id);
    if (it == images_.end()) return send_error(res, 404, "unknown image '" + id + "'");
    if (!req.has_header(kVersionHeader)) {
      return send_error(res, 428, std::string("missing ") + kVersionHeader + " header");
    }
    const std::string claimed = req.get_header_value(kVersionHeader);
    ImageState& st = *it->second;
    std::lock_guard image_guard(st.lock);

    std::string mask_rel;
    std::optional<std::filesystem::path> current;
    {
      std::lock_guard guard(manifest_lock_);
      const auto* e = manifest_.find(id);
      mask_rel = e->mask.value_or("masks/" + id + ".png");
      if (e->mask) current = manifest_.resolve(*e->mask);
    }
    const std::string version = current ? mask_version(read_file_bytes(*current)) : kNoMaskVersion;
    if (claimed != version) {
      res.set_header(kVersionHeader, version);
      return send_json(res, 409, json{{"error", "stale mask version"}, {"current_version", version}, {"sent_version", claimed}});
    }

    const auto body = as_bytes(req.body);
    dataio::LabelMask mask;
    try {
      mask = dataio::decode_mask(body, "mask for '" + id + "'");
    } catch (const DataError& e) {
      return send_error(res, 422, e.what());
    }
    if (mask.width() != st.width || mask.height() != st.height) {
      return send_error(res, 422, "mask is " + std::to_string(mask.width()) + "x" + std::to_string(mask.height()) +
                                      ", image '" + id + "' is " + std::to_string(st.width) + "x" +
                                      std::to_string(st.height));
    }
    write_file_atomic(manifest_.resolve(mask_rel), body);
    st.labeled = labeled_fraction(mask);
    const std::string next = mask_version(body);
    {
      std::lock_guard guard(manifest_lock_);
      auto* e = manifest_.find(id);
      e->mask = mask_rel;
      e->mask_digest = fnv1a64(body);
      dataio::save_manifest(manifest_);
    }
    res.set_header(kVersionHeader, next);
    send_json(res, 200, json{{"id", id}, {"version", next}, {"labeled_fraction", *st.labeled}});
  });

  s.Get("/api/v1/palette", [](const httplib::Request&, httplib::Response& res) {
    json classes = json::array();
    for (const auto& p : kPalette) classes.push_back({{"index", p.index}, {"name", p.name}, {"color", hex_color(p.color)}});
    send_json(res, 200, json{{"classes", classes}});
  });

  s.Get("/api/v1/progress", [this](const httplib::Request&, httplib::Response& res) {
    json list = json::array();
    std::size_t with_mask = 0;
    double sum = 0.0;
    std::lock_guard guard(manifest_lock_);
    for (const auto& e : manifest_.entries) {
      auto& st = *images_.at(e.id);
      std::lock_guard image_guard(st.lock);
      const double f = st.labeled.value_or(0.0);
      with_mask += st.labeled.has_value();
      sum += f;
      list.push_back({{"id", e.id}, {"labeled_fraction", f}});
    }
    const double mean = manifest_.entries.empty() ? 0.0 : sum / static_cast<double>(manifest_.entries.size());
    send_json(res, 200,
              json{{"images", list}, {"total", manifest_.entries.size()}, {"with_mask", with_mask}, {"mean_labeled_fraction", mean}});
  });

  if (ui_dir_) {
    s.set_mount_point("/", ui_dir_->string());
  } else {
    s.Get("/", [](const httplib::Request&, httplib::Response& res) {
      res.set_content("faceparse annotation service; API under /api/v1\n", "text/plain");
    });
  }

  s.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    try {
      std::rethrow_exception(ep);
    } catch (const DataError& e) {
      send_error(res, 500, e.what());
    } catch (const std::exception& e) {
      send_error(res, 500, std::string("internal error: ") + e.what());
    }
  });
}

int AnnotationServer::bind(const std::string& host, int port) {
  const int bound = port == 0 ? server_->bind_to_any_port(host) : (server_->bind_to_port(host, port) ? port : -1);
  if (bound <= 0) {
    throw AddressInUseError("serve: cannot bind " + host + ":" + std::to_string(port) +
                            " (address already in use or unavailable)");
  }
  return bound;
}

void AnnotationServer::listen() { server_->listen_after_bind(); }

void AnnotationServer::stop() {
  if (server_) server_->stop();
}

bool AnnotationServer::running() const { return server_ && server_->is_running(); }

}  // namespace faceparse::cli
