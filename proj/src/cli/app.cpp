#include "faceparse/cli/app.hpp"

#include <atomic>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <map>

#include "CLI11.hpp"
#include "json.hpp"

#include "faceparse/attrclass/attribute.hpp"
#include "faceparse/cli/profile.hpp"
#include "faceparse/cli/serve.hpp"
#include "faceparse/dataio/png.hpp"
#include "faceparse/dataio/synth.hpp"
#include "faceparse/error.hpp"
#include "faceparse/evalkit/report.hpp"
#include "faceparse/fileio.hpp"
#include "faceparse/tensor/rng.hpp"

namespace faceparse::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kRunRecordFormat = "faceparse-run-record";
constexpr const char* kRunRecordName = "run_record.json";

struct Globals {
  std::uint64_t seed = 0;
  std::string profile = "toy";
  std::string out;
};

/// Collects what a run consumed and produced, then writes the record.
class RunRecord {
 public:
  RunRecord(std::string command, const Globals& g, const Profile& p) : command_(std::move(command)) {
    doc_ = json{{"format", kRunRecordFormat}, {"version", 1}, {"command", command_}, {"seed", g.seed},
                {"profile", p}, {"arguments", json::object()}, {"inputs", json::array()}, {"outputs", json::array()}};
  }
  void argument(const std::string& name, const json& value) { doc_["arguments"][name] = value; }
  void input(const fs::path& path) {
    doc_["inputs"].push_back({{"path", path.generic_string()}, {"digest", hex64(file_digest(path))}});
  }
  void output(const fs::path& path) { doc_["outputs"].push_back(path.generic_string()); }
  void note(const std::string& key, const json& value) { doc_[key] = value; }
  void write(const fs::path& path) const { write_file_atomic(path, doc_.dump(2) + "\n"); }

 private:
  std::string command_;
  json doc_;
};

fs::path record_beside(const fs::path& file) { return fs::path(file.string() + ".run_record.json"); }

fs::path require_out(const Globals& g, const char* what) {
  if (g.out.empty()) throw CLI::RequiredError(std::string("--out (") + what + ")");
  return fs::path(g.out);
}

struct Labeled {
  std::vector<Tensor> images;
  std::vector<const dataio::ManifestEntry*> entries;
};

// Segments every labeled entry with `model` and hands back its PMs.
template <class F>
void for_each_labeled_pms(const dataio::DatasetManifest& m, const faceseg::SegModel& model, std::ostream& log, F&& f) {
  std::size_t done = 0;
  for (const auto& e : m.entries) {
    if (!e.label) continue;
    const auto pms = faceseg::segment_image(model, dataio::load_image(m.resolve(e.image)), e.id);
    f(e, pms);
    if (++done % 25 == 0) log << "segmented " << done << " images\n";
  }
  if (done == 0) throw DataError(m.root.string() + ": no labeled entries");
}

const dataio::AttributeScheme& scheme_of(const dataio::DatasetManifest& m) {
  if (!m.scheme) throw DataError(m.root.string() + ": manifest has no attribute scheme");
  return *m.scheme;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

std::atomic<AnnotationServer*> g_server{nullptr};

extern "C" void on_signal(int) {
  if (auto* s = g_server.load()) s->stop();
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"faceparse: face parsing, probability-map features and attribute classification", "faceparse"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--seed", g.seed, "Run seed; every stochastic stage derives from it")->capture_default_str();
  app.add_option("--profile", g.profile, "Profile name (paper, toy) or profile JSON file")->capture_default_str();
  app.add_option("--out", g.out, "Output file or directory");

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic face dataset");
  std::size_t n = 0;
  synth->add_option("--n", n, "Number of faces")->required()->check(CLI::PositiveNumber);

  // train-seg
  auto* train_seg = app.add_subcommand("train-seg", "Train a segmentation model on a dataset's masks");
  std::string data;
  train_seg->add_option("--data", data, "Dataset directory or manifest")->required();

  // segment
  auto* segment = app.add_subcommand("segment", "Write the 7 probability maps of an image");
  std::string model_path, image_path;
  segment->add_option("--model", model_path, "Segmentation checkpoint")->required();
  segment->add_option("--image", image_path, "RGB PNG image")->required();

  // train-attr
  auto* train_attr = app.add_subcommand("train-attr", "Train the attribute classifier on PM features");
  std::string seg_model_path;
  train_attr->add_option("--data", data, "Dataset directory or manifest")->required();
  train_attr->add_option("--seg-model", seg_model_path, "Segmentation checkpoint")->required();

  // classify
  auto* classify = app.add_subcommand("classify", "Predict the attribute label of an image");
  classify->add_option("--seg-model", seg_model_path, "Segmentation checkpoint")->required();
  classify->add_option("--model", model_path, "Attribute checkpoint")->required();
  classify->add_option("--image", image_path, "RGB PNG image")->required();

  // importance
  auto* importance_cmd = app.add_subcommand("importance", "Rank face classes by random-forest importance");
  bool permutation = false;
  importance_cmd->add_option("--data", data, "Dataset directory or manifest")->required();
  importance_cmd->add_option("--seg-model", seg_model_path, "Segmentation checkpoint")->required();
  importance_cmd->add_flag("--permutation", permutation, "Also compute permutation importance");

  // kfold
  auto* kfold = app.add_subcommand("kfold", "Run the k-fold protocol and write a report");
  std::optional<std::size_t> k;
  bool shared = false, no_perm = false, no_importance = false, artifacts = false;
  kfold->add_option("--data", data, "Dataset directory or manifest")->required();
  kfold->add_option("--k", k, "Fold count (default: profile)")->check(CLI::Range(2, 100000));
  kfold->add_flag("--shared-seg-model", shared, "Train one segmentation model on all masks and reuse it");
  kfold->add_flag("--no-permutation-control", no_perm, "Skip the permuted-label control");
  kfold->add_flag("--no-importance", no_importance, "Skip the importance run");
  kfold->add_flag("--artifacts", artifacts, "Keep per-fold checkpoints under <out>/folds");

  // serve
  auto* serve = app.add_subcommand("serve", "Serve the annotation API for a dataset");
  std::string host = "127.0.0.1", ui;
  int port = 8080;
  serve->add_option("--data", data, "Dataset directory or manifest")->required();
  serve->add_option("--host", host, "Bind address")->capture_default_str();
  serve->add_option("--port", port, "Port (0 picks a free one)")->capture_default_str()->check(CLI::Range(0, 65535));
  serve->add_option("--ui", ui, "Directory with the built annotation UI");

  // profile
  auto* profile_cmd = app.add_subcommand("profile", "Print the resolved profile as JSON");

  CLI::App* active = &app;
  try {
    app.parse(argc, argv);
    for (auto* sub : app.get_subcommands()) active = sub;

    const Profile profile = resolve_profile(g.profile);

    if (active == profile_cmd) {
      const std::string text = json(profile).dump(2) + "\n";
      if (g.out.empty()) {
        out << text;
      } else {
        write_file_atomic(g.out, text);
      }
      return kExitOk;
    }

    if (active == synth) {
      const fs::path dir = require_out(g, "dataset directory");
      RunRecord rec("synth", g, profile);
      rec.argument("n", n);
      const auto m = dataio::write_synthetic(dir, profile.synth, g.seed, n);
      rec.output(dataio::kManifestFile);
      rec.write(dir / kRunRecordName);
      out << "wrote " << m.entries.size() << " faces to " << dir.string() << "\n";
      return kExitOk;
    }

    if (active == train_seg) {
      const fs::path target = require_out(g, "checkpoint file");
      const auto m = dataio::load_manifest(data);
      std::vector<Tensor> images;
      std::vector<dataio::LabelMask> masks;
      std::vector<faceseg::LabeledImage> items;
      RunRecord rec("train-seg", g, profile);
      rec.argument("data", data);
      rec.input(m.root / dataio::kManifestFile);
      images.reserve(m.entries.size());
      masks.reserve(m.entries.size());
      for (const auto& e : m.entries) {
        if (!e.mask) continue;
        images.push_back(dataio::load_image(m.resolve(e.image)));
        masks.push_back(dataio::load_mask(m.resolve(*e.mask)));
        items.push_back({&images.back(), &masks.back(), e.id});
      }
      auto cfg = profile.seg;
      cfg.train.seed = g.seed;
      netkit::TrainCallbacks cb;
      cb.on_epoch = [&](const netkit::EpochStats& s) {
        err << "epoch " << s.epoch + 1 << "/" << cfg.train.epochs << " loss " << fmt(s.mean_loss) << " accuracy "
            << fmt(s.accuracy) << "\n";
      };
      const auto r = faceseg::train_segmentation_model(items, profile.seg_network, cfg, cb);
      faceseg::save_segmentation_model(target, r.model);
      rec.output(target);
      rec.note("patches", r.patch_count);
      rec.note("history", r.history);
      rec.write(record_beside(target));
      out << "trained on " << items.size() << " images (" << r.patch_count << " patches); wrote " << target.string()
          << "\n";
      return kExitOk;
    }

    if (active == segment) {
      const fs::path dir = require_out(g, "PM directory");
      const auto model = faceseg::load_segmentation_model(model_path);
      const auto pms = faceseg::segment_image(model, dataio::load_image(image_path), fs::path(image_path).stem().string());
      RunRecord rec("segment", g, profile);
      rec.input(model_path);
      rec.input(image_path);
      for (const auto& p : faceseg::export_pms(pms, dir)) rec.output(p.filename());
      rec.note("max_sum_error", pms.max_sum_error());
      rec.write(dir / kRunRecordName);
      out << "wrote probability maps to " << dir.string() << "\n";
      return kExitOk;
    }

    if (active == train_attr) {
      const fs::path target = require_out(g, "checkpoint file");
      const auto m = dataio::load_manifest(data);
      const auto& scheme = scheme_of(m);
      const auto seg = faceseg::load_segmentation_model(seg_model_path);
      const auto spec = profile.attribute_network(scheme.class_count());
      std::vector<attrclass::FeatureVector> features;
      std::vector<std::size_t> labels;
      for_each_labeled_pms(m, seg, err, [&](const dataio::ManifestEntry& e, const faceseg::ProbabilityMaps& pms) {
        features.push_back(attrclass::build_feature_vector(pms, spec.input_shape[1], spec.input_shape[2]));
        labels.push_back(*e.label);
      });
      std::vector<attrclass::LabeledFeature> items;
      for (std::size_t i = 0; i < features.size(); ++i) items.push_back({&features[i], labels[i]});
      auto tc = profile.attr_train;
      tc.seed = g.seed;
      const auto r = attrclass::train_attribute_model(items, scheme, spec, tc);
      attrclass::save_attribute_model(target, r.model);
      RunRecord rec("train-attr", g, profile);
      rec.argument("data", data);
      rec.input(m.root / dataio::kManifestFile);
      rec.input(seg_model_path);
      rec.output(target);
      rec.note("history", r.history);
      rec.write(record_beside(target));
      out << "trained on " << items.size() << " feature vectors; wrote " << target.string() << "\n";
      return kExitOk;
    }

    if (active == classify) {
      const auto seg = faceseg::load_segmentation_model(seg_model_path);
      const auto attr = attrclass::load_attribute_model(model_path);
      const auto pms = faceseg::segment_image(seg, dataio::load_image(image_path));
      const auto f = attrclass::build_feature_vector(pms, attr.spec.input_shape[1], attr.spec.input_shape[2]);
      const auto c = attrclass::classify(attr, f);
      json probs = json::object();
      for (std::size_t i = 0; i < c.probabilities.size(); ++i) probs[attr.scheme.labels[i]] = c.probabilities[i];
      const json result{{"image", fs::path(image_path).filename().string()},
                        {"scheme", attr.scheme.name},
                        {"label", attr.scheme.labels[c.label]},
                        {"probabilities", probs}};
      out << result.dump(2) << "\n";
      if (!g.out.empty()) {
        write_file_atomic(g.out, result.dump(2) + "\n");
        RunRecord rec("classify", g, profile);
        rec.input(seg_model_path);
        rec.input(model_path);
        rec.input(image_path);
        rec.output(g.out);
        rec.write(record_beside(g.out));
      }
      return kExitOk;
    }

    if (active == importance_cmd) {
      const fs::path dir = require_out(g, "report directory");
      const auto m = dataio::load_manifest(data);
      const auto& scheme = scheme_of(m);
      const auto seg = faceseg::load_segmentation_model(seg_model_path);
      std::vector<importance::SummaryFeatures> rows;
      for_each_labeled_pms(m, seg, err, [&](const dataio::ManifestEntry& e, const faceseg::ProbabilityMaps& pms) {
        rows.push_back(importance::extract_summary(pms, *e.label));
      });
      auto fc = profile.forest;
      fc.seed = g.seed;
      const auto table = importance::summary_dataset(rows, scheme.class_count());
      const auto forest = importance::train_forest(table, fc);
      auto report = importance::importance_report(forest);
      if (permutation) report.permutation_scores = importance::permutation_importance(forest, table, derive_seed(g.seed, 1));
      json doc = importance::report_to_json(report);
      doc["oob_accuracy"] = forest.oob_accuracy ? json(*forest.oob_accuracy) : json(nullptr);
      doc["samples"] = rows.size();
      write_file_atomic(dir / "importance.json", doc.dump(2) + "\n");
      std::size_t w = 0, h = 0;
      const auto px = importance::render_importance_chart(report, w, h);
      dataio::write_png(dir / "importance.png", w, h, 3, px);
      RunRecord rec("importance", g, profile);
      rec.argument("data", data);
      rec.argument("permutation", permutation);
      rec.input(m.root / dataio::kManifestFile);
      rec.input(seg_model_path);
      rec.output("importance.json");
      rec.output("importance.png");
      rec.write(dir / kRunRecordName);
      out << "class ranking:";
      for (auto c : report.class_ranking) out << " " << kPalette[c].name << "=" << fmt((*report.class_scores)[c]);
      out << "\n";
      return kExitOk;
    }

    if (active == kfold) {
      const fs::path dir = g.out.empty() ? fs::path("kfold_report") : fs::path(g.out);
      const auto m = dataio::load_manifest(data);
      evalkit::KfoldConfig cfg;
      cfg.k = k.value_or(profile.k);
      cfg.seed = g.seed;
      cfg.seg_network = profile.seg_network;
      cfg.seg = profile.seg;
      cfg.attr_network = profile.attribute_network(m.scheme ? m.scheme->class_count() : 2);
      cfg.attr = profile.attr_train;
      cfg.shared_seg_model = shared || profile.shared_seg_model;
      cfg.permutation_control = profile.permutation_control && !no_perm;
      if (!no_importance) cfg.forest = profile.forest;
      if (artifacts) cfg.artifact_dir = dir / "folds";
      const auto r = evalkit::run_kfold(m, cfg, [&](const std::string& s) { err << s << "\n"; });
      RunRecord rec("kfold", g, profile);
      rec.argument("data", data);
      rec.argument("k", cfg.k);
      rec.argument("shared_seg_model", cfg.shared_seg_model);
      rec.argument("permutation_control", cfg.permutation_control);
      rec.argument("importance", cfg.forest.has_value());
      rec.input(m.root / dataio::kManifestFile);
      for (const auto& p : evalkit::emit_report(r, dir)) rec.output(p.filename());
      rec.write(dir / kRunRecordName);
      out << "segmentation held-out pixel accuracy (fold mean) " << fmt(r.seg_fold_mean()) << "\n";
      if (r.attribute.total()) {
        out << "attribute accuracy " << fmt(r.attribute.fold_mean()) << " +/- " << fmt(r.attribute.fold_std()) << "\n";
      }
      if (r.permuted) out << "permuted-label accuracy " << fmt(r.permuted->accuracy()) << " (chance " << fmt(r.chance()) << ")\n";
      out << "report written to " << dir.string() << "\n";
      return kExitOk;
    }

    if (active == serve) {
      AnnotationServer server(data, ui.empty() ? std::nullopt : std::optional<fs::path>(ui));
      const int bound = server.bind(host, port);
      if (!g.out.empty()) {
        RunRecord rec("serve", g, profile);
        rec.argument("data", data);
        rec.argument("host", host);
        rec.argument("port", bound);
        rec.write(fs::path(g.out) / kRunRecordName);
      }
      out << "serving " << data << " on http://" << host << ":" << bound << "/ (API under " << kApiPrefix << ")\n";
      out.flush();
      g_server = &server;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      server.listen();
      g_server = nullptr;
      return kExitOk;
    }
    return kExitUsage;
  } catch (const CLI::CallForHelp&) {
    out << active->help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << active->help();
    return kExitUsage;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const DataError& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
}

}  // namespace faceparse::cli
