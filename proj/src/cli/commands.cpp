#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <set>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "mcfuse/backbone.hpp"
#include "mcfuse/cli.hpp"
#include "mcfuse/error.hpp"
#include "mcfuse/evalkit/metrics.hpp"
#include "mcfuse/evalkit/robustness.hpp"
#include "mcfuse/evalkit/stuart_maxwell.hpp"
#include "mcfuse/evalkit/tsne.hpp"
#include "mcfuse/explain.hpp"
#include "mcfuse/feature_cache.hpp"
#include "mcfuse/psycho.hpp"
#include "mcfuse/util/csv.hpp"

namespace mcfuse::cli {

namespace fs = std::filesystem;
using evalkit::DatasetManifest;
using evalkit::ManifestRecord;
using evalkit::Split;

namespace {

struct GlobalOptions {
  std::string config;
  std::string manifest;
  std::string backbone;
  std::string output_dir;
  std::optional<std::uint64_t> seed;
  int workers = 0;
};

struct Context {
  ExperimentConfig cfg;
  std::string hash;

  evalkit::ReportMeta meta(const std::string& command) const { return {command, hash, cfg.seed}; }
};

Context make_context(const GlobalOptions& g) {
  Context ctx;
  if (!g.config.empty()) ctx.cfg = load_config(g.config);
  if (!g.manifest.empty()) ctx.cfg.manifest = fs::absolute(g.manifest);
  if (!g.backbone.empty()) ctx.cfg.backbone = fs::absolute(g.backbone);
  if (!g.output_dir.empty()) ctx.cfg.output_dir = fs::absolute(g.output_dir);
  if (g.seed) {
    ctx.cfg.seed = *g.seed;
    ctx.cfg.train.seed = *g.seed;
    ctx.cfg.tsne.seed = *g.seed;
  }
  if (g.workers > 0) ctx.cfg.workers = g.workers;
  (void)ctx.cfg.pipelines();
  ctx.hash = config_hash(ctx.cfg);
  return ctx;
}

void prepare_output(const Context& ctx) {
  fs::create_directories(ctx.cfg.output_dir);
  save_config(ctx.cfg, ctx.cfg.output_dir / "config.ini");
}

std::string provenance(const Context& ctx, const std::string& command) {
  return fmt::format("command: {}\nconfig hash: {}\nseed: {}\n", command, ctx.hash, ctx.cfg.seed);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out || !(out << text).flush()) throw IoError("cannot write " + path.string());
}

// The split manifest in the run directory wins over the configured one.
DatasetManifest load_manifest(const Context& ctx) {
  const fs::path split = ctx.cfg.output_dir / "manifest.csv";
  if (fs::exists(split)) return DatasetManifest::read(split);
  if (ctx.cfg.manifest.empty()) throw ContractError("no manifest configured (experiment.manifest or --manifest)");
  return DatasetManifest::read(ctx.cfg.manifest);
}

fs::path cache_path(const Context& ctx, ColorspaceId branch) {
  return ctx.cfg.output_dir / fmt::format("features_{}.bin", to_string(branch));
}

fs::path head_path(const Context& ctx) { return ctx.cfg.output_dir / "head.mchd"; }

Backbone load_backbone(const Context& ctx) {
  if (ctx.cfg.backbone.empty()) throw ContractError("no backbone configured (experiment.backbone or --backbone)");
  return Backbone::load(ctx.cfg.backbone);
}

std::vector<const ManifestRecord*> select(const DatasetManifest& m, const std::string& split) {
  if (split == "all") {
    std::vector<const ManifestRecord*> out;
    for (const auto& r : m.records) out.push_back(&r);
    return out;
  }
  const auto s = evalkit::parse_split(split);
  if (!s) throw ContractError("unknown split '" + split + "'");
  return m.in_split(*s);
}

std::string id_list(const std::vector<std::uint64_t>& ids) {
  std::string s;
  for (std::size_t i = 0; i < ids.size() && i < 20; ++i) s += (i ? " " : "") + std::to_string(ids[i]);
  if (ids.size() > 20) s += fmt::format(" ... ({} total)", ids.size());
  return s;
}

// Fused features from the branch caches. Records missing from a cache are
// computed with `backbone` when given, otherwise reported as a DataError.
std::vector<FusedFeature> fused_features(const Context& ctx, const DatasetManifest& m,
                                         const std::vector<const ManifestRecord*>& records,
                                         const Backbone* backbone) {
  const auto pipes = ctx.cfg.pipelines();
  std::vector<FeatureCache> caches;
  for (const auto& p : pipes) {
    const fs::path path = cache_path(ctx, p.colorspace);
    caches.push_back(fs::exists(path) ? FeatureCache::read(path) : FeatureCache(kFeatureDim));
  }
  std::vector<FusedFeature> out(records.size());
  std::vector<std::size_t> missing;
  for (std::size_t i = 0; i < records.size(); ++i) {
    out[i].image_id = records[i]->image_id;
    out[i].label = records[i]->label;
    bool complete = true;
    for (const auto& c : caches) {
      const CachedFeature* f = c.find(records[i]->image_id);
      if (!f) {
        complete = false;
        break;
      }
      out[i].values.insert(out[i].values.end(), f->values.begin(), f->values.end());
    }
    if (!complete) {
      out[i].values.clear();
      missing.push_back(i);
    }
  }
  if (missing.empty()) return out;
  if (!backbone) {
    std::vector<std::uint64_t> ids;
    for (auto i : missing) ids.push_back(records[i]->image_id);
    throw DataError("features missing for image(s): " + id_list(ids) + "; run extract first");
  }
  spdlog::info("computing features for {} uncached image(s)", missing.size());
  evalkit::parallel_for(missing.size(), ctx.cfg.workers, [&](std::size_t k) {
    const std::size_t i = missing[k];
    out[i].values = evalkit::image_features(imageio::load_image(m.resolve(*records[i])), *backbone, pipes);
  });
  return out;
}

// ---------------------------------------------------------------- commands

int cmd_split(const Context& ctx) {
  if (ctx.cfg.manifest.empty()) throw ContractError("split needs experiment.manifest or --manifest");
  const DatasetManifest m = DatasetManifest::read(ctx.cfg.manifest);
  std::vector<std::string> warnings;
  DatasetManifest out = evalkit::split_dataset(m, ctx.cfg.split, ctx.cfg.seed, &warnings);
  for (auto& r : out.records) r.path = fs::absolute(m.resolve(r)).lexically_normal().string();
  prepare_output(ctx);
  out.base_dir = ctx.cfg.output_dir;
  out.write(ctx.cfg.output_dir / "manifest.csv");
  for (const auto& w : warnings) spdlog::warn("{}", w);
  std::map<Split, std::size_t> counts;
  for (const auto& r : out.records) ++counts[r.split];
  std::cout << provenance(ctx, "split")
            << fmt::format("train {} / val {} / test {} -> {}\n", counts[Split::train], counts[Split::val],
                           counts[Split::test], (ctx.cfg.output_dir / "manifest.csv").string());
  return kOk;
}

int cmd_extract(const Context& ctx) {
  const DatasetManifest m = load_manifest(ctx);
  const Backbone backbone = load_backbone(ctx);
  const auto pipes = ctx.cfg.pipelines();
  prepare_output(ctx);

  std::vector<std::set<std::uint64_t>> done(pipes.size());
  for (std::size_t b = 0; b < pipes.size(); ++b) {
    const fs::path path = cache_path(ctx, pipes[b].colorspace);
    if (!fs::exists(path)) continue;
    FeatureCache::append(path, kFeatureDim, {});  // drops a torn tail from an interrupted run
    const FeatureCache existing = FeatureCache::read(path);
    for (const auto& r : existing.records()) done[b].insert(r.image_id);
  }
  std::vector<const ManifestRecord*> todo;
  for (const auto& r : m.records)
    for (std::size_t b = 0; b < pipes.size(); ++b)
      if (!done[b].count(r.image_id)) {
        todo.push_back(&r);
        break;
      }
  spdlog::info("extract: {} image(s), {} already cached, {} branch(es)", m.records.size(),
               m.records.size() - todo.size(), pipes.size());

  const std::size_t chunk = static_cast<std::size_t>(std::max(8, 4 * ctx.cfg.workers));
  std::size_t failed = 0;
  for (std::size_t start = 0; start < todo.size(); start += chunk) {
    const std::size_t n = std::min(chunk, todo.size() - start);
    std::vector<std::vector<std::optional<CachedFeature>>> results(n, std::vector<std::optional<CachedFeature>>(pipes.size()));
    std::vector<std::string> errors(n);
    evalkit::parallel_for(n, ctx.cfg.workers, [&](std::size_t i) {
      const ManifestRecord& r = *todo[start + i];
      try {
        const imageio::RawImage img = imageio::load_image(m.resolve(r));
        for (std::size_t b = 0; b < pipes.size(); ++b) {
          if (done[b].count(r.image_id)) continue;
          FeatureVector f = backbone.extract(run_pipeline(img, pipes[b]));
          results[i][b] = CachedFeature{r.image_id, static_cast<std::uint8_t>(r.label), pipes[b].colorspace,
                                        std::move(f.values)};
        }
      } catch (const DataError& e) {
        errors[i] = e.what();
      }
    });
    for (std::size_t b = 0; b < pipes.size(); ++b) {
      std::vector<CachedFeature> batch;
      for (std::size_t i = 0; i < n; ++i)
        if (errors[i].empty() && results[i][b]) batch.push_back(std::move(*results[i][b]));
      if (!batch.empty()) FeatureCache::append(cache_path(ctx, pipes[b].colorspace), kFeatureDim, batch);
    }
    for (std::size_t i = 0; i < n; ++i)
      if (!errors[i].empty()) {
        ++failed;
        spdlog::error("image {}: {}", todo[start + i]->image_id, errors[i]);
      }
    spdlog::info("extract: {}/{}", start + n, todo.size());
  }
  std::cout << provenance(ctx, "extract");
  for (const auto& p : pipes) std::cout << "cache: " << cache_path(ctx, p.colorspace).string() << "\n";
  std::cout << fmt::format("extracted {} image(s), {} failed\n", todo.size() - failed, failed);
  return failed ? kDataError : kOk;
}

int cmd_train(const Context& ctx) {
  const DatasetManifest m = load_manifest(ctx);
  const auto train = fused_features(ctx, m, m.in_split(Split::train), nullptr);
  const auto val = fused_features(ctx, m, m.in_split(Split::val), nullptr);
  if (train.empty()) throw DataError("manifest has no train records; run split first");
  prepare_output(ctx);
  const TrainResult r = train_head(train, ctx.cfg.train, val);
  save_head(r.model, head_path(ctx));
  write_training_log(r.log, ctx.cfg.output_dir / "train_log.csv");
  const EpochLog& sel = r.log[static_cast<std::size_t>(r.selected_epoch - 1)];
  std::string report = provenance(ctx, "train");
  report += fmt::format("train {} / val {} images, dim {}, parameters {}\n", train.size(), val.size(), r.model.dim,
                        param_count(r.model));
  report += fmt::format("selected epoch {}: train acc {:.4f}, val acc {:.4f}\n", r.selected_epoch, sel.train_acc,
                        sel.val_acc);
  report += "model: " + head_path(ctx).string() + "\n";
  write_text(ctx.cfg.output_dir / "train_report.txt", report);
  std::cout << report;
  return kOk;
}

int cmd_eval(const Context& ctx, const std::string& split, const std::string& prefix) {
  const DatasetManifest m = load_manifest(ctx);
  const HeadModel head = load_head(head_path(ctx));
  const auto records = select(m, split);
  if (records.empty()) throw DataError("no records in split '" + split + "'");
  std::optional<Backbone> backbone;
  if (!ctx.cfg.backbone.empty()) backbone = load_backbone(ctx);
  const auto feats = fused_features(ctx, m, records, backbone ? &*backbone : nullptr);
  const evalkit::Evaluation e = evalkit::evaluate(head, feats);
  prepare_output(ctx);
  const auto meta = ctx.meta("eval");
  evalkit::write_metrics_csv(e, meta, ctx.cfg.output_dir / (prefix + "_metrics.csv"));
  evalkit::write_predictions_csv(e.predictions, ctx.cfg.output_dir / (prefix + "_predictions.csv"));
  const std::string report = evalkit::format_report(e, meta, "evaluation on " + split + " split");
  write_text(ctx.cfg.output_dir / (prefix + "_report.txt"), report);
  std::cout << report;
  return kOk;
}

int cmd_robustness(const Context& ctx) {
  const DatasetManifest m = load_manifest(ctx);
  const HeadModel head = load_head(head_path(ctx));
  const Backbone backbone = load_backbone(ctx);
  const auto qfs = imageio::quality_sweep();
  const auto pipes = ctx.cfg.pipelines();
  const auto points = evalkit::robustness_sweep(head, backbone, pipes, m, qfs, ctx.cfg.workers);
  prepare_output(ctx);
  evalkit::write_robustness_csv(points, ctx.meta("robustness"), ctx.cfg.output_dir / "robustness.csv");
  std::string report = provenance(ctx, "robustness") + "qf  accuracy\n";
  for (const auto& p : points) report += fmt::format("{:3d}  {:.2f}%\n", p.qf, 100 * p.accuracy);
  write_text(ctx.cfg.output_dir / "robustness_report.txt", report);
  std::cout << report;
  return kOk;
}

int cmd_tsne(const Context& ctx, const std::string& split) {
  const DatasetManifest m = load_manifest(ctx);
  const auto records = select(m, split);
  const auto feats = fused_features(ctx, m, records, nullptr);
  std::vector<std::vector<float>> x;
  std::vector<int> labels;
  for (const auto& f : feats) {
    x.push_back(f.values);
    labels.push_back(f.label);
  }
  evalkit::TsneConfig tc = ctx.cfg.tsne;
  tc.perplexity = std::min(tc.perplexity, (static_cast<double>(x.size()) - 1) / 3.0);
  if (tc.perplexity != ctx.cfg.tsne.perplexity)
    spdlog::warn("perplexity lowered to {:.3f} for {} points", tc.perplexity, x.size());
  const auto e = evalkit::tsne(x, labels, tc);
  prepare_output(ctx);
  evalkit::write_embedding_csv(e, ctx.cfg.output_dir / "embedding.csv");
  evalkit::write_embedding_svg(e, ctx.cfg.output_dir / "embedding.svg");
  std::string report = provenance(ctx, "tsne");
  report += fmt::format("points {}, perplexity {}, iterations {}\n", x.size(), tc.perplexity, tc.iterations);
  std::set<int> distinct(labels.begin(), labels.end());
  if (distinct.size() > 1) report += fmt::format("silhouette {:.4f}\n", evalkit::silhouette(e));
  write_text(ctx.cfg.output_dir / "tsne_report.txt", report);
  std::cout << report;
  return kOk;
}

struct CamOptions {
  std::vector<std::uint64_t> ids;
  int limit = 10;
  int label = -1;
  std::string markings;
};

int cmd_cam(const Context& ctx, const CamOptions& opt) {
  const DatasetManifest m = load_manifest(ctx);
  const HeadModel head = load_head(head_path(ctx));
  const Backbone backbone = load_backbone(ctx);
  const auto pipes = ctx.cfg.pipelines();

  std::vector<const ManifestRecord*> records;
  if (!opt.ids.empty()) {
    for (auto id : opt.ids) {
      const ManifestRecord* r = m.find(id);
      if (!r) throw DataError("image " + std::to_string(id) + " not in manifest");
      records.push_back(r);
    }
  } else {
    for (const auto* r : m.in_split(Split::test))
      if (static_cast<int>(records.size()) < opt.limit) records.push_back(r);
  }
  if (records.empty()) throw DataError("cam: no images selected");

  std::map<std::uint64_t, explain::RegionMarking> markings;
  if (!opt.markings.empty()) {
    std::ifstream in(opt.markings);
    if (!in) throw IoError("cannot read " + opt.markings);
    std::stringstream ss;
    ss << in.rdbuf();
    for (const auto& a : psycho::parse_export(ss.str())) markings[a.image_id].boxes = a.boxes;
  }

  prepare_output(ctx);
  const fs::path dir = ctx.cfg.output_dir / "cam";
  fs::create_directories(dir);
  std::vector<explain::AgreementRow> rows;
  std::string report = provenance(ctx, "cam");
  double worst = 0;
  for (const auto* r : records) {
    const imageio::RawImage img = imageio::load_image(m.resolve(*r));
    std::vector<FeatureMapStack> maps;
    std::vector<float> pooled;
    for (const auto& p : pipes) {
      BackboneOutput o = backbone.extract_maps(run_pipeline(img, p));
      pooled.insert(pooled.end(), o.pooled.values.begin(), o.pooled.values.end());
      maps.push_back(std::move(o.maps));
    }
    const Prediction pred = predict(head, pooled);
    const int label = opt.label >= 0 ? opt.label : pred.label;
    const explain::Heatmap h = explain::cam(head, maps, label);
    const double logit = pred.logits[label];
    const double err = std::abs(explain::cam_logit(h, head) - logit) / std::max(std::abs(logit), 1e-12);
    worst = std::max(worst, err);
    explain::save_heatmap_png(h, dir / fmt::format("{}_{}_heatmap.png", r->image_id, label_name(label)));
    imageio::save_png(explain::overlay(h, img), dir / fmt::format("{}_{}_overlay.png", r->image_id, label_name(label)));
    report += fmt::format("image {} truth {} predicted {} class {}{}\n", r->image_id, label_name(r->label),
                          label_name(pred.label), label_name(label), h.all_zero ? " (zero map)" : "");
    const auto mk = markings.find(r->image_id);
    if (mk != markings.end()) {
      explain::RegionMarking rm = mk->second;
      rm.frame_width = img.width;
      rm.frame_height = img.height;
      rows.push_back({r->image_id, label, explain::marking_agreement(h, rm)});
    }
  }
  report += fmt::format("max relative logit identity error {:.3e}\n", worst);
  if (!opt.markings.empty()) {
    explain::write_agreement_csv(rows, ctx.cfg.output_dir / "agreement.csv");
    double energy = 0, hits = 0;
    for (const auto& row : rows) {
      energy += row.agreement.energy_fraction;
      hits += row.agreement.pointing_hit;
    }
    if (!rows.empty())
      report += fmt::format("agreement on {} marked image(s): mean energy fraction {:.4f}, pointing {:.4f}\n",
                            rows.size(), energy / rows.size(), hits / rows.size());
  }
  write_text(ctx.cfg.output_dir / "cam_report.txt", report);
  std::cout << report;
  return kOk;
}

evalkit::PairedPredictions pair_files(const std::string& a_path, const std::string& b_path) {
  const auto a = evalkit::read_predictions_csv(a_path);
  const auto b = evalkit::read_predictions_csv(b_path);
  std::map<std::uint64_t, const evalkit::ImagePrediction*> bmap;
  for (const auto& p : b) bmap[p.image_id] = &p;
  evalkit::PairedPredictions pp;
  for (const auto& p : a) {
    const auto it = bmap.find(p.image_id);
    if (it == bmap.end()) continue;
    if (it->second->truth != p.truth) throw DataError(fmt::format("image {}: truth labels disagree", p.image_id));
    pp.truth.push_back(p.truth);
    pp.a.push_back(p.predicted);
    pp.b.push_back(it->second->predicted);
  }
  if (pp.a.empty()) throw DataError("prediction files share no image ids");
  return pp;
}

evalkit::PairedPredictions read_joined(const std::string& path) {
  const csv::Table t = csv::read(path);
  const std::size_t ct = t.column("truth"), ca = t.column("manual"), cb = t.column("model");
  evalkit::PairedPredictions pp;
  for (const auto& row : t.rows) {
    try {
      pp.truth.push_back(std::stoi(row[ct]));
      pp.a.push_back(std::stoi(row[ca]));
      pp.b.push_back(std::stoi(row[cb]));
    } catch (const std::exception&) {
      throw DataError(path + ": malformed row");
    }
  }
  return pp;
}

int cmd_significance(const Context& ctx, const std::string& a, const std::string& b, const std::string& joined,
                     const std::string& out) {
  evalkit::PairedPredictions pp;
  if (!joined.empty()) pp = read_joined(joined);
  else if (!a.empty() && !b.empty()) pp = pair_files(a, b);
  else throw ContractError("significance needs --a and --b, or --joined");
  const auto r = evalkit::stuart_maxwell(pp);
  std::string report = provenance(ctx, "significance");
  report += fmt::format("paired images {}\n", pp.a.size());
  report += "agreement table (rows A, cols B):\n";
  for (const auto& row : r.table) report += fmt::format("  {:6d} {:6d} {:6d}\n", row[0], row[1], row[2]);
  report += fmt::format("Stuart-Maxwell statistic {:.10g}, df {}, p {:.10g}{}\n", r.statistic, r.df, r.p_value,
                        r.reduced ? " (singular covariance, reduced df)" : "");
  report += fmt::format("significant at 0.05: {}\n", r.p_value < 0.05 ? "yes" : "no");
  if (!out.empty()) write_text(out, report);
  std::cout << report;
  return kOk;
}

struct PsychoOptions {
  std::string export_dir;
  std::string predictions;
};

int cmd_psycho_serve(const Context& ctx, const PsychoOptions& opt) {
  const auto& pc = ctx.cfg.psycho;
  if (pc.study_dir.empty()) throw ContractError("psycho.study_dir is not set");
  psycho::StudyConfig sc;
  sc.images_per_session = pc.images_per_session;
  sc.seed = ctx.cfg.seed;
  auto study = psycho::Study::open(pc.study_dir, sc);

  if (!opt.export_dir.empty()) {
    const fs::path dir = opt.export_dir;
    fs::create_directories(dir);
    write_text(dir / "annotations.ndjson", study->export_ndjson());
    const auto cm = study->manual_confusion();
    evalkit::Evaluation e;
    e.confusion = cm;
    evalkit::write_metrics_csv(e, ctx.meta("psycho-serve --export"), dir / "manual_metrics.csv");
    psycho::write_manual_predictions(*study, dir / "manual_predictions.csv");
    std::string report = evalkit::format_report(e, ctx.meta("psycho-serve --export"), "manual classification");
    if (!opt.predictions.empty()) {
      const auto rows = psycho::write_joined(*study, evalkit::read_predictions_csv(opt.predictions), dir / "joined.csv");
      report += fmt::format("joined {} image(s) with model predictions\n", rows);
    }
    write_text(dir / "manual_report.txt", report);
    std::cout << report;
    return kOk;
  }

  const char* token = std::getenv("MCFUSE_ADMIN_TOKEN");
  if (!token || !*token) spdlog::warn("MCFUSE_ADMIN_TOKEN is not set; export endpoints are disabled");
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);
  psycho::Service service({{pc.study_id, study.get()}}, token ? token : "");
  const int port = service.start(pc.host, pc.port);
  std::cout << provenance(ctx, "psycho-serve")
            << fmt::format("serving study '{}' ({} images, {} unassigned) on http://{}:{}\n", pc.study_id,
                           study->pool_size(), study->unassigned(), pc.host, port)
            << std::flush;
  int sig = 0;
  sigwait(&set, &sig);
  service.stop();
  return kOk;
}

}  // namespace

int run_cli(int argc, char** argv) {
  CLI::App app{"Colorspace-fusion image forensics: GAN / Graphics / Real"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "mcfuse 1.0");
  GlobalOptions g;
  std::uint64_t seed = 0;
  app.add_option("-c,--config", g.config, "Experiment config (INI)")->check(CLI::ExistingFile);
  app.add_option("--manifest", g.manifest, "Dataset manifest CSV (overrides the config)");
  app.add_option("--backbone", g.backbone, "Backbone ONNX file (overrides the config)");
  app.add_option("-o,--output-dir", g.output_dir, "Run directory (overrides the config)");
  auto* seed_opt = app.add_option("--seed", seed, "Seed (overrides the config)");
  app.add_option("-j,--workers", g.workers, "Worker threads for extraction and sweeps")->check(CLI::PositiveNumber);
  app.add_flag_callback("-v,--verbose", [] { spdlog::set_level(spdlog::level::debug); }, "Debug logging");
  app.fallthrough();

  auto* split = app.add_subcommand("split", "Stratified 60:20:20 split written to <output_dir>/manifest.csv");
  auto* extract = app.add_subcommand("extract", "Backbone features per branch into resumable caches");
  auto* train = app.add_subcommand("train", "Train the softmax head on cached train/val features");
  std::string eval_split = "test", eval_prefix;
  auto* eval = app.add_subcommand("eval", "Confusion matrix and accuracies on a split");
  eval->add_option("--split", eval_split, "test, val, train, unassigned or all")->capture_default_str();
  eval->add_option("--prefix", eval_prefix, "Output file prefix (default: the split name)");
  auto* robust = app.add_subcommand("robustness", "JPEG quality sweep 100..10 on the test split");
  std::string tsne_split = "test";
  auto* tsne = app.add_subcommand("tsne", "2D t-SNE of fused features");
  tsne->add_option("--split", tsne_split, "Records to embed")->capture_default_str();
  CamOptions cam_opt;
  auto* cam = app.add_subcommand("cam", "Class activation heatmaps and overlays");
  cam->add_option("--image-id", cam_opt.ids, "Image ids (default: first --limit test images)");
  cam->add_option("--limit", cam_opt.limit, "Number of test images")->capture_default_str();
  cam->add_option("--class", cam_opt.label, "Class id 0-2 (default: predicted)")->check(CLI::Range(0, 2));
  cam->add_option("--markings", cam_opt.markings, "Annotation export (NDJSON) to score against");
  std::string sig_a, sig_b, sig_joined, sig_out;
  auto* sig = app.add_subcommand("significance", "Stuart-Maxwell test between paired predictions");
  sig->add_option("--a", sig_a, "Predictions CSV of classifier A");
  sig->add_option("--b", sig_b, "Predictions CSV of classifier B");
  sig->add_option("--joined", sig_joined, "Joined CSV (image_id,truth,manual,model)");
  sig->add_option("--out", sig_out, "Write the report here too");
  PsychoOptions ps_opt;
  auto* ps = app.add_subcommand("psycho-serve",
                                "Serve the annotation study (admin token from MCFUSE_ADMIN_TOKEN)");
  ps->add_option("--export", ps_opt.export_dir, "Export results into this directory and exit");
  ps->add_option("--predictions", ps_opt.predictions, "Model predictions CSV to join with the export");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }
  if (seed_opt->count()) g.seed = seed;

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    const Context ctx = make_context(g);
    if (split->parsed()) return cmd_split(ctx);
    if (extract->parsed()) return cmd_extract(ctx);
    if (train->parsed()) return cmd_train(ctx);
    if (eval->parsed()) return cmd_eval(ctx, eval_split, eval_prefix.empty() ? eval_split : eval_prefix);
    if (robust->parsed()) return cmd_robustness(ctx);
    if (tsne->parsed()) return cmd_tsne(ctx, tsne_split);
    if (cam->parsed()) return cmd_cam(ctx, cam_opt);
    if (sig->parsed()) return cmd_significance(ctx, sig_a, sig_b, sig_joined, sig_out);
    if (ps->parsed()) return cmd_psycho_serve(ctx, ps_opt);
  } catch (const ContractError& e) {
    spdlog::error("{}: {}", command, e.what());
    return kUsage;
  } catch (const NumericError& e) {
    spdlog::error("{}: numeric failure: {}", command, e.what());
    return kNumericError;
  } catch (const std::exception& e) {
    spdlog::error("{}: {}", command, e.what());
    return kDataError;
  }
  return kUsage;
}

}  // namespace mcfuse::cli
