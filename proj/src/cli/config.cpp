#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <spdlog/fmt/fmt.h>

#include "mcfuse/cli.hpp"
#include "mcfuse/error.hpp"
#include "mcfuse/util/hash.hpp"

namespace mcfuse::cli {

namespace pt = boost::property_tree;

namespace {

const std::map<std::string, std::set<std::string>> kKeys = {
    {"experiment",
     {"manifest", "backbone", "output_dir", "seed", "branches", "log_residual", "stage_order", "workers"}},
    {"train", {"learning_rate", "batch_size", "epochs", "beta1", "beta2", "epsilon", "checkpoint", "workers"}},
    {"log", {"sigma", "kernel_size"}},
    {"split", {"train", "val", "test"}},
    {"tsne", {"perplexity", "iterations", "exaggeration_iters", "exaggeration", "learning_rate"}},
    {"psycho", {"study_dir", "study_id", "images_per_session", "host", "port"}},
};

template <class T>
T get(const pt::ptree& t, const std::string& key, T fallback) {
  const auto v = t.get_optional<std::string>(key);
  if (!v) return fallback;
  try {
    if constexpr (std::is_same_v<T, bool>) {
      if (*v == "true" || *v == "1" || *v == "yes") return true;
      if (*v == "false" || *v == "0" || *v == "no") return false;
      throw std::invalid_argument("not a boolean");
    } else if constexpr (std::is_same_v<T, std::string>) {
      return *v;
    } else if constexpr (std::is_same_v<T, double>) {
      std::size_t used = 0;
      const double d = std::stod(*v, &used);
      if (used != v->size()) throw std::invalid_argument("trailing characters");
      return d;
    } else {
      std::size_t used = 0;
      const long long n = std::stoll(*v, &used);
      if (used != v->size()) throw std::invalid_argument("trailing characters");
      if constexpr (std::is_unsigned_v<T>)
        if (n < 0) throw std::invalid_argument("negative");
      return static_cast<T>(n);
    }
  } catch (const std::exception&) {
    throw ContractError(fmt::format("config: bad value '{}' for {}", *v, key));
  }
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  if (p.empty()) return {};
  const std::filesystem::path path(p);
  return path.is_absolute() ? path : (base / path).lexically_normal();
}

std::string join_branches(const std::vector<ColorspaceId>& b) {
  std::string s;
  for (std::size_t i = 0; i < b.size(); ++i) s += (i ? "," : "") + std::string(to_string(b[i]));
  return s;
}

}  // namespace

std::vector<PipelineConfig> ExperimentConfig::pipelines() const {
  std::vector<PipelineConfig> out;
  for (auto b : branches) {
    PipelineConfig p = sc_pipeline(b);
    p.log = log;
    p.order = stage_order;
    p.apply_log_residual = log_residual && b != ColorspaceId::RGB;
    validate(p);
    out.push_back(p);
  }
  return out;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  pt::ptree tree;
  try {
    pt::read_ini(path.string(), tree);
  } catch (const pt::ini_parser_error& e) {
    if (!std::filesystem::exists(path)) throw IoError("config not found: " + path.string());
    throw ContractError(fmt::format("config {}: {}", path.string(), e.what()));
  }
  for (const auto& [section, body] : tree) {
    const auto it = kKeys.find(section);
    if (it == kKeys.end()) throw ContractError("config: unknown section [" + section + "]");
    for (const auto& [key, value] : body)
      if (!it->second.count(key)) throw ContractError("config: unknown key " + section + "." + key);
  }
  const std::filesystem::path base = std::filesystem::absolute(path).parent_path();
  ExperimentConfig c;
  const pt::ptree empty;
  auto section = [&](const char* name) -> const pt::ptree& {
    const auto child = tree.get_child_optional(name);
    return child ? *child : empty;
  };

  const auto& ex = section("experiment");
  c.manifest = resolve(base, get<std::string>(ex, "manifest", ""));
  c.backbone = resolve(base, get<std::string>(ex, "backbone", ""));
  c.output_dir = resolve(base, get<std::string>(ex, "output_dir", "run"));
  c.seed = get<std::uint64_t>(ex, "seed", 0);
  if (const auto b = ex.get_optional<std::string>("branches")) {
    c.branches.clear();
    std::stringstream ss(*b);
    for (std::string item; std::getline(ss, item, ',');) {
      item.erase(0, item.find_first_not_of(" \t"));
      item.erase(item.find_last_not_of(" \t") + 1);
      const auto id = parse_colorspace(item);
      if (!id) throw ContractError("config: unknown colorspace '" + item + "'");
      c.branches.push_back(*id);
    }
    if (c.branches.empty()) throw ContractError("config: experiment.branches is empty");
  }
  c.log_residual = get<bool>(ex, "log_residual", c.log_residual);
  const auto order = get<std::string>(ex, "stage_order", "rescale_then_log");
  if (order == "rescale_then_log") c.stage_order = StageOrder::rescale_then_log;
  else if (order == "log_then_rescale") c.stage_order = StageOrder::log_then_rescale;
  else throw ContractError("config: stage_order must be rescale_then_log or log_then_rescale");
  c.workers = get<int>(ex, "workers", 1);
  if (c.workers < 1) throw ContractError("config: workers must be >= 1");

  const auto& tr = section("train");
  c.train.learning_rate = get<double>(tr, "learning_rate", c.train.learning_rate);
  c.train.batch_size = get<int>(tr, "batch_size", c.train.batch_size);
  c.train.epochs = get<int>(tr, "epochs", c.train.epochs);
  c.train.beta1 = get<double>(tr, "beta1", c.train.beta1);
  c.train.beta2 = get<double>(tr, "beta2", c.train.beta2);
  c.train.epsilon = get<double>(tr, "epsilon", c.train.epsilon);
  c.train.workers = get<int>(tr, "workers", c.train.workers);
  const auto ck = get<std::string>(tr, "checkpoint", "best_val");
  if (ck == "best_val") c.train.checkpoint = Checkpoint::best_val;
  else if (ck == "final") c.train.checkpoint = Checkpoint::final_epoch;
  else throw ContractError("config: train.checkpoint must be best_val or final");
  c.train.seed = c.seed;
  validate(c.train);

  const auto& lg = section("log");
  c.log.sigma = get<double>(lg, "sigma", c.log.sigma);
  c.log.kernel_size = get<int>(lg, "kernel_size", c.log.kernel_size);

  const auto& sp = section("split");
  c.split.train = get<int>(sp, "train", c.split.train);
  c.split.val = get<int>(sp, "val", c.split.val);
  c.split.test = get<int>(sp, "test", c.split.test);

  const auto& ts = section("tsne");
  c.tsne.perplexity = get<double>(ts, "perplexity", c.tsne.perplexity);
  c.tsne.iterations = get<int>(ts, "iterations", c.tsne.iterations);
  c.tsne.exaggeration_iters = get<int>(ts, "exaggeration_iters", c.tsne.exaggeration_iters);
  c.tsne.exaggeration = get<double>(ts, "exaggeration", c.tsne.exaggeration);
  c.tsne.learning_rate = get<double>(ts, "learning_rate", c.tsne.learning_rate);
  c.tsne.seed = c.seed;

  const auto& ps = section("psycho");
  c.psycho.study_dir = resolve(base, get<std::string>(ps, "study_dir", ""));
  c.psycho.study_id = get<std::string>(ps, "study_id", c.psycho.study_id);
  c.psycho.images_per_session = get<int>(ps, "images_per_session", c.psycho.images_per_session);
  c.psycho.host = get<std::string>(ps, "host", c.psycho.host);
  c.psycho.port = get<int>(ps, "port", c.psycho.port);

  (void)c.pipelines();  // validates branch and LoG settings
  return c;
}

std::string config_text(const ExperimentConfig& c) {
  std::string s;
  s += "[experiment]\n";
  s += fmt::format("manifest = {}\nbackbone = {}\noutput_dir = {}\nseed = {}\n", c.manifest.string(),
                   c.backbone.string(), c.output_dir.string(), c.seed);
  s += fmt::format("branches = {}\nlog_residual = {}\nstage_order = {}\nworkers = {}\n", join_branches(c.branches),
                   c.log_residual ? "true" : "false",
                   c.stage_order == StageOrder::rescale_then_log ? "rescale_then_log" : "log_then_rescale",
                   c.workers);
  s += "\n[train]\n";
  s += fmt::format(
      "learning_rate = {}\nbatch_size = {}\nepochs = {}\nbeta1 = {}\nbeta2 = {}\nepsilon = {}\ncheckpoint = {}\n"
      "workers = {}\n",
      c.train.learning_rate, c.train.batch_size, c.train.epochs, c.train.beta1, c.train.beta2, c.train.epsilon,
      c.train.checkpoint == Checkpoint::best_val ? "best_val" : "final", c.train.workers);
  s += fmt::format("\n[log]\nsigma = {}\nkernel_size = {}\n", c.log.sigma, c.log.kernel_size);
  s += fmt::format("\n[split]\ntrain = {}\nval = {}\ntest = {}\n", c.split.train, c.split.val, c.split.test);
  s += fmt::format(
      "\n[tsne]\nperplexity = {}\niterations = {}\nexaggeration_iters = {}\nexaggeration = {}\nlearning_rate = {}\n",
      c.tsne.perplexity, c.tsne.iterations, c.tsne.exaggeration_iters, c.tsne.exaggeration, c.tsne.learning_rate);
  s += fmt::format("\n[psycho]\nstudy_dir = {}\nstudy_id = {}\nimages_per_session = {}\nhost = {}\nport = {}\n",
                   c.psycho.study_dir.string(), c.psycho.study_id, c.psycho.images_per_session, c.psycho.host,
                   c.psycho.port);
  return s;
}

void save_config(const ExperimentConfig& c, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot create " + path.string());
  out << config_text(c);
  if (!out.flush()) throw IoError("write failed: " + path.string());
}

std::string config_hash(const ExperimentConfig& c) { return hex64(fnv1a64(config_text(c))); }

}  // namespace mcfuse::cli
