#include <doctest.h>

#include <sys/wait.h>

#include <cstdio>
#include <fstream>
#include <sstream>

#include "mcfuse/cli.hpp"
#include "mcfuse/error.hpp"
#include "mcfuse/evalkit/metrics.hpp"
#include "mcfuse/feature_cache.hpp"
#include "mcfuse/util/csv.hpp"
#include "support.hpp"

using namespace mcfuse;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string out;
};

Run mcfuse_cli(const std::string& args) {
  const std::string cmd = std::string(MCFUSE_CLI_PATH) + " " + args + " 2>&1";
  Run r;
  FILE* p = ::popen(cmd.c_str(), "r");
  REQUIRE(p);
  char buf[4096];
  while (std::size_t n = std::fread(buf, 1, sizeof buf, p)) r.out.append(buf, n);
  const int status = ::pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// First `per_class` images of each class from the bundled corpus, one category per class.
fs::path small_manifest(const fs::path& dir, int per_class) {
  const auto m = evalkit::DatasetManifest::read(test::corpus_manifest());
  evalkit::DatasetManifest out;
  out.base_dir = m.base_dir;
  int count[3] = {};
  for (const auto& r : m.records)
    if (count[r.label]++ < per_class) {
      auto copy = r;
      copy.path = m.resolve(r).string();
      copy.category = "all";
      out.records.push_back(copy);
    }
  out.write(dir / "small.csv");
  return dir / "small.csv";
}

}  // namespace

TEST_CASE("usage errors exit with 1") {
  CHECK(mcfuse_cli("").code == cli::kUsage);
  CHECK(mcfuse_cli("frobnicate").code == cli::kUsage);
  CHECK(mcfuse_cli("--help").code == cli::kOk);
  test::TempDir dir("cli-usage");
  CHECK(mcfuse_cli("-o " + dir.path().string() + " significance").code == cli::kUsage);
}

TEST_CASE("config text round trip") {
  test::TempDir dir("cli-config");
  cli::ExperimentConfig c;
  c.manifest = dir / "m.csv";
  c.output_dir = dir / "run";  // relative paths would be re-anchored at the config's directory
  c.seed = 42;
  c.branches = {ColorspaceId::RGB, ColorspaceId::YCbCr};
  c.log_residual = false;
  c.train.epochs = 7;
  c.train.checkpoint = Checkpoint::final_epoch;
  c.log.sigma = 1.25;
  c.split = {70, 10, 20};
  c.tsne.perplexity = 12.5;
  c.psycho.port = 9000;
  cli::save_config(c, dir / "c.ini");
  const auto back = cli::load_config(dir / "c.ini");
  CHECK(cli::config_text(back) == cli::config_text(c));
  CHECK(cli::config_hash(back) == cli::config_hash(c));
  CHECK(cli::config_hash(back).size() == 16);
  cli::ExperimentConfig d = c;
  d.seed = 43;
  CHECK(cli::config_hash(d) != cli::config_hash(c));
  REQUIRE(back.pipelines().size() == 2);
  CHECK(back.pipelines()[1].apply_rescale);
  CHECK_FALSE(back.pipelines()[1].apply_log_residual);

  std::ofstream(dir / "bad.ini") << "[experiment]\nsede = 3\n";
  CHECK_THROWS_AS(cli::load_config(dir / "bad.ini"), ContractError);
  std::ofstream(dir / "bad2.ini") << "[train]\nepochs = many\n";
  CHECK_THROWS_AS(cli::load_config(dir / "bad2.ini"), ContractError);
  std::ofstream(dir / "rel.ini") << "[experiment]\nmanifest = data/m.csv\n";
  CHECK(cli::load_config(dir / "rel.ini").manifest == dir / "data/m.csv");
}

TEST_CASE("split command writes a stratified manifest") {
  test::TempDir dir("cli-split");
  const auto r = mcfuse_cli("--manifest " + test::corpus_manifest().string() + " -o " + dir.path().string() +
                            " --seed 3 split");
  CAPTURE(r.out);
  REQUIRE(r.code == 0);
  const auto m = evalkit::DatasetManifest::read(dir / "manifest.csv");
  CHECK(m.records.size() == 120);
  CHECK(m.in_split(evalkit::Split::test).size() == 24);
  CHECK(fs::exists(dir / "config.ini"));
  // splitting again is refused: the run manifest is already assigned
  CHECK(mcfuse_cli("-o " + dir.path().string() + " --manifest " + (dir / "manifest.csv").string() + " split").code ==
        cli::kUsage);
}

TEST_CASE("significance on prediction files") {
  test::TempDir dir("cli-sig");
  // same table as the frozen Stuart-Maxwell example
  const int table[3][3] = {{20, 5, 0}, {2, 30, 4}, {1, 3, 35}};
  std::vector<evalkit::ImagePrediction> a, b;
  std::uint64_t id = 1;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < table[i][j]; ++k, ++id) {
        a.push_back({id, 0, i, {1, 0, 0}});
        b.push_back({id, 0, j, {1, 0, 0}});
      }
  evalkit::write_predictions_csv(a, dir / "a.csv");
  evalkit::write_predictions_csv(b, dir / "b.csv");
  const auto r = mcfuse_cli("-o " + (dir / "run").string() + " significance --a " + (dir / "a.csv").string() +
                            " --b " + (dir / "b.csv").string() + " --out " + (dir / "sig.txt").string());
  CAPTURE(r.out);
  REQUIRE(r.code == 0);
  const std::string rep = slurp(dir / "sig.txt");
  CHECK(rep.find("statistic 0.5079365079") != std::string::npos);
  CHECK(rep.find("p 0.77571642") != std::string::npos);
  CHECK(rep.find("df 2") != std::string::npos);
  CHECK(mcfuse_cli("-o " + (dir / "run").string() + " significance --a " + (dir / "missing.csv").string() + " --b " +
                   (dir / "b.csv").string())
            .code == cli::kDataError);
}

TEST_CASE("extract, train and eval on a small subset") {
  if (test::model_path().empty()) {
    MESSAGE("no backbone export; skipped");
    return;
  }
  test::TempDir dir("cli-pipeline");
  const fs::path manifest = small_manifest(dir.path(), 5);
  {
    std::ofstream ini(dir / "exp.ini");
    ini << "[experiment]\nmanifest = " << manifest.string() << "\nbackbone = " << test::model_path().string()
        << "\noutput_dir = " << (dir / "run").string() << "\nseed = 1\n[train]\nepochs = 5\nbatch_size = 4\n";
  }
  const std::string base = "-c " + (dir / "exp.ini").string() + " ";
  Run r = mcfuse_cli(base + "split");
  REQUIRE_MESSAGE(r.code == 0, r.out);
  r = mcfuse_cli(base + "extract");
  REQUIRE_MESSAGE(r.code == 0, r.out);
  for (const char* b : {"RGB", "LCH", "HSV"}) {
    const auto c = FeatureCache::read(dir / "run" / (std::string("features_") + b + ".bin"));
    CHECK(c.size() == 15);
    CHECK(c.dim() == kFeatureDim);
  }
  // resuming finds nothing left to do and keeps the caches intact
  r = mcfuse_cli(base + "extract");
  REQUIRE_MESSAGE(r.code == 0, r.out);
  CHECK(FeatureCache::read(dir / "run" / "features_RGB.bin").size() == 15);

  r = mcfuse_cli(base + "train");
  REQUIRE_MESSAGE(r.code == 0, r.out);
  CHECK(load_head(dir / "run" / "head.mchd").dim == 3 * kFeatureDim);
  CHECK(csv::read(dir / "run" / "train_log.csv").rows.size() == 5);

  r = mcfuse_cli(base + "eval");
  REQUIRE_MESSAGE(r.code == 0, r.out);
  const auto preds = evalkit::read_predictions_csv(dir / "run" / "test_predictions.csv");
  CHECK(preds.size() == 3);
  CHECK(slurp(dir / "run" / "test_report.txt").find(cli::config_hash(cli::load_config(dir / "run" / "config.ini"))) !=
        std::string::npos);

  // a corrupt image is reported as a data error while the others are processed
  {
    std::ofstream(dir / "broken.jpg") << "nope";
    std::ofstream m(dir / "run" / "manifest.csv", std::ios::app);
    m << "9999," << (dir / "broken.jpg").string() << ",0,all,test\n";
  }
  r = mcfuse_cli(base + "extract");
  CHECK(r.code == cli::kDataError);
  CHECK(FeatureCache::read(dir / "run" / "features_RGB.bin").size() == 15);
}
