#include <algorithm>
#include <cmath>
#include <fstream>
#include <cstdlib>
#include <limits>
#include <stdexcept>
#include <string>

#include <spdlog/fmt/fmt.h>

#include "mcfuse/error.hpp"
#include "mcfuse/evalkit/metrics.hpp"
#include "mcfuse/util/csv.hpp"

namespace mcfuse::evalkit {

void ConfusionMatrix::add(int truth, int predicted) {
  if (truth < 0 || truth >= kNumClasses || predicted < 0 || predicted >= kNumClasses)
    throw ContractError("confusion matrix label out of range");
  ++counts[truth][predicted];
}

std::uint64_t ConfusionMatrix::row_sum(int c) const {
  std::uint64_t s = 0;
  for (auto v : counts[c]) s += v;
  return s;
}

std::uint64_t ConfusionMatrix::total() const {
  std::uint64_t s = 0;
  for (int c = 0; c < kNumClasses; ++c) s += row_sum(c);
  return s;
}

double ConfusionMatrix::accuracy() const {
  const auto n = total();
  if (n == 0) return std::numeric_limits<double>::quiet_NaN();
  std::uint64_t tr = 0;
  for (int c = 0; c < kNumClasses; ++c) tr += counts[c][c];
  return static_cast<double>(tr) / static_cast<double>(n);
}

std::array<double, kNumClasses> ConfusionMatrix::per_class_accuracy() const {
  std::array<double, kNumClasses> a{};
  for (int c = 0; c < kNumClasses; ++c) {
    const auto r = row_sum(c);
    a[c] = r ? static_cast<double>(counts[c][c]) / static_cast<double>(r) : std::numeric_limits<double>::quiet_NaN();
  }
  return a;
}

Evaluation evaluate(const HeadModel& m, std::span<const FusedFeature> test) {
  if (test.empty()) throw DataError("evaluate: empty test set");
  Evaluation e;
  for (const auto& f : test) {
    const Prediction p = predict(m, f.values);
    e.confusion.add(f.label, p.label);
    e.predictions.push_back({f.image_id, f.label, p.label, p.probs});
  }
  return e;
}

void write_metrics_csv(const Evaluation& e, const ReportMeta& meta, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot create " + path.string());
  out << "metric,value\n";
  out << "command," << meta.command << "\n";
  out << "config_hash," << meta.config_hash << "\n";
  out << "seed," << meta.seed << "\n";
  out << "n," << e.confusion.total() << "\n";
  const auto pc = e.confusion.per_class_accuracy();
  for (int c = 0; c < kNumClasses; ++c) out << fmt::format("accuracy_{},{:.6f}\n", label_name(c), pc[c]);
  out << fmt::format("accuracy_total,{:.6f}\n", e.confusion.accuracy());
  for (int t = 0; t < kNumClasses; ++t)
    for (int p = 0; p < kNumClasses; ++p)
      out << fmt::format("cm_{}_{},{}\n", label_name(t), label_name(p), e.confusion.counts[t][p]);
  if (!out.flush()) throw IoError("write failed: " + path.string());
}

std::string format_report(const Evaluation& e, const ReportMeta& meta, const std::string& title) {
  std::string s = fmt::format("{}\ncommand: {}\nconfig hash: {}\nseed: {}\nimages: {}\n\n", title, meta.command,
                              meta.config_hash, meta.seed, e.confusion.total());
  s += fmt::format("{:>10} {:>8} {:>8} {:>8}   accuracy\n", "truth", "GAN", "Graphics", "Real");
  const auto pc = e.confusion.per_class_accuracy();
  for (int t = 0; t < kNumClasses; ++t)
    s += fmt::format("{:>10} {:>8} {:>8} {:>8}   {:6.2f}%\n", label_name(t), e.confusion.counts[t][0],
                     e.confusion.counts[t][1], e.confusion.counts[t][2], 100 * pc[t]);
  s += fmt::format("\ntotal accuracy: {:.2f}%\n", 100 * e.confusion.accuracy());
  return s;
}

void write_predictions_csv(const std::vector<ImagePrediction>& preds, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot create " + path.string());
  out << "image_id,truth,predicted,p_gan,p_graphics,p_real\n";
  for (const auto& p : preds)
    out << fmt::format("{},{},{},{:.9g},{:.9g},{:.9g}\n", p.image_id, p.truth, p.predicted, p.probs[0], p.probs[1],
                       p.probs[2]);
  if (!out.flush()) throw IoError("write failed: " + path.string());
}

namespace {

// std::stod rejects subnormals, which softmax produces for confident rows.
double parse_prob(const std::string& s) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size() || !std::isfinite(v)) throw std::invalid_argument(s);
  return v;
}

}  // namespace

std::vector<ImagePrediction> read_predictions_csv(const std::filesystem::path& path) {
  const csv::Table t = csv::read(path);
  const std::size_t c_id = t.column("image_id"), c_truth = t.column("truth"), c_pred = t.column("predicted");
  // probabilities are optional (manual answers have none)
  const bool has_probs = std::find(t.header.begin(), t.header.end(), "p_real") != t.header.end();
  std::vector<ImagePrediction> out;
  for (const auto& row : t.rows) {
    ImagePrediction p;
    try {
      p.image_id = std::stoull(row[c_id]);
      p.truth = std::stoi(row[c_truth]);
      p.predicted = std::stoi(row[c_pred]);
      if (has_probs) {
        p.probs[0] = parse_prob(row[t.column("p_gan")]);
        p.probs[1] = parse_prob(row[t.column("p_graphics")]);
        p.probs[2] = parse_prob(row[t.column("p_real")]);
      }
    } catch (const std::exception&) {
      throw DataError(path.string() + ": malformed prediction row");
    }
    if (p.truth < 0 || p.truth > 2 || p.predicted < 0 || p.predicted > 2)
      throw DataError(path.string() + ": label out of range");
    out.push_back(p);
  }
  return out;
}

}  // namespace mcfuse::evalkit
