#include <algorithm>
#include <cmath>
#include <fstream>

#include <spdlog/fmt/fmt.h>

#include "mcfuse/error.hpp"
#include "mcfuse/evalkit/tsne.hpp"
#include "mcfuse/fusionhead.hpp"
#include "mcfuse/util/csv.hpp"

namespace mcfuse::evalkit {

void write_embedding_csv(const Embedding2D& e, const std::filesystem::path& path) {
  if (e.points.size() != e.labels.size()) throw ContractError("embedding has mismatched labels");
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot create " + path.string());
  out << "x,y,label\n";
  for (std::size_t i = 0; i < e.points.size(); ++i)
    out << fmt::format("{:.17g},{:.17g},{}\n", e.points[i].x, e.points[i].y, e.labels[i]);
  if (!out.flush()) throw IoError("write failed: " + path.string());
}

Embedding2D read_embedding_csv(const std::filesystem::path& path) {
  const csv::Table t = csv::read(path);
  const std::size_t cx = t.column("x"), cy = t.column("y"), cl = t.column("label");
  Embedding2D e;
  for (const auto& row : t.rows) {
    try {
      e.points.push_back({std::stod(row[cx]), std::stod(row[cy])});
      e.labels.push_back(std::stoi(row[cl]));
    } catch (const std::exception&) {
      throw DataError(path.string() + ": malformed embedding row");
    }
  }
  return e;
}

void write_embedding_svg(const Embedding2D& e, const std::filesystem::path& path, int size) {
  if (e.points.size() != e.labels.size()) throw ContractError("embedding has mismatched labels");
  if (size < 64) throw ContractError("svg size too small");
  double x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (!e.points.empty()) {
    x0 = x1 = e.points[0].x;
    y0 = y1 = e.points[0].y;
    for (const auto& p : e.points) {
      x0 = std::min(x0, p.x), x1 = std::max(x1, p.x);
      y0 = std::min(y0, p.y), y1 = std::max(y1, p.y);
    }
  }
  const double margin = 24, span = size - 2 * margin;
  const double scale = span / std::max({x1 - x0, y1 - y0, 1e-12});
  static constexpr const char* kColors[] = {"#d62728", "#1f77b4", "#2ca02c"};

  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot create " + path.string());
  out << fmt::format(R"(<svg xmlns="http://www.w3.org/2000/svg" width="{0}" height="{0}" viewBox="0 0 {0} {0}">)", size)
      << "\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (std::size_t i = 0; i < e.points.size(); ++i) {
    const double px = margin + (e.points[i].x - x0) * scale;
    const double py = size - margin - (e.points[i].y - y0) * scale;
    const int label = e.labels[i];
    const char* color = label >= 0 && label < kNumClasses ? kColors[label] : "#7f7f7f";
    switch (label) {
      case 1:
        out << fmt::format(R"(<rect x="{:.2f}" y="{:.2f}" width="6" height="6" fill="none" stroke="{}"/>)", px - 3,
                           py - 3, color);
        break;
      case 2:
        out << fmt::format(R"(<polygon points="{:.2f},{:.2f} {:.2f},{:.2f} {:.2f},{:.2f}" fill="none" stroke="{}"/>)",
                           px, py - 4, px - 3.5, py + 3, px + 3.5, py + 3, color);
        break;
      default:
        out << fmt::format(R"(<circle cx="{:.2f}" cy="{:.2f}" r="3" fill="none" stroke="{}"/>)", px, py, color);
    }
    out << "\n";
  }
  for (int c = 0; c < kNumClasses; ++c)
    out << fmt::format(R"(<text x="{}" y="{}" font-size="12" fill="{}">{}</text>)", margin, 14 + 14 * c, kColors[c],
                       label_name(c))
        << "\n";
  out << "</svg>\n";
  if (!out.flush()) throw IoError("write failed: " + path.string());
}

}  // namespace mcfuse::evalkit
