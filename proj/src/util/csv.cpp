#include "mcfuse/util/csv.hpp"

#include <boost/tokenizer.hpp>
#include <fstream>

#include "mcfuse/error.hpp"

namespace mcfuse::csv {

std::size_t Table::column(std::string_view name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return i;
  throw DataError("csv: missing column '" + std::string(name) + "'");
}

Table read(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  using Tokenizer = boost::tokenizer<boost::escaped_list_separator<char>>;
  const boost::escaped_list_separator<char> sep('\\', ',', '"');
  Table t;
  std::string line;
  bool first = true;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    try {
      Tokenizer tok(line, sep);
      fields.assign(tok.begin(), tok.end());
    } catch (const boost::escaped_list_error& e) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
    if (first) {
      t.header = std::move(fields);
      first = false;
      continue;
    }
    if (fields.size() != t.header.size())
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": expected " +
                      std::to_string(t.header.size()) + " fields, got " +
                      std::to_string(fields.size()));
    t.rows.push_back(std::move(fields));
  }
  if (first) throw DataError(path.string() + ": empty csv");
  return t;
}

std::string escape(std::string_view field) {
  if (field.find_first_of(",\"\n\\") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  out += '"';
  return out;
}

std::string join(const std::vector<std::string>& fields) {
  std::string out;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out += ',';
    out += escape(fields[i]);
  }
  return out;
}

}  // namespace mcfuse::csv
