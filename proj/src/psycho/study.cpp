#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <cstring>
#include <fstream>
#include <mutex>
#include <sstream>

#include <json.hpp>
#include <spdlog/spdlog.h>

#include "mcfuse/imageio.hpp"
#include "mcfuse/psycho.hpp"
#include "mcfuse/util/csv.hpp"
#include "mcfuse/util/rng.hpp"

namespace mcfuse::psycho {

using json = nlohmann::json;

namespace {

constexpr const char* kSessionsFile = "sessions.jsonl";
constexpr const char* kAnnotationsFile = "annotations.jsonl";

std::int64_t now_ms() {
  using namespace std::chrono;
  return duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count();
}

// One complete line per call: O_APPEND write, fsync, close.
void durable_append(const std::filesystem::path& path, const std::string& line) {
  const int fd = ::open(path.c_str(), O_WRONLY | O_APPEND | O_CREAT | O_CLOEXEC, 0644);
  if (fd < 0) throw IoError(fmt::format("cannot open {}: {}", path.string(), std::strerror(errno)));
  const std::string data = line + "\n";
  std::size_t done = 0;
  while (done < data.size()) {
    const ssize_t n = ::write(fd, data.data() + done, data.size() - done);
    if (n < 0) {
      if (errno == EINTR) continue;
      const int err = errno;
      ::close(fd);
      throw IoError(fmt::format("append to {} failed: {}", path.string(), std::strerror(err)));
    }
    done += static_cast<std::size_t>(n);
  }
  const bool synced = ::fsync(fd) == 0;
  ::close(fd);
  if (!synced) throw IoError("fsync failed on " + path.string());
}

// Complete lines of an append-only log; a partial last line is cut off.
std::vector<std::string> read_log(const std::filesystem::path& path) {
  std::vector<std::string> lines;
  if (!std::filesystem::exists(path)) return lines;
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string data = ss.str();
  const std::size_t end = data.rfind('\n');
  const std::size_t keep = end == std::string::npos ? 0 : end + 1;
  if (keep != data.size()) {
    spdlog::warn("{}: dropping {} byte(s) of a partial record", path.string(), data.size() - keep);
    std::filesystem::resize_file(path, keep);
  }
  std::size_t pos = 0;
  while (pos < keep) {
    const std::size_t nl = data.find('\n', pos);
    if (nl > pos) lines.push_back(data.substr(pos, nl - pos));
    pos = nl + 1;
  }
  return lines;
}

json box_json(const explain::Box& b) { return {{"x", b.x}, {"y", b.y}, {"w", b.w}, {"h", b.h}}; }

std::vector<explain::Box> parse_boxes(const json& j) {
  std::vector<explain::Box> out;
  if (!j.is_array()) throw std::invalid_argument("boxes must be an array");
  for (const auto& b : j)
    out.push_back({b.at("x").get<int>(), b.at("y").get<int>(), b.at("w").get<int>(), b.at("h").get<int>()});
  return out;
}

json annotation_json(const Annotation& a) {
  json boxes = json::array();
  for (const auto& b : a.boxes) boxes.push_back(box_json(b));
  return {{"session_id", a.session_id}, {"participant", a.participant}, {"image_id", a.image_id},
          {"label", std::string(label_name(a.label))}, {"boxes", boxes}, {"elapsed_ms", a.elapsed_ms},
          {"ts", a.ts}};
}

Annotation annotation_from_json(const json& j) {
  Annotation a;
  a.session_id = j.at("session_id").get<std::string>();
  a.participant = j.at("participant").get<std::string>();
  a.image_id = j.at("image_id").get<std::uint64_t>();
  const auto label = parse_label(j.at("label").get<std::string>());
  if (!label) throw std::invalid_argument("bad label");
  a.label = *label;
  a.boxes = parse_boxes(j.at("boxes"));
  a.elapsed_ms = j.at("elapsed_ms").get<std::int64_t>();
  a.ts = j.at("ts").get<std::int64_t>();
  return a;
}

}  // namespace

std::string_view to_string(Reject r) {
  switch (r) {
    case Reject::study_full: return "study_full";
    case Reject::unknown_session: return "unknown_session";
    case Reject::wrong_image: return "wrong_image";
    case Reject::duplicate: return "duplicate";
    case Reject::invalid_label: return "invalid_label";
    case Reject::box_out_of_bounds: return "box_out_of_bounds";
    case Reject::bad_request: return "bad_request";
    case Reject::empty_study: return "empty_study";
  }
  return "?";
}

std::unique_ptr<Study> Study::open(const std::filesystem::path& dir, const StudyConfig& cfg) {
  if (cfg.images_per_session < 1) throw ContractError("images_per_session must be >= 1");
  std::unique_ptr<Study> s(new Study());
  s->dir_ = dir;
  s->cfg_ = cfg;

  const std::filesystem::path pool_file = dir / "pool.csv";
  const csv::Table t = csv::read(pool_file);
  const std::size_t c_id = t.column("image_id"), c_path = t.column("path"), c_label = t.column("label");
  const bool has_size = std::find(t.header.begin(), t.header.end(), "width") != t.header.end();
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& row = t.rows[i];
    PoolImage img;
    try {
      img.image_id = std::stoull(row[c_id]);
      if (has_size) {
        img.width = std::stoi(row[t.column("width")]);
        img.height = std::stoi(row[t.column("height")]);
      }
    } catch (const std::exception&) {
      throw DataError(fmt::format("{} row {}: malformed number", pool_file.string(), i + 2));
    }
    const auto label = parse_label(row[c_label]);
    if (!label) throw DataError(fmt::format("{} row {}: bad label '{}'", pool_file.string(), i + 2, row[c_label]));
    img.label = *label;
    const std::filesystem::path p(row[c_path]);
    img.path = p.is_absolute() ? p : dir / p;
    if (!has_size) {
      const auto info = imageio::probe_image(img.path);
      img.width = info.width;
      img.height = info.height;
    }
    if (img.width < 1 || img.height < 1) throw DataError(fmt::format("{}: image {} has no size", pool_file.string(), img.image_id));
    if (!s->pool_index_.emplace(img.image_id, s->pool_.size()).second)
      throw DataError(fmt::format("{}: duplicate image_id {}", pool_file.string(), img.image_id));
    s->pool_.push_back(std::move(img));
  }
  s->replay_sessions();
  s->replay_annotations();
  return s;
}

void Study::replay_sessions() {
  const auto path = dir_ / kSessionsFile;
  for (const auto& line : read_log(path)) {
    Session ses;
    try {
      const json j = json::parse(line);
      ses.session_id = j.at("session_id").get<std::string>();
      ses.participant = j.at("participant").get<std::string>();
      ses.images = j.at("images").get<std::vector<std::uint64_t>>();
      ses.created_ms = j.at("created_ms").get<std::int64_t>();
    } catch (const std::exception& e) {
      throw DataError(fmt::format("{}: malformed session record: {}", path.string(), e.what()));
    }
    if (session_index_.count(ses.session_id)) throw DataError(path.string() + ": duplicate session " + ses.session_id);
    for (auto id : ses.images) {
      if (!pool_index_.count(id)) throw DataError(fmt::format("{}: image {} not in pool", path.string(), id));
      if (!assigned_.emplace(id, ses.session_id).second)
        throw DataError(fmt::format("{}: image {} assigned twice", path.string(), id));
    }
    session_index_[ses.session_id] = sessions_.size();
    sessions_.push_back(std::move(ses));
  }
}

void Study::replay_annotations() {
  const auto path = dir_ / kAnnotationsFile;
  for (const auto& line : read_log(path)) {
    Annotation a;
    try {
      a = annotation_from_json(json::parse(line));
    } catch (const std::exception& e) {
      throw DataError(fmt::format("{}: malformed annotation record: {}", path.string(), e.what()));
    }
    const auto it = session_index_.find(a.session_id);
    const auto as = assigned_.find(a.image_id);
    if (it == session_index_.end() || as == assigned_.end() || as->second != a.session_id)
      throw DataError(fmt::format("{}: annotation for image {} does not match a session", path.string(), a.image_id));
    if (!answered_.emplace(std::pair(a.session_id, a.image_id), annotations_.size()).second)
      throw DataError(fmt::format("{}: image {} annotated twice", path.string(), a.image_id));
    annotations_.push_back(std::move(a));
  }
  for (auto& ses : sessions_) {
    ses.cursor = 0;
    while (ses.cursor < ses.images.size() && answered_.count({ses.session_id, ses.images[ses.cursor]})) ++ses.cursor;
  }
}

Session Study::create_session(const std::string& participant) {
  if (participant.empty()) throw StudyError(Reject::bad_request, "participant id is empty");
  std::unique_lock lock(mu_);
  std::vector<std::uint64_t> free;
  for (const auto& img : pool_)
    if (!assigned_.count(img.image_id)) free.push_back(img.image_id);
  const auto n = static_cast<std::size_t>(cfg_.images_per_session);
  if (free.size() < n)
    throw StudyError(Reject::study_full,
                     fmt::format("study full: {} unassigned image(s), {} needed", free.size(), n));
  std::sort(free.begin(), free.end());
  const std::uint64_t index = sessions_.size();
  Rng rng(derive_seed(cfg_.seed, index));
  // partial Fisher-Yates: the first n positions are the sample, in draw order
  for (std::size_t i = 0; i < n; ++i) std::swap(free[i], free[i + rng.below(free.size() - i)]);

  Session ses;
  ses.session_id = fmt::format("s{:04d}-{:08x}", index, derive_seed(cfg_.seed ^ 0x5e55'1070ULL, index) & 0xffffffffULL);
  ses.participant = participant;
  ses.images.assign(free.begin(), free.begin() + static_cast<std::ptrdiff_t>(n));
  ses.created_ms = now_ms();
  const json j = {{"session_id", ses.session_id}, {"participant", ses.participant}, {"images", ses.images},
                  {"created_ms", ses.created_ms}};
  durable_append(dir_ / kSessionsFile, j.dump());
  for (auto id : ses.images) assigned_.emplace(id, ses.session_id);
  session_index_[ses.session_id] = sessions_.size();
  sessions_.push_back(ses);
  return ses;
}

Annotation Study::submit(const std::string& session_id, const Submission& s) {
  std::unique_lock lock(mu_);
  const auto it = session_index_.find(session_id);
  if (it == session_index_.end()) throw StudyError(Reject::unknown_session, "unknown session " + session_id);
  Session& ses = sessions_[it->second];
  if (std::find(ses.images.begin(), ses.images.end(), s.image_id) == ses.images.end())
    throw StudyError(Reject::wrong_image, fmt::format("image {} is not assigned to {}", s.image_id, session_id));
  if (answered_.count({session_id, s.image_id}))
    throw StudyError(Reject::duplicate, fmt::format("image {} already answered in {}", s.image_id, session_id));
  if (s.label < 0 || s.label >= kNumClasses) throw StudyError(Reject::invalid_label, "label must be GAN, Graphics or Real");
  if (s.elapsed_ms < 0) throw StudyError(Reject::bad_request, "elapsed_ms is negative");
  const PoolImage& img = pool_[pool_index_.at(s.image_id)];
  for (const auto& b : s.boxes)
    if (b.w < 1 || b.h < 1 || b.x < 0 || b.y < 0 || b.x + b.w > img.width || b.y + b.h > img.height)
      throw StudyError(Reject::box_out_of_bounds, fmt::format("box ({},{},{},{}) outside {}x{} image", b.x, b.y,
                                                             b.w, b.h, img.width, img.height));
  Annotation a{session_id, ses.participant, s.image_id, s.label, s.boxes, s.elapsed_ms, now_ms()};
  durable_append(dir_ / kAnnotationsFile, annotation_json(a).dump());
  answered_.emplace(std::pair(session_id, s.image_id), annotations_.size());
  annotations_.push_back(a);
  while (ses.cursor < ses.images.size() && answered_.count({session_id, ses.images[ses.cursor]})) ++ses.cursor;
  return a;
}

std::optional<Session> Study::session(const std::string& session_id) const {
  std::shared_lock lock(mu_);
  const auto it = session_index_.find(session_id);
  if (it == session_index_.end()) return std::nullopt;
  return sessions_[it->second];
}

std::vector<Session> Study::sessions() const {
  std::shared_lock lock(mu_);
  return sessions_;
}

NextImage Study::next(const std::string& session_id) const {
  std::shared_lock lock(mu_);
  const auto it = session_index_.find(session_id);
  if (it == session_index_.end()) throw StudyError(Reject::unknown_session, "unknown session " + session_id);
  const Session& ses = sessions_[it->second];
  NextImage n;
  n.total = ses.images.size();
  n.index = ses.cursor;
  n.done = ses.done();
  if (!n.done) n.image_id = ses.images[ses.cursor];
  return n;
}

std::vector<Annotation> Study::annotations() const {
  std::shared_lock lock(mu_);
  return annotations_;
}

const PoolImage* Study::image(std::uint64_t image_id) const {
  const auto it = pool_index_.find(image_id);
  return it == pool_index_.end() ? nullptr : &pool_[it->second];
}

std::size_t Study::unassigned() const {
  std::shared_lock lock(mu_);
  return pool_.size() - assigned_.size();
}

evalkit::ConfusionMatrix Study::manual_confusion() const {
  std::shared_lock lock(mu_);
  if (annotations_.empty()) throw StudyError(Reject::empty_study, "study has no annotations");
  evalkit::ConfusionMatrix cm;
  for (const auto& a : annotations_) cm.add(pool_[pool_index_.at(a.image_id)].label, a.label);
  return cm;
}

std::string Study::export_ndjson() const {
  std::shared_lock lock(mu_);
  if (annotations_.empty()) throw StudyError(Reject::empty_study, "study has no annotations");
  std::string out;
  for (const auto& a : annotations_) out += annotation_json(a).dump() + "\n";
  return out;
}

std::vector<Annotation> parse_export(const std::string& ndjson) {
  std::vector<Annotation> out;
  std::istringstream in(ndjson);
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    if (line.empty()) continue;
    try {
      out.push_back(annotation_from_json(json::parse(line)));
    } catch (const std::exception& e) {
      throw DataError(fmt::format("export line {}: {}", n, e.what()));
    }
  }
  return out;
}

void write_manual_predictions(const Study& s, const std::filesystem::path& path) {
  const auto ann = s.annotations();
  if (ann.empty()) throw StudyError(Reject::empty_study, "study has no annotations");
  std::vector<evalkit::ImagePrediction> preds;
  for (const auto& a : ann) {
    evalkit::ImagePrediction p;
    p.image_id = a.image_id;
    p.truth = s.image(a.image_id)->label;
    p.predicted = a.label;
    p.probs[a.label] = 1.0;
    preds.push_back(p);
  }
  evalkit::write_predictions_csv(preds, path);
}

std::size_t write_joined(const Study& s, const std::vector<evalkit::ImagePrediction>& model,
                         const std::filesystem::path& path) {
  std::map<std::uint64_t, int> by_id;
  for (const auto& p : model) by_id[p.image_id] = p.predicted;
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot create " + path.string());
  out << "image_id,truth,manual,model\n";
  std::size_t rows = 0;
  for (const auto& a : s.annotations()) {
    const auto it = by_id.find(a.image_id);
    if (it == by_id.end()) continue;
    out << a.image_id << ',' << s.image(a.image_id)->label << ',' << a.label << ',' << it->second << '\n';
    ++rows;
  }
  if (!out.flush()) throw IoError("write failed: " + path.string());
  return rows;
}

}  // namespace mcfuse::psycho
