#pragma once

// Human-study store and HTTP service.
//
// A study directory holds:
//   pool.csv           image_id,path,label[,width,height]  (read-only input)
//   sessions.jsonl     one line per created session
//   annotations.jsonl  one line per accepted annotation
// Both .jsonl files are append-only and fsynced per record; all state is
// rebuilt from them on open.

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "mcfuse/error.hpp"
#include "mcfuse/evalkit/metrics.hpp"
#include "mcfuse/explain.hpp"

namespace mcfuse::psycho {

struct PoolImage {
  std::uint64_t image_id = 0;
  std::filesystem::path path;  // resolved against the study directory
  int label = 0;
  int width = 0, height = 0;
};

struct Session {
  std::string session_id;
  std::string participant;
  std::vector<std::uint64_t> images;
  std::size_t cursor = 0;  // index of the first unanswered image
  std::int64_t created_ms = 0;

  bool done() const { return cursor >= images.size(); }
};

struct Annotation {
  std::string session_id;
  std::string participant;
  std::uint64_t image_id = 0;
  int label = 0;
  std::vector<explain::Box> boxes;
  std::int64_t elapsed_ms = 0;
  std::int64_t ts = 0;  // unix milliseconds at acceptance

  friend bool operator==(const Annotation&, const Annotation&) = default;
};

/// What a participant submits.
struct Submission {
  std::uint64_t image_id = 0;
  int label = -1;
  std::vector<explain::Box> boxes;
  std::int64_t elapsed_ms = 0;
};

enum class Reject {
  study_full,
  unknown_session,
  wrong_image,
  duplicate,
  invalid_label,
  box_out_of_bounds,
  bad_request,
  empty_study,
};
std::string_view to_string(Reject r);

class StudyError : public Error {
 public:
  StudyError(Reject code, const std::string& what) : Error(what), code_(code) {}
  Reject code() const { return code_; }

 private:
  Reject code_;
};

struct StudyConfig {
  int images_per_session = 30;
  std::uint64_t seed = 0;
};

struct NextImage {
  bool done = false;
  std::uint64_t image_id = 0;
  std::size_t index = 0;  // 0-based position in the session
  std::size_t total = 0;
};

/// Thread-safe: mutations are serialized, reads run concurrently.
class Study {
 public:
  /// Loads pool.csv and replays the logs. A torn final line (crash during an
  /// append) is truncated; any other inconsistency is a DataError.
  static std::unique_ptr<Study> open(const std::filesystem::path& dir, const StudyConfig& cfg);

  /// Draws images_per_session images from the unassigned pool (sorted by id,
  /// shuffled with a stream seeded by the session index). StudyError
  /// study_full when fewer remain.
  Session create_session(const std::string& participant);

  /// Validates and durably appends; the cursor then moves to the first
  /// unanswered image. Answered images give `duplicate`.
  Annotation submit(const std::string& session_id, const Submission& s);

  std::optional<Session> session(const std::string& session_id) const;
  std::vector<Session> sessions() const;
  NextImage next(const std::string& session_id) const;
  std::vector<Annotation> annotations() const;
  const PoolImage* image(std::uint64_t image_id) const;
  std::size_t pool_size() const { return pool_.size(); }
  std::size_t unassigned() const;
  const std::filesystem::path& dir() const { return dir_; }

  /// Human answers against pool truth. StudyError empty_study without
  /// annotations.
  evalkit::ConfusionMatrix manual_confusion() const;
  /// All annotations, one JSON object per line, store order.
  std::string export_ndjson() const;

 private:
  Study() = default;
  void replay_sessions();
  void replay_annotations();

  std::filesystem::path dir_;
  StudyConfig cfg_;
  std::vector<PoolImage> pool_;
  std::map<std::uint64_t, std::size_t> pool_index_;
  std::map<std::uint64_t, std::string> assigned_;  // image -> session
  std::vector<Session> sessions_;
  std::map<std::string, std::size_t> session_index_;
  std::vector<Annotation> annotations_;
  std::map<std::pair<std::string, std::uint64_t>, std::size_t> answered_;
  mutable std::shared_mutex mu_;
};

/// Parses an NDJSON export back into records.
std::vector<Annotation> parse_export(const std::string& ndjson);

/// image_id,truth,predicted for the human answers, for use with the
/// significance test against a model predictions file.
void write_manual_predictions(const Study& s, const std::filesystem::path& path);

/// image_id,truth,manual,model on images present in both; returns row count.
std::size_t write_joined(const Study& s, const std::vector<evalkit::ImagePrediction>& model,
                         const std::filesystem::path& path);

/// HTTP front end over one or more studies.
///   POST /studies/{id}/sessions        {participant}
///   GET  /sessions/{id}/next
///   GET  /images/{id}
///   POST /sessions/{id}/annotations    {image_id,label,boxes,elapsed_ms}
///   GET  /studies/{id}/export          admin, NDJSON
///   GET  /studies/{id}/confusion       admin
/// Bodies are single JSON lines. Admin endpoints need X-Admin-Token equal to
/// the configured token; an empty token disables them.
class Service {
 public:
  Service(std::map<std::string, Study*> studies, std::string admin_token);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  /// Binds (port 0 picks a free one) and serves on a background thread.
  int start(const std::string& host = "127.0.0.1", int port = 0);
  /// Serves on the calling thread until stop().
  void run(const std::string& host, int port);
  void stop();
  int port() const { return port_; }

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  int port_ = 0;
};

}  // namespace mcfuse::psycho
