#include <fstream>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include "mcfuse/psycho.hpp"

namespace mcfuse::psycho {

using json = nlohmann::json;

namespace {

constexpr const char* kNdjson = "application/x-ndjson";

int status_for(Reject r) {
  switch (r) {
    case Reject::unknown_session: return 404;
    case Reject::study_full:
    case Reject::duplicate:
    case Reject::empty_study: return 409;
    case Reject::wrong_image:
    case Reject::invalid_label:
    case Reject::box_out_of_bounds: return 422;
    case Reject::bad_request: return 400;
  }
  return 400;
}

void reply(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump() + "\n", kNdjson);
}

void reject(httplib::Response& res, Reject code, const std::string& message) {
  reply(res, status_for(code), {{"error", std::string(to_string(code))}, {"message", message}});
}

// Request bodies are one JSON object, optionally newline-terminated.
json parse_body(const std::string& body) {
  std::istringstream in(body);
  std::string line, first;
  while (std::getline(in, line))
    if (line.find_first_not_of(" \t\r") != std::string::npos) {
      if (!first.empty()) throw std::invalid_argument("expected a single record");
      first = line;
    }
  json j = json::parse(first);
  if (!j.is_object()) throw std::invalid_argument("expected an object");
  return j;
}

std::string content_type(const std::string& bytes) {
  if (bytes.size() >= 3 && static_cast<unsigned char>(bytes[0]) == 0xFF && static_cast<unsigned char>(bytes[1]) == 0xD8)
    return "image/jpeg";
  if (bytes.rfind("\x89PNG", 0) == 0) return "image/png";
  return "application/octet-stream";
}

std::string session_json_line(const Session& s) {
  return json({{"session_id", s.session_id},
               {"participant", s.participant},
               {"index", s.cursor},
               {"total", s.images.size()},
               {"created_ms", s.created_ms}})
      .dump();
}

}  // namespace

struct Service::Impl {
  std::map<std::string, Study*> studies;
  std::string token;
  httplib::Server server;
  std::thread thread;

  Study* find_session(const std::string& id) {
    for (auto& [name, s] : studies)
      if (s->session(id)) return s;
    return nullptr;
  }

  bool admin_ok(const httplib::Request& req, httplib::Response& res) {
    if (token.empty() || req.get_header_value("X-Admin-Token") != token) {
      reply(res, 401, {{"error", "unauthorized"}, {"message", "admin token required"}});
      return false;
    }
    return true;
  }

  Study* study_or_404(const std::string& id, httplib::Response& res) {
    const auto it = studies.find(id);
    if (it == studies.end()) {
      reply(res, 404, {{"error", "unknown_study"}, {"message", "no study " + id}});
      return nullptr;
    }
    return it->second;
  }

  void routes() {
    server.Post(R"(/studies/([^/]+)/sessions)", [this](const httplib::Request& req, httplib::Response& res) {
      Study* st = study_or_404(req.matches[1], res);
      if (!st) return;
      std::string participant;
      try {
        participant = parse_body(req.body).at("participant").get<std::string>();
      } catch (const std::exception& e) {
        return reject(res, Reject::bad_request, e.what());
      }
      try {
        const Session s = st->create_session(participant);
        res.status = 201;
        res.set_content(session_json_line(s) + "\n", kNdjson);
      } catch (const StudyError& e) {
        reject(res, e.code(), e.what());
      }
    });

    server.Get(R"(/sessions/([^/]+)/next)", [this](const httplib::Request& req, httplib::Response& res) {
      const std::string id = req.matches[1];
      Study* st = find_session(id);
      if (!st) return reject(res, Reject::unknown_session, "unknown session " + id);
      const NextImage n = st->next(id);
      if (n.done) return reply(res, 200, {{"done", true}, {"index", n.index}, {"total", n.total}});
      reply(res, 200,
            {{"image_id", n.image_id},
             {"image_url", "/images/" + std::to_string(n.image_id)},
             {"index", n.index},
             {"total", n.total}});
    });

    server.Get(R"(/images/(\d+))", [this](const httplib::Request& req, httplib::Response& res) {
      std::uint64_t id = 0;
      try {
        id = std::stoull(req.matches[1]);
      } catch (const std::exception&) {
        return reply(res, 404, {{"error", "unknown_image"}});
      }
      for (auto& [name, st] : studies) {
        const PoolImage* img = st->image(id);
        if (!img) continue;
        std::ifstream in(img->path, std::ios::binary);
        if (!in) {
          spdlog::error("image {} unreadable at {}", id, img->path.string());
          return reply(res, 500, {{"error", "io"}});
        }
        std::ostringstream ss;
        ss << in.rdbuf();
        std::string bytes = ss.str();
        const std::string type = content_type(bytes);
        res.status = 200;
        res.set_content(std::move(bytes), type);
        return;
      }
      reply(res, 404, {{"error", "unknown_image"}});
    });

    server.Post(R"(/sessions/([^/]+)/annotations)", [this](const httplib::Request& req, httplib::Response& res) {
      const std::string id = req.matches[1];
      Study* st = find_session(id);
      if (!st) return reject(res, Reject::unknown_session, "unknown session " + id);
      Submission sub;
      try {
        const json j = parse_body(req.body);
        sub.image_id = j.at("image_id").get<std::uint64_t>();
        const auto& lj = j.at("label");
        const auto label = parse_label(lj.is_string() ? lj.get<std::string>() : std::string());
        sub.label = label ? *label : -1;
        if (j.contains("boxes"))
          for (const auto& b : j.at("boxes"))
            sub.boxes.push_back({b.at("x").get<int>(), b.at("y").get<int>(), b.at("w").get<int>(),
                                 b.at("h").get<int>()});
        sub.elapsed_ms = j.value("elapsed_ms", std::int64_t{0});
      } catch (const std::exception& e) {
        return reject(res, Reject::bad_request, e.what());
      }
      try {
        const Annotation a = st->submit(id, sub);
        const NextImage n = st->next(id);
        reply(res, 200, {{"ok", true}, {"image_id", a.image_id}, {"index", n.index}, {"total", n.total}});
      } catch (const StudyError& e) {
        reject(res, e.code(), e.what());
      }
    });

    server.Get(R"(/studies/([^/]+)/export)", [this](const httplib::Request& req, httplib::Response& res) {
      if (!admin_ok(req, res)) return;
      Study* st = study_or_404(req.matches[1], res);
      if (!st) return;
      try {
        res.status = 200;
        res.set_content(st->export_ndjson(), kNdjson);
      } catch (const StudyError& e) {
        reject(res, e.code(), e.what());
      }
    });

    server.Get(R"(/studies/([^/]+)/confusion)", [this](const httplib::Request& req, httplib::Response& res) {
      if (!admin_ok(req, res)) return;
      Study* st = study_or_404(req.matches[1], res);
      if (!st) return;
      try {
        const auto cm = st->manual_confusion();
        reply(res, 200, {{"rows", "truth"}, {"counts", cm.counts}, {"accuracy", cm.accuracy()}});
      } catch (const StudyError& e) {
        reject(res, e.code(), e.what());
      }
    });

    server.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
      std::string what = "internal error";
      try {
        std::rethrow_exception(ep);
      } catch (const std::exception& e) {
        what = e.what();
      } catch (...) {
      }
      spdlog::error("request failed: {}", what);
      reply(res, 500, {{"error", "internal"}, {"message", what}});
    });
  }
};

Service::Service(std::map<std::string, Study*> studies, std::string admin_token) : impl_(std::make_unique<Impl>()) {
  impl_->studies = std::move(studies);
  impl_->token = std::move(admin_token);
  impl_->routes();
}

Service::~Service() { stop(); }

int Service::start(const std::string& host, int port) {
  if (impl_->thread.joinable()) throw ContractError("service already running");
  if (port == 0) {
    port_ = impl_->server.bind_to_any_port(host);
  } else {
    port_ = impl_->server.bind_to_port(host, port) ? port : -1;
  }
  if (port_ < 0) throw IoError("cannot bind " + host + ":" + std::to_string(port));
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return port_;
}

void Service::run(const std::string& host, int port) {
  if (!impl_->server.bind_to_port(host, port)) throw IoError("cannot bind " + host + ":" + std::to_string(port));
  port_ = port;
  impl_->server.listen_after_bind();
}

void Service::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace mcfuse::psycho
