#pragma once

// HTTP service hosting live conversations over one compiled program.

#include <httplib.h>

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <shared_mutex>
#include <string>
#include <vector>

#include "codial/backend.hpp"
#include "codial/chief.hpp"
#include "codial/program.hpp"
#include "codial/runtime.hpp"

namespace codial::service {

inline std::string iso_now() {
  auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Random (version 4) UUID.
inline std::string new_uuid() {
  static std::mutex mu;
  static std::mt19937_64 rng{std::random_device{}()};
  std::lock_guard lock(mu);
  std::uint64_t hi = rng(), lo = rng();
  hi = (hi & 0xffffffffffff0fffULL) | 0x0000000000004000ULL;
  lo = (lo & 0x3fffffffffffffffULL) | 0x8000000000000000ULL;
  char buf[37];
  std::snprintf(buf, sizeof buf, "%08x-%04x-%04x-%04x-%012llx", static_cast<unsigned>(hi >> 32),
                static_cast<unsigned>((hi >> 16) & 0xffff), static_cast<unsigned>(hi & 0xffff),
                static_cast<unsigned>(lo >> 48), static_cast<unsigned long long>(lo & 0xffffffffffffULL));
  return buf;
}

struct ServiceOptions {
  std::string cors_origin;     // empty: no CORS headers
  std::string transcript_dir;  // empty: transcripts off
  bool replay = false;         // rebuild sessions from transcript_dir on startup
  std::string context_preamble;
  runtime::RuntimeOptions runtime;
};

struct Session {
  std::string id;
  std::string created;
  std::string updated;
  std::string transcript;  // path, empty when transcripts are off
  runtime::ConversationState state;

  std::mutex turn;         // held for the whole turn; try_lock failure is a 409
  mutable std::mutex data; // guards state, updated and events
  std::condition_variable changed;
  std::vector<json> events;  // one TurnResult per completed turn
};

struct Reply {
  int status = 200;
  json body;
};

class Service {
 public:
  Service(ir::GuardrailProgram program, std::optional<chief::ChiefGraph> graph, backend::Backend& backend,
          runtime::FunctionRegistry registry = runtime::FunctionRegistry::with_stubs(), ServiceOptions options = {})
      : program_(std::move(program)), graph_(std::move(graph)), backend_(backend), registry_(std::move(registry)),
        options_(std::move(options)), agent_(program_, backend_, registry_, options_.runtime) {
    if (!options_.transcript_dir.empty()) {
      std::filesystem::create_directories(options_.transcript_dir);
      if (options_.replay) replay_transcripts();
    }
  }

  ~Service() { stop(); }

  Reply create_session() {
    auto s = std::make_shared<Session>();
    s->id = new_uuid();
    s->created = s->updated = iso_now();
    s->state = runtime::initial_state(program_, options_.context_preamble);
    if (!options_.transcript_dir.empty()) {
      s->transcript = options_.transcript_dir + "/" + s->id + ".jsonl";
      append(s->transcript, {{"type", "session"}, {"id", s->id}, {"created", s->created}});
    }
    {
      std::unique_lock lock(sessions_mu_);
      sessions_[s->id] = s;
    }
    return {201, {{"session_id", s->id}}};
  }

  Reply post_message(const std::string& id, const std::string& text) {
    auto s = find(id);
    if (!s) return {404, {{"error", "UnknownSession"}, {"message", "no session " + id}}};
    if (util::trim(text).empty()) return {400, {{"error", "InvalidArgument"}, {"message", "text must be a non-empty string"}}};
    std::unique_lock turn(s->turn, std::try_to_lock);
    if (!turn.owns_lock()) return {409, {{"error", "TurnInProgress"}, {"message", "a turn is already running for this session"}}};

    runtime::ConversationState before;
    {
      std::lock_guard lock(s->data);
      before = s->state;
    }
    try {
      auto [result, after] = agent_.run_turn(before, text);
      json rj = runtime::to_json(result);
      if (!s->transcript.empty()) append(s->transcript, {{"type", "turn"}, {"text", text}, {"result", rj}});
      {
        std::lock_guard lock(s->data);
        s->state = std::move(after);
        s->updated = iso_now();
        s->events.push_back(rj);
      }
      s->changed.notify_all();
      return {200, rj};
    } catch (const runtime::TurnError& e) {
      bool upstream = std::string(e.kind()) == "BackendError" || std::string(e.kind()) == "ScriptExhausted";
      return {upstream ? 502 : 500,
              {{"error", e.kind()}, {"message", e.what()}, {"status", e.status()}, {"trace", runtime::to_json(e.trace())}}};
    }
  }

  Reply state(const std::string& id) const {
    auto s = find(id);
    if (!s) return {404, {{"error", "UnknownSession"}, {"message", "no session " + id}}};
    std::lock_guard lock(s->data);
    json j = runtime::to_json(s->state);
    j["session_id"] = s->id;
    j["created"] = s->created;
    j["updated"] = s->updated;
    j["turns"] = s->events.size();
    return {200, j};
  }

  json program_json() const {
    return {{"ir", ir::to_json(program_)}, {"graph", graph_ ? chief::to_json(*graph_) : json(nullptr)}};
  }

  std::size_t session_count() const {
    std::shared_lock lock(sessions_mu_);
    return sessions_.size();
  }

  std::shared_ptr<Session> find(const std::string& id) const {
    std::shared_lock lock(sessions_mu_);
    auto it = sessions_.find(id);
    return it == sessions_.end() ? nullptr : it->second;
  }

  // ---- HTTP

  httplib::Server& server() {
    if (!routes_) install_routes();
    return http_;
  }

  bool listen(const std::string& host, int port) { return server().listen(host, port); }

  int bind_any(const std::string& host = "127.0.0.1") { return server().bind_to_any_port(host); }
  bool listen_after_bind() { return server().listen_after_bind(); }

  void stop() {
    stopping_ = true;
    {
      std::shared_lock lock(sessions_mu_);
      for (auto& [id, s] : sessions_) s->changed.notify_all();
    }
    if (http_.is_running()) http_.stop();
  }

 private:
  static void append(const std::string& path, const json& line) {
    std::ofstream out(path, std::ios::app);
    out << line.dump() << '\n';
  }

  void replay_transcripts() {
    for (const auto& entry : std::filesystem::directory_iterator(options_.transcript_dir)) {
      if (entry.path().extension() != ".jsonl") continue;
      auto s = std::make_shared<Session>();
      s->transcript = entry.path().string();
      s->state = runtime::initial_state(program_, options_.context_preamble);
      std::ifstream in(entry.path());
      std::string line;
      while (std::getline(in, line)) {
        if (util::trim(line).empty()) continue;
        auto j = json::parse(line);
        if (j.value("type", "") == "session") {
          s->id = j.at("id").get<std::string>();
          s->created = s->updated = j.value("created", "");
        } else if (j.value("type", "") == "turn") {
          auto r = runtime::turn_result_from_json(j.at("result"));
          runtime::apply_turn(s->state, j.at("text").get<std::string>(), r);
          s->events.push_back(j.at("result"));
        }
      }
      if (s->id.empty()) s->id = entry.path().stem().string();
      sessions_[s->id] = s;
    }
  }

  static void send(httplib::Response& res, const Reply& r) {
    res.status = r.status;
    res.set_content(r.body.dump(), "application/json");
  }

  void install_routes() {
    routes_ = true;
    if (!options_.cors_origin.empty()) {
      http_.set_post_routing_handler([this](const httplib::Request&, httplib::Response& res) {
        res.set_header("Access-Control-Allow-Origin", options_.cors_origin);
        res.set_header("Vary", "Origin");
      });
      http_.Options(".*", [](const httplib::Request&, httplib::Response& res) {
        res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
        res.set_header("Access-Control-Allow-Headers", "Content-Type");
        res.status = 204;
      });
    }
    http_.Get("/health", [this](const httplib::Request&, httplib::Response& res) {
      send(res, {200, {{"status", "ok"}, {"sessions", session_count()}}});
    });
    http_.Get("/program", [this](const httplib::Request&, httplib::Response& res) { send(res, {200, program_json()}); });
    http_.Post("/conversations", [this](const httplib::Request&, httplib::Response& res) { send(res, create_session()); });
    http_.Post(R"(/conversations/([^/]+)/messages)", [this](const httplib::Request& req, httplib::Response& res) {
      json body = json::parse(req.body, nullptr, false);
      if (body.is_discarded() || !body.is_object() || !body.contains("text") || !body["text"].is_string())
        return send(res, {400, {{"error", "InvalidArgument"}, {"message", "expected a JSON object with a text field"}}});
      send(res, post_message(req.matches[1], body["text"].get<std::string>()));
    });
    http_.Get(R"(/conversations/([^/]+)/state)",
              [this](const httplib::Request& req, httplib::Response& res) { send(res, state(req.matches[1])); });
    http_.Get(R"(/conversations/([^/]+)/events)", [this](const httplib::Request& req, httplib::Response& res) {
      auto s = find(req.matches[1]);
      if (!s) return send(res, {404, {{"error", "UnknownSession"}, {"message", "no session " + std::string(req.matches[1])}}});
      // ?from=N replays completed turns from index N; the default streams only new ones.
      std::size_t next;
      {
        std::lock_guard lock(s->data);
        next = s->events.size();
      }
      if (req.has_param("from")) next = std::stoul(req.get_param_value("from"));
      auto cursor = std::make_shared<std::size_t>(next);
      res.set_header("Cache-Control", "no-cache");
      res.set_chunked_content_provider("text/event-stream", [this, s, cursor](std::size_t, httplib::DataSink& sink) {
        std::vector<json> batch;
        {
          std::unique_lock lock(s->data);
          s->changed.wait_for(lock, std::chrono::milliseconds(500),
                              [&] { return stopping_.load() || s->events.size() > *cursor; });
          for (; *cursor < s->events.size(); ++*cursor) batch.push_back(s->events[*cursor]);
        }
        if (stopping_) return false;
        std::string chunk;
        if (batch.empty()) chunk = ": keep-alive\n\n";
        for (const auto& e : batch) chunk += "event: turn\ndata: " + e.dump() + "\n\n";
        return sink.write(chunk.data(), chunk.size());
      });
    });
  }

  ir::GuardrailProgram program_;
  std::optional<chief::ChiefGraph> graph_;
  backend::Backend& backend_;
  runtime::FunctionRegistry registry_;
  ServiceOptions options_;
  runtime::Agent agent_;

  mutable std::shared_mutex sessions_mu_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;

  httplib::Server http_;
  bool routes_ = false;
  std::atomic<bool> stopping_{false};
};

}  // namespace codial::service
