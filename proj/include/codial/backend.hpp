#pragma once

// Language-model backends. Every model interaction goes through
// Backend::complete with a BackendRequest whose `purpose` selects how the
// reply is interpreted by the caller.

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>

#include "codial/program.hpp"
#include "codial/util.hpp"

namespace codial::backend {

enum class Purpose { value_from_instruction, boolean_nld, intent, fallback_choice, codegen, prompt_rewrite };

inline const char* to_string(Purpose p) {
  switch (p) {
    case Purpose::value_from_instruction: return "value_from_instruction";
    case Purpose::boolean_nld: return "boolean_nld";
    case Purpose::intent: return "intent";
    case Purpose::fallback_choice: return "fallback_choice";
    case Purpose::codegen: return "codegen";
    case Purpose::prompt_rewrite: return "prompt_rewrite";
  }
  return "value_from_instruction";
}

inline std::optional<Purpose> purpose_from(std::string_view s) {
  for (auto p : {Purpose::value_from_instruction, Purpose::boolean_nld, Purpose::intent, Purpose::fallback_choice,
                 Purpose::codegen, Purpose::prompt_rewrite})
    if (s == to_string(p)) return p;
  return std::nullopt;
}

struct BackendRequest {
  Purpose purpose = Purpose::value_from_instruction;
  std::string system;
  std::string user;
  // What the request is about (slot name, node id, condition text, ...).
  // Not sent over the wire; lets scripted backends match precisely.
  std::string subject;
  double temperature = 0.0;
  int max_tokens = 256;
};

inline BackendRequest make_request(Purpose purpose, std::string system, std::string user, std::string subject = {}) {
  BackendRequest r{purpose, std::move(system), std::move(user), std::move(subject), 0.0, 256};
  switch (purpose) {
    case Purpose::codegen: r.temperature = 0.7; r.max_tokens = 4096; break;
    case Purpose::prompt_rewrite: r.temperature = 0.7; r.max_tokens = 1024; break;
    case Purpose::boolean_nld:
    case Purpose::intent: r.max_tokens = 16; break;
    default: break;
  }
  return r;
}

class BackendError : public Error {
 public:
  BackendError(int status, std::string body, const std::string& msg = {})
      : Error("BackendError", describe(status, body, msg)), status_(status), body_(std::move(body)) {
    if (body_.size() > 200) body_.resize(200);
  }
  int status() const noexcept { return status_; }
  const std::string& body_excerpt() const noexcept { return body_; }

 private:
  static std::string describe(int status, const std::string& body, const std::string& msg) {
    std::string out = msg.empty() ? "request failed" : msg;
    if (status) out += " (status " + std::to_string(status) + ")";
    if (!body.empty()) out += ": " + body.substr(0, 200);
    return out;
  }
  int status_;
  std::string body_;
};

class ScriptExhausted : public Error {
 public:
  explicit ScriptExhausted(const std::string& msg) : Error("ScriptExhausted", msg) {}
};

class Backend {
 public:
  virtual ~Backend() = default;
  virtual std::string complete(const BackendRequest& request) = 0;
};

// ---------------------------------------------------------------------------
// Scripted mock

struct MockEntry {
  std::optional<Purpose> purpose;
  std::optional<std::string> subject;     // exact match
  std::vector<std::string> contains;      // each must occur in system + user text
  std::string reply;
  std::optional<std::string> error;       // raise BackendError instead of replying
  int times = 1;                          // 0: never consumed

  static MockEntry reply_to(Purpose p, std::string subject, std::string reply, int times = 1) {
    MockEntry e;
    e.purpose = p;
    e.subject = std::move(subject);
    e.reply = std::move(reply);
    e.times = times;
    return e;
  }
};

inline MockEntry mock_entry_from_json(const json& j) {
  MockEntry e;
  if (j.contains("purpose")) {
    auto p = purpose_from(j["purpose"].get<std::string>());
    if (!p) throw Error("SchemaViolation", "unknown purpose " + j["purpose"].get<std::string>());
    e.purpose = *p;
  }
  if (j.contains("subject")) e.subject = j["subject"].get<std::string>();
  if (j.contains("contains")) {
    if (j["contains"].is_string()) e.contains.push_back(j["contains"].get<std::string>());
    else e.contains = j["contains"].get<std::vector<std::string>>();
  }
  e.reply = j.value("reply", "");
  if (j.contains("error")) e.error = j["error"].get<std::string>();
  e.times = j.value("times", 1);
  return e;
}

inline json to_json(const MockEntry& e) {
  json j = json::object();
  if (e.purpose) j["purpose"] = to_string(*e.purpose);
  if (e.subject) j["subject"] = *e.subject;
  if (!e.contains.empty()) j["contains"] = e.contains;
  j["reply"] = e.reply;
  if (e.error) j["error"] = *e.error;
  j["times"] = e.times;
  return j;
}

struct CallRecord {
  Purpose purpose;
  std::string subject;
  std::string system;
  std::string user;
  std::string reply;
};

// Replies come from an ordered script. A request consumes the first entry
// that matches it and still has uses left; unmatched requests fail.
class MockBackend : public Backend {
 public:
  MockBackend() = default;
  explicit MockBackend(std::vector<MockEntry> entries) { add(std::move(entries)); }

  static MockBackend from_json(const json& j) {
    const json& arr = j.is_object() ? j.at("entries") : j;
    std::vector<MockEntry> entries;
    for (const auto& e : arr) entries.push_back(mock_entry_from_json(e));
    return MockBackend(std::move(entries));
  }

  static MockBackend from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("IOError", "cannot read " + path);
    try {
      return from_json(json::parse(in));
    } catch (const json::exception& e) {
      throw Error("MalformedDocument", path + ": " + e.what());
    }
  }

  void add(MockEntry e) {
    std::lock_guard lock(mu_);
    slots_.push_back({std::move(e), 0});
  }
  void add(std::vector<MockEntry> es) {
    for (auto& e : es) add(std::move(e));
  }

  std::string complete(const BackendRequest& r) override {
    std::lock_guard lock(mu_);
    std::string haystack = r.system + "\n" + r.user;
    for (auto& s : slots_) {
      const MockEntry& e = s.entry;
      if (e.times > 0 && s.used >= e.times) continue;
      if (e.purpose && *e.purpose != r.purpose) continue;
      if (e.subject && *e.subject != r.subject) continue;
      bool ok = true;
      for (const auto& c : e.contains) ok = ok && util::contains(haystack, c);
      if (!ok) continue;
      ++s.used;
      log_.push_back({r.purpose, r.subject, r.system, r.user, e.error ? "" : e.reply});
      if (e.error) throw BackendError(502, *e.error, "scripted failure");
      return e.reply;
    }
    log_.push_back({r.purpose, r.subject, r.system, r.user, ""});
    throw ScriptExhausted(std::string("no script entry for ") + to_string(r.purpose) + " request" +
                          (r.subject.empty() ? "" : " about '" + r.subject + "'"));
  }

  std::vector<CallRecord> call_log() const {
    std::lock_guard lock(mu_);
    return log_;
  }

  std::size_t calls(Purpose p) const {
    std::lock_guard lock(mu_);
    std::size_t n = 0;
    for (const auto& c : log_) n += c.purpose == p;
    return n;
  }

  // Entries with uses left, excluding unlimited ones.
  std::size_t pending() const {
    std::lock_guard lock(mu_);
    std::size_t n = 0;
    for (const auto& s : slots_) n += s.entry.times > 0 && s.used < s.entry.times;
    return n;
  }

  void clear_log() {
    std::lock_guard lock(mu_);
    log_.clear();
  }

 private:
  struct Slot {
    MockEntry entry;
    int used;
  };
  mutable std::mutex mu_;
  std::vector<Slot> slots_;
  std::vector<CallRecord> log_;
};

// ---------------------------------------------------------------------------
// OpenAI-compatible chat-completions client

struct HttpConfig {
  std::string url = "https://api.openai.com/v1/chat/completions";
  std::string model = "gpt-4o-mini";
  std::string api_key;
  int timeout_ms = 30000;
  int max_attempts = 3;
  int backoff_ms = 250;
  std::map<std::string, double> temperature_overrides;  // purpose name -> temperature
};

// Reads the `backend.*` keys of a JSON config; the key comes from CODIAL_API_KEY.
inline HttpConfig http_config_from_json(const json& cfg) {
  HttpConfig c;
  const json& b = cfg.contains("backend") ? cfg["backend"] : cfg;
  c.url = b.value("url", c.url);
  c.model = b.value("model", c.model);
  c.timeout_ms = b.value("timeout_ms", c.timeout_ms);
  c.max_attempts = b.value("max_attempts", c.max_attempts);
  c.backoff_ms = b.value("backoff_ms", c.backoff_ms);
  if (b.contains("temperature_overrides"))
    for (auto it = b["temperature_overrides"].begin(); it != b["temperature_overrides"].end(); ++it) {
      if (!purpose_from(it.key())) throw Error("SchemaViolation", "unknown purpose in temperature_overrides: " + it.key());
      c.temperature_overrides[it.key()] = it.value().get<double>();
    }
  if (const char* key = std::getenv("CODIAL_API_KEY")) c.api_key = key;
  return c;
}

inline json chat_body(const HttpConfig& c, const BackendRequest& r) {
  double temperature = r.temperature;
  if (auto it = c.temperature_overrides.find(to_string(r.purpose)); it != c.temperature_overrides.end())
    temperature = it->second;
  json messages = json::array();
  if (!r.system.empty()) messages.push_back({{"role", "system"}, {"content", r.system}});
  messages.push_back({{"role", "user"}, {"content", r.user}});
  return {{"model", c.model}, {"messages", messages}, {"temperature", temperature}, {"max_tokens", r.max_tokens}};
}

class HttpBackend : public Backend {
 public:
  explicit HttpBackend(HttpConfig config) : config_(std::move(config)) {
    auto scheme = config_.url.find("://");
    if (scheme == std::string::npos) throw Error("ConfigError", "backend.url must include a scheme: " + config_.url);
    auto path = config_.url.find('/', scheme + 3);
    origin_ = config_.url.substr(0, path);
    path_ = path == std::string::npos ? "/" : config_.url.substr(path);
  }

  std::string complete(const BackendRequest& r) override {
    using clock = std::chrono::steady_clock;
    const auto deadline = clock::now() + std::chrono::milliseconds(config_.timeout_ms);
    const std::string body = chat_body(config_, r).dump();
    httplib::Headers headers;
    if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);

    int status = 0;
    std::string last_body = "unreachable";
    for (int attempt = 0; attempt < config_.max_attempts; ++attempt) {
      if (attempt > 0) {
        auto wait = std::chrono::milliseconds(config_.backoff_ms << (attempt - 1));
        if (clock::now() + wait >= deadline) break;
        std::this_thread::sleep_for(wait);
      }
      auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - clock::now());
      if (left.count() <= 0) break;
      ++attempts_;
      httplib::Client client(origin_);
      client.set_connection_timeout(std::chrono::milliseconds(left));
      client.set_read_timeout(std::chrono::milliseconds(left));
      client.set_write_timeout(std::chrono::milliseconds(left));
      auto res = client.Post(path_, headers, body, "application/json");
      if (!res) {
        status = 0;
        last_body = httplib::to_string(res.error());
        continue;
      }
      status = res->status;
      last_body = res->body;
      if (status == 200) return extract_content(res->body);
      if (status != 429 && status < 500) throw BackendError(status, res->body, "request rejected");
    }
    if (clock::now() >= deadline) throw BackendError(status, last_body, "timeout budget exceeded");
    throw BackendError(status, last_body, "retries exhausted");
  }

  int attempts() const { return attempts_.load(); }
  const HttpConfig& config() const { return config_; }

 private:
  static std::string extract_content(const std::string& body) {
    try {
      auto j = json::parse(body);
      return j.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const json::exception& e) {
      throw BackendError(200, body, std::string("unexpected response shape: ") + e.what());
    }
  }

  HttpConfig config_;
  std::string origin_;
  std::string path_;
  std::atomic<int> attempts_{0};
};

// ---------------------------------------------------------------------------
// Reply parsing

inline std::string normalize_utterance(std::string_view s) {
  return util::join(util::words(s), " ");
}

// "True", "yes." and similar -> true; "False", "no" -> false.
inline bool parse_boolean(std::string_view reply) {
  auto ws = util::words(reply);
  if (!ws.empty()) {
    if (ws[0] == "true" || ws[0] == "yes") return true;
    if (ws[0] == "false" || ws[0] == "no") return false;
  }
  throw BackendError(200, std::string(reply), "unparseable boolean reply");
}

// ---------------------------------------------------------------------------
// Intent detection

inline std::optional<std::string> detect_intent(std::string_view utterance, const std::vector<ir::IntentEntry>& intents,
                                                Backend* backend, const std::string& context_preamble = {}) {
  auto norm = normalize_utterance(utterance);
  for (const auto& intent : intents) {
    if (norm == normalize_utterance(intent.name)) return intent.name;
    for (const auto& t : intent.trigger_examples)
      if (norm == normalize_utterance(t)) return intent.name;
  }
  if (intents.empty() || !backend) return std::nullopt;

  std::vector<std::string> names;
  std::string listing;
  for (const auto& intent : intents) {
    names.push_back(intent.name);
    listing += "- " + intent.name;
    if (!intent.trigger_examples.empty()) listing += " (e.g. " + util::join(intent.trigger_examples, "; ") + ")";
    listing += "\n";
  }
  std::string system = "You classify the intent of a user message in a task-oriented conversation.";
  if (!context_preamble.empty()) system = context_preamble + "\n" + system;
  std::string user = "Possible intents:\n" + listing + "- none\n\nUser message: " + std::string(utterance) +
                     "\n\nAnswer with exactly one intent name from the list.";
  auto reply = normalize_utterance(backend->complete(make_request(Purpose::intent, system, user, "intent")));
  for (const auto& n : names)
    if (reply == normalize_utterance(n) || reply == n) return n;
  return std::nullopt;
}

}  // namespace codial::backend
