#include "tessa/llm_gateway.hpp"

#include "tessa/error.hpp"
#include "tessa/json_codec.hpp"
#include "tessa/text_util.hpp"

#include <thread>

namespace tessa {

using nlohmann::json;

std::string to_string(Role r) {
  switch (r) {
    case Role::system: return "system";
    case Role::user: return "user";
    case Role::assistant: return "assistant";
  }
  return "user";
}

Role role_from_string(const std::string& s) {
  if (s == "system") return Role::system;
  if (s == "user") return Role::user;
  if (s == "assistant") return Role::assistant;
  throw Error(Errc::SchemaViolation, "unknown role '" + s + "'");
}

const std::string& ChatRequest::last_user_message() const {
  static const std::string empty;
  for (auto it = messages.rbegin(); it != messages.rend(); ++it) {
    if (it->role == Role::user) return it->content;
  }
  return empty;
}

void validate_request(const ChatRequest& r) {
  bool has_user = false;
  for (const auto& m : r.messages) {
    if (m.content.empty()) throw Error(Errc::InvalidRequest, "message content is empty");
    has_user = has_user || m.role == Role::user;
  }
  if (!has_user) throw Error(Errc::InvalidRequest, "request needs at least one user message");
  if (!(r.temperature >= 0)) throw Error(Errc::InvalidRequest, "temperature must be >= 0");
  if (r.max_tokens < 1) throw Error(Errc::InvalidRequest, "max_tokens must be positive");
}

json request_to_json(const ChatRequest& r) {
  json messages = json::array();
  for (const auto& m : r.messages) messages.push_back({{"role", to_string(m.role)}, {"content", m.content}});
  return {{"backend_id", r.backend_id},
          {"model", r.model},
          {"temperature", r.temperature},
          {"max_tokens", r.max_tokens},
          {"messages", messages}};
}

ChatRequest request_from_json(const json& j) {
  ChatRequest r;
  r.backend_id = j.value("backend_id", "");
  r.model = j.value("model", "");
  r.temperature = j.value("temperature", 1.0);
  r.max_tokens = j.value("max_tokens", 2048);
  for (const auto& m : j.at("messages")) {
    r.messages.push_back({role_from_string(m.at("role").get<std::string>()), m.at("content").get<std::string>()});
  }
  return r;
}

json transcript_entry_to_json(const TranscriptEntry& e) {
  return {{"backend_id", e.backend_id},
          {"request", request_to_json(e.request)},
          {"response", e.response},
          {"latency_ms", e.latency_ms}};
}

TranscriptEntry transcript_entry_from_json(const json& j) {
  TranscriptEntry e;
  e.backend_id = j.at("backend_id").get<std::string>();
  e.request = request_from_json(j.at("request"));
  e.response = j.at("response").get<std::string>();
  e.latency_ms = j.value("latency_ms", 0LL);
  return e;
}

void Transcript::append(TranscriptEntry entry) {
  std::lock_guard lock(mutex_);
  entries_.push_back(std::move(entry));
}

std::vector<TranscriptEntry> Transcript::entries() const {
  std::lock_guard lock(mutex_);
  return entries_;
}

std::size_t Transcript::size() const {
  std::lock_guard lock(mutex_);
  return entries_.size();
}

void Transcript::write_jsonl(const std::filesystem::path& path) const {
  std::vector<json> rows;
  for (const auto& e : entries()) rows.push_back(transcript_entry_to_json(e));
  tessa::write_jsonl(path, rows);
}

std::vector<TranscriptEntry> Transcript::read_jsonl(const std::filesystem::path& path) {
  std::vector<TranscriptEntry> out;
  for (const auto& row : tessa::read_jsonl(path)) {
    try {
      out.push_back(transcript_entry_from_json(row));
    } catch (const json::exception& e) {
      throw Error(Errc::SchemaViolation, path.string() + ": malformed transcript entry (" + e.what() + ")");
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Local backends

ScriptedBackend::ScriptedBackend(std::vector<ScriptEntry> entries) : entries_(entries.begin(), entries.end()) {}

std::shared_ptr<ScriptedBackend> ScriptedBackend::from_queue(const std::vector<std::string>& responses) {
  std::vector<ScriptEntry> entries;
  for (const auto& r : responses) entries.push_back({std::nullopt, r});
  return std::make_shared<ScriptedBackend>(std::move(entries));
}

std::vector<ScriptEntry> ScriptedBackend::load_script(const std::filesystem::path& path) {
  std::vector<ScriptEntry> entries;
  std::size_t line = 0;
  for (const auto& row : read_jsonl(path)) {
    ++line;
    if (!row.is_object() || !row.contains("response") || !row["response"].is_string()) {
      throw Error(Errc::SchemaViolation, path.filename().string() + ": entry " + std::to_string(line) +
                                             " needs a string 'response'");
    }
    ScriptEntry e;
    e.response = row["response"].get<std::string>();
    if (auto it = row.find("match"); it != row.end() && !it->is_null()) e.match = it->get<std::string>();
    entries.push_back(std::move(e));
  }
  return entries;
}

std::string ScriptedBackend::complete(const ChatRequest& request) {
  std::lock_guard lock(mutex_);
  const std::string& prompt = request.last_user_message();
  for (auto it = entries_.begin(); it != entries_.end(); ++it) {
    if (!it->match || prompt.find(*it->match) != std::string::npos) {
      std::string response = std::move(it->response);
      entries_.erase(it);
      return response;
    }
  }
  throw Error(Errc::BackendUnavailable, "scripted backend has no matching response left");
}

std::size_t ScriptedBackend::remaining() const {
  std::lock_guard lock(mutex_);
  return entries_.size();
}

std::string EchoBackend::complete(const ChatRequest& request) { return request.last_user_message(); }

ReplayBackend::ReplayBackend(std::vector<TranscriptEntry> entries) : entries_(std::move(entries)) {}

std::string ReplayBackend::complete(const ChatRequest& request) {
  std::lock_guard lock(mutex_);
  if (next_ >= entries_.size()) throw Error(Errc::BackendUnavailable, "replay transcript exhausted");
  const auto& entry = entries_[next_];
  if (entry.request.last_user_message() != request.last_user_message()) {
    throw Error(Errc::BackendUnavailable, "replay diverged at call " + std::to_string(next_ + 1));
  }
  ++next_;
  return entry.response;
}

// ---------------------------------------------------------------------------
// Gateway

class Gateway::Slot {
public:
  explicit Slot(Gateway& g) : g_(g) {
    std::unique_lock lock(g_.slots_mutex_);
    g_.slots_cv_.wait(lock, [&] { return g_.in_flight_ < std::max(1, g_.config_.concurrency); });
    ++g_.in_flight_;
  }
  ~Slot() {
    {
      std::lock_guard lock(g_.slots_mutex_);
      --g_.in_flight_;
    }
    g_.slots_cv_.notify_one();
  }
  Slot(const Slot&) = delete;
  Slot& operator=(const Slot&) = delete;

private:
  Gateway& g_;
};

Gateway::Gateway(GatewayConfig config)
    : config_(std::move(config)), sleeper_([](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); }) {}

void Gateway::register_backend(const std::string& id, std::shared_ptr<Backend> backend) {
  std::lock_guard lock(backends_mutex_);
  backends_.insert_or_assign(id, std::move(backend));
  if (config_.default_backend.empty()) config_.default_backend = id;
}

bool Gateway::has_backend(const std::string& id) const {
  std::lock_guard lock(backends_mutex_);
  return backends_.count(id) > 0;
}

ChatRequest Gateway::make_request(const std::string& prompt, const std::string& backend_id) const {
  ChatRequest r;
  r.backend_id = backend_id.empty() ? config_.default_backend : backend_id;
  r.model = config_.model;
  r.temperature = config_.temperature;
  r.max_tokens = config_.max_tokens;
  r.messages.push_back({Role::user, prompt});
  return r;
}

std::string Gateway::ask(const std::string& prompt, const std::string& backend_id) {
  return complete(make_request(prompt, backend_id));
}

std::string Gateway::complete(const ChatRequest& request) {
  validate_request(request);
  const std::string id = request.backend_id.empty() ? config_.default_backend : request.backend_id;
  std::shared_ptr<Backend> backend;
  {
    std::lock_guard lock(backends_mutex_);
    auto it = backends_.find(id);
    if (it == backends_.end()) throw Error(Errc::BackendUnavailable, "no backend registered as '" + id + "'");
    backend = it->second;
  }

  Slot slot(*this);
  const int attempts = std::max(1, config_.retry.attempts);
  std::string last_failure;
  for (int attempt = 1; attempt <= attempts; ++attempt) {
    const auto start = std::chrono::steady_clock::now();
    try {
      std::string response = backend->complete(request);
      const auto elapsed = std::chrono::steady_clock::now() - start;
      if (trim(response).empty()) throw Error(Errc::ResponseEmpty, "backend '" + id + "' returned an empty response");
      TranscriptEntry entry{request, response, 0, id};
      entry.request.backend_id = id;
      if (backend->is_remote()) {
        entry.latency_ms = std::chrono::duration_cast<std::chrono::milliseconds>(elapsed).count();
      }
      transcript_.append(std::move(entry));
      return response;
    } catch (const TransientBackendError& e) {
      last_failure = e.what();
      if (attempt < attempts) sleeper_(config_.retry.base_delay * (1LL << (attempt - 1)));
    }
  }
  throw Error(Errc::BackendUnavailable,
              "backend '" + id + "' failed after " + std::to_string(attempts) + " attempts: " + last_failure);
}

}  // namespace tessa
