#pragma once

#include <json.hpp>

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace tessa {

enum class Role { system, user, assistant };

std::string to_string(Role r);
Role role_from_string(const std::string& s);

struct ChatMessage {
  Role role = Role::user;
  std::string content;

  friend bool operator==(const ChatMessage&, const ChatMessage&) = default;
};

struct ChatRequest {
  std::string backend_id;  // empty selects the gateway default
  std::string model;
  double temperature = 1.0;
  int max_tokens = 2048;
  std::vector<ChatMessage> messages;

  /// The last user message, or "" when there is none.
  const std::string& last_user_message() const;

  friend bool operator==(const ChatRequest&, const ChatRequest&) = default;
};

/// Throws InvalidRequest when the request breaks its invariants.
void validate_request(const ChatRequest& request);

nlohmann::json request_to_json(const ChatRequest& request);
ChatRequest request_from_json(const nlohmann::json& j);

struct TranscriptEntry {
  ChatRequest request;
  std::string response;
  long long latency_ms = 0;
  std::string backend_id;
};

nlohmann::json transcript_entry_to_json(const TranscriptEntry& e);
TranscriptEntry transcript_entry_from_json(const nlohmann::json& j);

/// Append-only record of completed calls; appends are serialized.
class Transcript {
public:
  void append(TranscriptEntry entry);
  std::vector<TranscriptEntry> entries() const;
  std::size_t size() const;

  void write_jsonl(const std::filesystem::path& path) const;
  static std::vector<TranscriptEntry> read_jsonl(const std::filesystem::path& path);

private:
  mutable std::mutex mutex_;
  std::vector<TranscriptEntry> entries_;
};

/// Chat-completion backend. Implementations throw Error(BackendUnavailable)
/// for failures; `transient` failures are retried by the Gateway.
class Backend {
public:
  virtual ~Backend() = default;
  virtual std::string complete(const ChatRequest& request) = 0;
  /// Remote backends get wall-clock latency recorded; local ones record 0
  /// so transcripts stay byte-stable.
  virtual bool is_remote() const { return false; }
};

/// Raised by backends for failures worth retrying (network, 429, 5xx).
class TransientBackendError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

struct ScriptEntry {
  std::optional<std::string> match;  // substring of the last user message
  std::string response;
};

/// Canned responses consumed in order: each call takes the first
/// unconsumed entry whose `match` (if any) occurs in the last user message.
class ScriptedBackend : public Backend {
public:
  explicit ScriptedBackend(std::vector<ScriptEntry> entries);
  static std::shared_ptr<ScriptedBackend> from_queue(const std::vector<std::string>& responses);
  /// JSONL of {"match": optional str, "response": str}.
  static std::vector<ScriptEntry> load_script(const std::filesystem::path& path);

  std::string complete(const ChatRequest& request) override;
  std::size_t remaining() const;

private:
  mutable std::mutex mutex_;
  std::deque<ScriptEntry> entries_;
};

/// Returns the last user message.
class EchoBackend : public Backend {
public:
  std::string complete(const ChatRequest& request) override;
};

/// Replays responses of a persisted transcript in order.
class ReplayBackend : public Backend {
public:
  explicit ReplayBackend(std::vector<TranscriptEntry> entries);
  std::string complete(const ChatRequest& request) override;

private:
  std::mutex mutex_;
  std::vector<TranscriptEntry> entries_;
  std::size_t next_ = 0;
};

/// Responses computed by a function of the request; used for mock scorers
/// and judges in tests.
class FunctionBackend : public Backend {
public:
  using Fn = std::function<std::string(const ChatRequest&)>;
  explicit FunctionBackend(Fn fn) : fn_(std::move(fn)) {}
  std::string complete(const ChatRequest& request) override { return fn_(request); }

private:
  Fn fn_;
};

struct HttpChatConfig {
  std::string base_url = "https://api.openai.com/v1";
  std::string api_key_env = "TESSA_API_KEY";
  int timeout_seconds = 120;
};

/// OpenAI-compatible POST {base_url}/chat/completions.
class HttpChatBackend : public Backend {
public:
  /// Throws AuthMissing when the key variable is unset or empty.
  explicit HttpChatBackend(HttpChatConfig config);
  std::string complete(const ChatRequest& request) override;
  bool is_remote() const override { return true; }

  /// Exposed for tests: the JSON body sent for a request.
  static nlohmann::json request_body(const ChatRequest& request);
  /// choices[0].message.content; throws ResponseEmpty / ParseFailure.
  static std::string parse_response(const std::string& body);

private:
  HttpChatConfig config_;
  std::string api_key_;
};

struct RetryPolicy {
  int attempts = 3;
  std::chrono::milliseconds base_delay{1000};  // doubles per retry: 1s, 2s, 4s
};

struct GatewayConfig {
  std::string default_backend;
  std::string model = "default";
  double temperature = 1.0;
  int max_tokens = 2048;
  int concurrency = 4;
  RetryPolicy retry;
};

/// Uniform entry point for every LLM call in the pipeline.
class Gateway {
public:
  using Sleeper = std::function<void(std::chrono::milliseconds)>;

  explicit Gateway(GatewayConfig config);

  void register_backend(const std::string& id, std::shared_ptr<Backend> backend);
  bool has_backend(const std::string& id) const;
  const GatewayConfig& config() const { return config_; }

  /// Replaces std::this_thread::sleep_for between retries (tests).
  void set_sleeper(Sleeper sleeper) { sleeper_ = std::move(sleeper); }

  /// Validates, dispatches (with retries for transient failures), appends
  /// to the transcript. Throws InvalidRequest, BackendUnavailable,
  /// ResponseEmpty.
  std::string complete(const ChatRequest& request);

  /// Single user message with the gateway's default model settings.
  std::string ask(const std::string& prompt, const std::string& backend_id = {});

  ChatRequest make_request(const std::string& prompt, const std::string& backend_id = {}) const;

  Transcript& transcript() { return transcript_; }
  const Transcript& transcript() const { return transcript_; }
  std::size_t call_count() const { return transcript_.size(); }

private:
  class Slot;

  GatewayConfig config_;
  std::map<std::string, std::shared_ptr<Backend>> backends_;
  mutable std::mutex backends_mutex_;
  Transcript transcript_;
  Sleeper sleeper_;

  std::mutex slots_mutex_;
  std::condition_variable slots_cv_;
  int in_flight_ = 0;
};

}  // namespace tessa
