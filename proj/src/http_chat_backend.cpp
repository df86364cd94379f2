#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include "tessa/error.hpp"
#include "tessa/llm_gateway.hpp"

#include <cstdlib>

namespace tessa {

using nlohmann::json;

HttpChatBackend::HttpChatBackend(HttpChatConfig config) : config_(std::move(config)) {
  const char* key = std::getenv(config_.api_key_env.c_str());
  if (key == nullptr || *key == '\0') {
    throw Error(Errc::AuthMissing, "environment variable " + config_.api_key_env + " is not set");
  }
  api_key_ = key;
}

json HttpChatBackend::request_body(const ChatRequest& request) {
  json messages = json::array();
  for (const auto& m : request.messages) messages.push_back({{"role", to_string(m.role)}, {"content", m.content}});
  return {{"model", request.model},
          {"messages", messages},
          {"temperature", request.temperature},
          {"max_tokens", request.max_tokens}};
}

std::string HttpChatBackend::parse_response(const std::string& body) {
  json j;
  try {
    j = json::parse(body);
  } catch (const json::parse_error&) {
    throw Error(Errc::ParseFailure, "chat response is not JSON", body);
  }
  const json* content = nullptr;
  if (j.contains("choices") && j["choices"].is_array() && !j["choices"].empty()) {
    const json& first = j["choices"][0];
    if (first.contains("message") && first["message"].contains("content")) content = &first["message"]["content"];
  }
  if (content == nullptr) throw Error(Errc::ParseFailure, "chat response has no choices[0].message.content", body);
  if (!content->is_string() || content->get<std::string>().empty()) {
    throw Error(Errc::ResponseEmpty, "chat response content is empty");
  }
  return content->get<std::string>();
}

namespace {

struct SplitUrl {
  std::string origin;  // scheme://host[:port]
  std::string prefix;  // path prefix without trailing slash
};

SplitUrl split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw Error(Errc::InvalidConfig, "base_url must include a scheme: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  SplitUrl out;
  out.origin = path_start == std::string::npos ? url : url.substr(0, path_start);
  out.prefix = path_start == std::string::npos ? "" : url.substr(path_start);
  while (!out.prefix.empty() && out.prefix.back() == '/') out.prefix.pop_back();
  return out;
}

}  // namespace

std::string HttpChatBackend::complete(const ChatRequest& request) {
  const SplitUrl url = split_url(config_.base_url);
  httplib::Client client(url.origin);
  client.set_connection_timeout(config_.timeout_seconds, 0);
  client.set_read_timeout(config_.timeout_seconds, 0);
  client.set_bearer_token_auth(api_key_);

  const auto result = client.Post(url.prefix + "/chat/completions", request_body(request).dump(), "application/json");
  if (!result) throw TransientBackendError("HTTP error: " + httplib::to_string(result.error()));
  const int status = result->status;
  if (status == 401 || status == 403) throw Error(Errc::AuthMissing, "backend rejected credentials (HTTP " + std::to_string(status) + ")");
  if (status == 429 || status >= 500) throw TransientBackendError("HTTP " + std::to_string(status));
  if (status != 200) {
    throw Error(Errc::BackendUnavailable, "HTTP " + std::to_string(status) + ": " + result->body.substr(0, 200));
  }
  return parse_response(result->body);
}

}  // namespace tessa
