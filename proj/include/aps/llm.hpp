#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "aps/error.hpp"

namespace aps::llm {

struct EndpointConfig {
  std::string base_url = "https://openrouter.ai/api/v1";
  std::string model_id = "google/gemini-2.5-flash";
  double temperature = 1.0;
  double top_p = 0.95;
  int top_k = 64;
  int candidate_count = 1;
  int max_output_tokens = 8192;
  double request_timeout = 120.0;  // s
  int max_retries = 4;
  double backoff_initial = 1.0;    // s, doubled after each retry
  std::string api_key_env_var = "APS_LLM_API_KEY";
  double input_price_per_m = 0.15;   // $ per million tokens
  double output_price_per_m = 0.60;

  void validate() const;
};

/// Token usage and money spent, in $ per million tokens.
struct CostLedger {
  long long input_tokens = 0;
  long long output_tokens = 0;
  double input_price_per_m = 0.15;
  double output_price_per_m = 0.60;
  double wallclock_seconds = 0.0;
  long long calls = 0;
  long long retries = 0;

  void merge(const CostLedger& other);
};

double estimate_cost(const CostLedger& ledger);

class LlmError : public Error {
 public:
  using Error::Error;
};
class AuthError : public LlmError {
 public:
  using LlmError::LlmError;
};
class TransportError : public LlmError {
 public:
  using LlmError::LlmError;
};
class ExhaustedRetries : public LlmError {
 public:
  using LlmError::LlmError;
};

struct HttpRequest {
  std::string url;
  std::map<std::string, std::string> headers;
  std::string body;
  double timeout = 120.0;
};

struct HttpResponse {
  int status = 0;  // 0 means the request never completed (connection error, timeout)
  std::string body;
  std::string error;
};

class Transport {
 public:
  virtual ~Transport() = default;
  virtual HttpResponse post(const HttpRequest& request) = 0;
  /// False for offline transports, which need no API key.
  virtual bool needs_api_key() const { return true; }
};

/// HTTPS (or plain HTTP) POST through cpp-httplib.
class HttpTransport final : public Transport {
 public:
  HttpResponse post(const HttpRequest& request) override;
};

/// Offline transport answering in the chat-completions format. Usage counts are
/// whitespace-separated tokens of the prompt and the reply.
///
/// Echo mode returns the prompt. Directory mode replays the files of a directory in name
/// order, wrapping around; a file whose first line is "#status <code>" produces that HTTP
/// status instead. Queued statuses are served before either.
class MockTransport final : public Transport {
 public:
  static std::shared_ptr<MockTransport> echo();
  static std::shared_ptr<MockTransport> directory(const std::filesystem::path& dir);

  void queue_status(int status);
  HttpResponse post(const HttpRequest& request) override;
  bool needs_api_key() const override { return false; }

  std::size_t requests() const;
  const std::string& last_body() const { return last_body_; }

 private:
  MockTransport() = default;

  std::vector<std::string> files_;  // empty in echo mode
  std::vector<int> queued_;
  std::size_t next_ = 0;
  std::size_t requests_ = 0;
  std::string last_body_;
  mutable std::mutex mu_;
};

struct Completion {
  std::string text;
  long long input_tokens = 0;
  long long output_tokens = 0;
  int retries = 0;
};

/// Chat-completions client. The prompt is sent unchanged as the single user message.
class LlmClient {
 public:
  LlmClient(EndpointConfig config, std::shared_ptr<Transport> transport);

  /// Throws AuthError (401/403 or missing key), ExhaustedRetries or TransportError.
  Completion complete(const std::string& prompt);

  /// Throws AuthError when a key is required but the environment variable is unset.
  void check_credentials() const;

  const CostLedger& ledger() const { return ledger_; }
  const EndpointConfig& config() const { return config_; }

 private:
  std::string request_body(const std::string& prompt) const;

  EndpointConfig config_;
  std::shared_ptr<Transport> transport_;
  CostLedger ledger_;
};

/// Whitespace-separated token count used by the mock transport.
long long count_tokens(const std::string& text);

}  // namespace aps::llm
