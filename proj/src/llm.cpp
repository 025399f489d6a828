#include "aps/llm.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

#include <json.hpp>

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include "aps/util.hpp"

namespace aps::llm {

using json = nlohmann::json;

void EndpointConfig::validate() const {
  if (!(temperature >= 0.0)) throw ConfigError("endpoint.temperature", "must be >= 0");
  if (!(top_p > 0.0 && top_p <= 1.0)) throw ConfigError("endpoint.top_p", "must be in (0, 1]");
  if (candidate_count < 1) throw ConfigError("endpoint.candidate_count", "must be >= 1");
  if (top_k < 1) throw ConfigError("endpoint.top_k", "must be >= 1");
  if (max_output_tokens < 1) throw ConfigError("endpoint.max_output_tokens", "must be >= 1");
  if (!(request_timeout > 0.0)) throw ConfigError("endpoint.request_timeout", "must be > 0");
  if (max_retries < 0) throw ConfigError("endpoint.max_retries", "must be >= 0");
  if (!(backoff_initial >= 0.0)) throw ConfigError("endpoint.backoff_initial", "must be >= 0");
  if (!(input_price_per_m >= 0.0)) throw ConfigError("endpoint.input_price_per_m", "must be >= 0");
  if (!(output_price_per_m >= 0.0)) throw ConfigError("endpoint.output_price_per_m", "must be >= 0");
  if (base_url.empty()) throw ConfigError("endpoint.base_url", "must not be empty");
}

void CostLedger::merge(const CostLedger& o) {
  input_tokens += o.input_tokens;
  output_tokens += o.output_tokens;
  wallclock_seconds += o.wallclock_seconds;
  calls += o.calls;
  retries += o.retries;
}

double estimate_cost(const CostLedger& l) {
  return static_cast<double>(l.input_tokens) * l.input_price_per_m / 1e6 +
         static_cast<double>(l.output_tokens) * l.output_price_per_m / 1e6;
}

long long count_tokens(const std::string& text) {
  std::istringstream in(text);
  long long n = 0;
  std::string tok;
  while (in >> tok) ++n;
  return n;
}

// ---- HTTP -------------------------------------------------------------------

HttpResponse HttpTransport::post(const HttpRequest& req) {
  // Split "scheme://host[:port]/path".
  const auto scheme_end = req.url.find("://");
  const auto path_start = req.url.find('/', scheme_end == std::string::npos ? 0 : scheme_end + 3);
  const std::string origin = path_start == std::string::npos ? req.url : req.url.substr(0, path_start);
  const std::string path = path_start == std::string::npos ? "/" : req.url.substr(path_start);

  HttpResponse out;
  try {
    httplib::Client client(origin);
    const auto secs = static_cast<time_t>(req.timeout);
    const auto usecs = static_cast<time_t>((req.timeout - static_cast<double>(secs)) * 1e6);
    client.set_connection_timeout(secs, usecs);
    client.set_read_timeout(secs, usecs);
    client.set_write_timeout(secs, usecs);
    httplib::Headers headers;
    for (const auto& [k, v] : req.headers) headers.emplace(k, v);
    auto res = client.Post(path, headers, req.body, "application/json");
    if (!res) {
      out.error = httplib::to_string(res.error());
      return out;
    }
    out.status = res->status;
    out.body = res->body;
  } catch (const std::exception& e) {
    out.error = e.what();
  }
  return out;
}

// ---- mock -------------------------------------------------------------------

std::shared_ptr<MockTransport> MockTransport::echo() { return std::shared_ptr<MockTransport>(new MockTransport()); }

std::shared_ptr<MockTransport> MockTransport::directory(const std::filesystem::path& dir) {
  std::shared_ptr<MockTransport> t(new MockTransport());
  std::vector<std::filesystem::path> paths;
  std::error_code ec;
  for (const auto& entry : std::filesystem::directory_iterator(dir, ec)) {
    if (entry.is_regular_file()) paths.push_back(entry.path());
  }
  if (ec) throw ConfigError("scripted_dir", "cannot read " + dir.string() + ": " + ec.message());
  std::sort(paths.begin(), paths.end());
  for (const auto& p : paths) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    t->files_.push_back(ss.str());
  }
  if (t->files_.empty()) throw ConfigError("scripted_dir", "no response files in " + dir.string());
  return t;
}

void MockTransport::queue_status(int status) {
  std::lock_guard lock(mu_);
  queued_.push_back(status);
}

std::size_t MockTransport::requests() const {
  std::lock_guard lock(mu_);
  return requests_;
}

namespace {

std::string completion_body(const std::string& text, long long in_tokens, long long out_tokens) {
  json j = {{"object", "chat.completion"},
            {"choices", json::array({{{"index", 0},
                                      {"message", {{"role", "assistant"}, {"content", text}}},
                                      {"finish_reason", "stop"}}})},
            {"usage", {{"prompt_tokens", in_tokens}, {"completion_tokens", out_tokens}}}};
  return j.dump();
}

std::string error_body(int status) {
  return json{{"error", {{"code", status}, {"message", "mock status " + std::to_string(status)}}}}.dump();
}

}  // namespace

HttpResponse MockTransport::post(const HttpRequest& req) {
  std::lock_guard lock(mu_);
  ++requests_;
  last_body_ = req.body;
  HttpResponse out;
  if (!queued_.empty()) {
    out.status = queued_.front();
    queued_.erase(queued_.begin());
    out.body = error_body(out.status);
    return out;
  }
  std::string prompt;
  try {
    prompt = json::parse(req.body).at("messages").at(0).at("content").get<std::string>();
  } catch (const std::exception& e) {
    out.status = 400;
    out.body = error_body(400);
    return out;
  }
  std::string reply = prompt;
  if (!files_.empty()) {
    reply = files_[next_ % files_.size()];
    ++next_;
    if (reply.rfind("#status ", 0) == 0) {
      const auto eol = reply.find('\n');
      out.status = std::atoi(reply.substr(8, eol == std::string::npos ? std::string::npos : eol - 8).c_str());
      out.body = error_body(out.status);
      return out;
    }
  }
  out.status = 200;
  out.body = completion_body(reply, count_tokens(prompt), count_tokens(reply));
  return out;
}

// ---- client -----------------------------------------------------------------

LlmClient::LlmClient(EndpointConfig config, std::shared_ptr<Transport> transport)
    : config_(std::move(config)), transport_(std::move(transport)) {
  config_.validate();
  if (!transport_) throw ConfigError("endpoint", "no transport");
  ledger_.input_price_per_m = config_.input_price_per_m;
  ledger_.output_price_per_m = config_.output_price_per_m;
}

void LlmClient::check_credentials() const {
  if (!transport_->needs_api_key()) return;
  const char* key = std::getenv(config_.api_key_env_var.c_str());
  if (!key || !*key) throw AuthError("API key missing: environment variable " + config_.api_key_env_var + " is not set");
}

std::string LlmClient::request_body(const std::string& prompt) const {
  json j = {{"model", config_.model_id},
            {"messages", json::array({{{"role", "user"}, {"content", prompt}}})},
            {"temperature", config_.temperature},
            {"top_p", config_.top_p},
            {"top_k", config_.top_k},
            {"n", config_.candidate_count},
            {"max_tokens", config_.max_output_tokens}};
  return j.dump();
}

Completion LlmClient::complete(const std::string& prompt) {
  check_credentials();
  HttpRequest req;
  std::string base = config_.base_url;
  while (!base.empty() && base.back() == '/') base.pop_back();
  req.url = base + "/chat/completions";
  req.body = request_body(prompt);
  req.timeout = config_.request_timeout;
  req.headers["Content-Type"] = "application/json";
  if (transport_->needs_api_key()) {
    req.headers["Authorization"] = std::string("Bearer ") + std::getenv(config_.api_key_env_var.c_str());
  }

  const auto t0 = std::chrono::steady_clock::now();
  Completion c;
  double backoff = config_.backoff_initial;
  std::string last_problem;
  for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
    if (attempt > 0) {
      ++c.retries;
      ++ledger_.retries;
      if (backoff > 0.0) std::this_thread::sleep_for(std::chrono::duration<double>(backoff));
      backoff *= 2.0;
    }
    const auto res = transport_->post(req);
    if (res.status == 401 || res.status == 403) {
      throw AuthError("endpoint rejected the credentials (HTTP " + std::to_string(res.status) + ")");
    }
    const bool transient = res.status == 0 || res.status == 408 || res.status == 429 || res.status >= 500;
    if (transient) {
      last_problem = res.status == 0 ? "transport: " + res.error : "HTTP " + std::to_string(res.status);
      continue;
    }
    if (res.status != 200) {
      throw TransportError("HTTP " + std::to_string(res.status) + ": " + res.body.substr(0, 500));
    }
    try {
      const auto j = json::parse(res.body);
      const auto& content = j.at("choices").at(0).at("message").at("content");
      c.text = content.is_string() ? content.get<std::string>() : std::string();
      if (j.contains("usage") && j["usage"].is_object()) {
        c.input_tokens = j["usage"].value("prompt_tokens", 0LL);
        c.output_tokens = j["usage"].value("completion_tokens", 0LL);
      }
    } catch (const std::exception& e) {
      throw TransportError(std::string("unexpected response body: ") + e.what());
    }
    ledger_.input_tokens += c.input_tokens;
    ledger_.output_tokens += c.output_tokens;
    ++ledger_.calls;
    ledger_.wallclock_seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return c;
  }
  ledger_.wallclock_seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  throw ExhaustedRetries("gave up after " + std::to_string(config_.max_retries) + " retries (" + last_problem + ")");
}

}  // namespace aps::llm
