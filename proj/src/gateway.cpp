#include "gqa/gateway.hpp"

#include <atomic>
#include <cstdlib>
#include <iomanip>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <json.hpp>
#include <openssl/evp.h>

namespace gqa {

using json = nlohmann::json;

std::string_view to_string(Role role) {
  switch (role) {
    case Role::system: return "system";
    case Role::user: return "user";
    case Role::assistant: return "assistant";
  }
  return "user";
}

std::string_view to_string(BackendKind kind) {
  switch (kind) {
    case BackendKind::remote: return "remote";
    case BackendKind::scripted: return "scripted";
    case BackendKind::cache: return "cache";
  }
  return "remote";
}

void validate_request(const ChatRequest& request) {
  if (request.messages.empty()) throw ValidationError("chat request without messages");
  if (!(request.temperature >= 0.0 && request.temperature <= 2.0)) {
    throw ValidationError("temperature must lie in [0, 2]");
  }
  if (request.max_tokens < 1) throw ValidationError("max_tokens must be positive");
}

namespace {

std::string describe_failures(const std::map<std::size_t, std::string>& failures) {
  std::ostringstream out;
  out << failures.size() << " request(s) failed:";
  for (const auto& [idx, what] : failures) out << " [" << idx << "] " << what << ";";
  return out.str();
}

std::string describe(const std::exception_ptr& error) {
  try {
    std::rethrow_exception(error);
  } catch (const std::exception& e) {
    return e.what();
  } catch (...) {
    return "unknown error";
  }
}

}  // namespace

BatchError::BatchError(std::vector<std::optional<ChatResponse>> partial,
                       std::map<std::size_t, std::string> failures)
    : GatewayError(describe_failures(failures)),
      partial_(std::move(partial)),
      failures_(std::move(failures)) {}

// ---------------------------------------------------------------- ledger

void CallLedger::record(const std::string& stage, BackendKind served_by) {
  std::lock_guard lock(mu_);
  ++counts_[stage];
  ++served_[served_by];
  ++total_;
}

std::map<std::string, std::uint64_t> CallLedger::counts() const {
  std::lock_guard lock(mu_);
  return counts_;
}

std::uint64_t CallLedger::count(const std::string& stage) const {
  std::lock_guard lock(mu_);
  auto it = counts_.find(stage);
  return it == counts_.end() ? 0 : it->second;
}

std::uint64_t CallLedger::count_prefix(const std::string& prefix) const {
  std::lock_guard lock(mu_);
  std::uint64_t n = 0;
  for (const auto& [stage, c] : counts_) {
    if (stage.rfind(prefix, 0) == 0) n += c;
  }
  return n;
}

std::uint64_t CallLedger::total() const {
  std::lock_guard lock(mu_);
  return total_;
}

std::uint64_t CallLedger::served_by(BackendKind kind) const {
  std::lock_guard lock(mu_);
  auto it = served_.find(kind);
  return it == served_.end() ? 0 : it->second;
}

// ---------------------------------------------------------------- backends

std::vector<ChatBackend::Outcome> ChatBackend::send_batch(std::span<const ChatRequest> requests,
                                                          int parallelism) {
  std::vector<Outcome> out(requests.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < requests.size(); i = next++) {
      try {
        out[i].content = send(requests[i]);
      } catch (...) {
        out[i].error = std::current_exception();
      }
    }
  };
  const auto n_threads =
      std::min<std::size_t>(static_cast<std::size_t>(std::max(parallelism, 1)), requests.size());
  if (n_threads <= 1) {
    worker();
    return out;
  }
  {
    std::vector<std::jthread> threads;
    for (std::size_t t = 0; t < n_threads; ++t) threads.emplace_back(worker);
  }
  return out;
}

ScriptedBackend::ScriptedBackend(std::map<std::string, std::deque<std::string>> queues)
    : queues_(std::move(queues)) {}

std::shared_ptr<ScriptedBackend> ScriptedBackend::from_directory(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw Error("script directory not found: " + dir.string());
  }
  auto backend = std::make_shared<ScriptedBackend>();
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.path().extension() != ".json") continue;
    json doc;
    try {
      doc = json::parse(read_file(entry.path()));
    } catch (const json::parse_error& e) {
      throw ParseError("script " + entry.path().string() + ": " + e.what());
    }
    if (!doc.is_array()) throw ParseError("script " + entry.path().string() + " must be a list");
    const std::string stage = entry.path().stem().string();
    for (const auto& reply : doc) {
      if (!reply.is_string()) {
        throw ParseError("script " + entry.path().string() + " must hold strings");
      }
      backend->push(stage, reply.get<std::string>());
    }
  }
  return backend;
}

void ScriptedBackend::push(const std::string& stage, std::string reply) {
  std::lock_guard lock(mu_);
  queues_[stage].push_back(std::move(reply));
}

std::size_t ScriptedBackend::remaining(const std::string& stage) const {
  std::lock_guard lock(mu_);
  auto it = queues_.find(stage);
  return it == queues_.end() ? 0 : it->second.size();
}

std::string ScriptedBackend::send(const ChatRequest& request) {
  std::lock_guard lock(mu_);
  auto it = queues_.find(request.stage);
  if (it == queues_.end() || it->second.empty()) throw ScriptUnderrun(request.stage);
  std::string reply = std::move(it->second.front());
  it->second.pop_front();
  return reply;
}

std::vector<ChatBackend::Outcome> ScriptedBackend::send_batch(
    std::span<const ChatRequest> requests, int /*parallelism*/) {
  return ChatBackend::send_batch(requests, 1);
}

RemoteSettings RemoteSettings::from_env() {
  RemoteSettings s;
  if (const char* base = std::getenv("LLM_API_BASE")) s.api_base = base;
  if (const char* key = std::getenv("LLM_API_KEY")) s.api_key = key;
  return s;
}

RemoteBackend::RemoteBackend(RemoteSettings settings) : settings_(std::move(settings)) {
  if (settings_.api_base.empty()) throw Error("LLM_API_BASE is not set");
  const auto& base = settings_.api_base;
  auto scheme_end = base.find("://");
  if (scheme_end == std::string::npos) throw Error("LLM_API_BASE must include a scheme: " + base);
  auto path_start = base.find('/', scheme_end + 3);
  if (path_start == std::string::npos) {
    scheme_host_ = base;
  } else {
    scheme_host_ = base.substr(0, path_start);
    path_prefix_ = base.substr(path_start);
  }
  while (!path_prefix_.empty() && path_prefix_.back() == '/') path_prefix_.pop_back();
}

std::string RemoteBackend::request_body(const ChatRequest& request) {
  json body;
  body["model"] = request.model_id;
  body["messages"] = json::array();
  for (const auto& m : request.messages) {
    body["messages"].push_back({{"role", to_string(m.role)}, {"content", m.content}});
  }
  body["temperature"] = request.temperature;
  body["max_tokens"] = request.max_tokens;
  return body.dump();
}

std::string RemoteBackend::response_content(const std::string& body) {
  json doc;
  try {
    doc = json::parse(body);
  } catch (const json::parse_error& e) {
    throw GatewayError(std::string("unparseable response body: ") + e.what(), 200);
  }
  try {
    const auto& content = doc.at("choices").at(0).at("message").at("content");
    return content.is_null() ? std::string() : content.get<std::string>();
  } catch (const json::exception&) {
    throw GatewayError("response lacks choices[0].message.content", 200);
  }
}

std::string RemoteBackend::send(const ChatRequest& request) {
  httplib::Client client(scheme_host_);
  client.set_connection_timeout(settings_.timeout);
  client.set_read_timeout(settings_.timeout);
  client.set_write_timeout(settings_.timeout);
  httplib::Headers headers{{"Authorization", "Bearer " + settings_.api_key}};
  const std::string body = request_body(request);
  const std::string path = path_prefix_ + "/chat/completions";

  std::string last_error;
  int last_status = 0;
  auto delay = settings_.backoff_base;
  for (int attempt = 1; attempt <= settings_.max_attempts; ++attempt) {
    auto res = client.Post(path, headers, body, "application/json");
    if (!res) {
      last_status = 0;
      last_error = "transport error: " + httplib::to_string(res.error());
    } else if (res->status == 200) {
      return response_content(res->body);
    } else {
      last_status = res->status;
      last_error = "HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 200);
      const bool transient = res->status == 429 || res->status >= 500;
      if (!transient) break;
    }
    if (attempt < settings_.max_attempts) {
      std::this_thread::sleep_for(delay);
      delay = std::min(delay * 2, settings_.backoff_cap);
    }
  }
  throw GatewayError("remote completion failed: " + last_error, last_status);
}

std::string NullBackend::send(const ChatRequest& request) {
  throw CacheMiss(cache_key(request));
}

// ---------------------------------------------------------------- cache

std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error("SHA-256 failed");
  }
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) {
    hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
  }
  return hex.str();
}

std::string cache_key(const ChatRequest& request) {
  json doc;
  doc["model_id"] = request.model_id;
  doc["messages"] = json::array();
  for (const auto& m : request.messages) {
    doc["messages"].push_back({to_string(m.role), m.content});
  }
  doc["temperature"] = request.temperature;
  doc["max_tokens"] = request.max_tokens;
  doc["seed_tag"] = request.seed_tag;
  return sha256_hex(doc.dump());
}

ResponseCache::ResponseCache(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::filesystem::create_directories(dir_);
}

std::optional<std::string> ResponseCache::get(const std::string& key) const {
  auto path = dir_ / key;
  if (!std::filesystem::exists(path)) return std::nullopt;
  return read_file(path);
}

void ResponseCache::put(const std::string& key, const std::string& content) {
  write_file_atomic(dir_ / key, content);
}

// ---------------------------------------------------------------- gateway

Gateway::Gateway(std::shared_ptr<ChatBackend> backend, std::shared_ptr<ResponseCache> cache)
    : backend_(std::move(backend)), cache_(std::move(cache)) {
  if (!backend_) throw Error("gateway requires a backend");
  if (backend_->kind() == BackendKind::cache && !cache_) {
    throw Error("cache-only backend requires a cache directory");
  }
}

ChatResponse Gateway::complete(const ChatRequest& request) {
  auto many = complete_many(std::span(&request, 1), 1);
  return std::move(many.front());
}

std::vector<ChatResponse> Gateway::complete_many(std::span<const ChatRequest> requests,
                                                 int parallelism) {
  if (parallelism < 1) throw ValidationError("parallelism must be >= 1");
  using Clock = std::chrono::steady_clock;
  for (const auto& r : requests) validate_request(r);

  std::vector<std::optional<ChatResponse>> results(requests.size());
  std::vector<std::string> keys(requests.size());
  std::vector<std::size_t> misses;
  std::vector<ChatRequest> miss_requests;
  for (std::size_t i = 0; i < requests.size(); ++i) {
    if (cache_) {
      keys[i] = cache_key(requests[i]);
      auto start = Clock::now();
      if (auto hit = cache_->get(keys[i])) {
        auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(Clock::now() - start);
        results[i] = ChatResponse{std::move(*hit), BackendKind::cache, ms.count()};
        ledger_.record(requests[i].stage, BackendKind::cache);
        continue;
      }
    }
    misses.push_back(i);
    miss_requests.push_back(requests[i]);
  }

  std::map<std::size_t, std::string> failures;
  if (!miss_requests.empty()) {
    auto start = Clock::now();
    auto outcomes = backend_->send_batch(miss_requests, parallelism);
    auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(Clock::now() - start);
    for (std::size_t m = 0; m < misses.size(); ++m) {
      const std::size_t i = misses[m];
      ledger_.record(requests[i].stage, backend_->kind());
      auto& outcome = outcomes[m];
      if (!outcome.content) {
        if (requests.size() == 1) std::rethrow_exception(outcome.error);
        failures[i] = describe(outcome.error);
        continue;
      }
      if (cache_) cache_->put(keys[i], *outcome.content);
      results[i] = ChatResponse{std::move(*outcome.content), backend_->kind(), ms.count()};
    }
  }

  if (!failures.empty()) throw BatchError(std::move(results), std::move(failures));
  std::vector<ChatResponse> out;
  out.reserve(results.size());
  for (auto& r : results) out.push_back(std::move(*r));
  return out;
}

}  // namespace gqa
