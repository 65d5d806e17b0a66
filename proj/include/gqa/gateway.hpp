#pragma once

#include <chrono>
#include <cstdint>
#include <deque>
#include <exception>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gqa/core.hpp"

namespace gqa {

enum class Role { system, user, assistant };
std::string_view to_string(Role role);

struct ChatMessage {
  Role role = Role::user;
  std::string content;

  friend bool operator==(const ChatMessage&, const ChatMessage&) = default;
};

struct ChatRequest {
  std::string model_id;
  std::vector<ChatMessage> messages;
  double temperature = 0.0;
  int max_tokens = 1;
  /// Distinguishes otherwise identical requests (one per self-consistency run).
  std::string seed_tag;
  /// Ledger / script queue label. Not part of the cache key.
  std::string stage;
};

/// Throws ValidationError when messages is empty, temperature is outside
/// [0, 2] or max_tokens < 1.
void validate_request(const ChatRequest& request);

enum class BackendKind { remote, scripted, cache };
std::string_view to_string(BackendKind kind);

struct ChatResponse {
  std::string content;
  BackendKind backend = BackendKind::remote;
  std::int64_t latency_ms = 0;
};

class GatewayError : public Error {
 public:
  GatewayError(const std::string& what, int status = 0) : Error(what), status_(status) {}
  /// HTTP status of the last attempt, 0 for transport failures.
  int status() const { return status_; }

 private:
  int status_;
};

class ScriptUnderrun : public GatewayError {
 public:
  explicit ScriptUnderrun(const std::string& stage)
      : GatewayError("script underrun for stage '" + stage + "'") {}
};

class CacheMiss : public GatewayError {
 public:
  explicit CacheMiss(const std::string& key) : GatewayError("cache miss for key " + key) {}
};

/// Raised by complete_many when at least one member failed.
class BatchError : public GatewayError {
 public:
  BatchError(std::vector<std::optional<ChatResponse>> partial, std::map<std::size_t, std::string> failures);

  const std::map<std::size_t, std::string>& failures() const { return failures_; }
  /// Responses of the members that succeeded, in request order.
  const std::vector<std::optional<ChatResponse>>& partial() const { return partial_; }

 private:
  std::vector<std::optional<ChatResponse>> partial_;
  std::map<std::size_t, std::string> failures_;
};

/// Per-stage call accounting. Counters only grow.
class CallLedger {
 public:
  void record(const std::string& stage, BackendKind served_by);

  std::map<std::string, std::uint64_t> counts() const;
  std::uint64_t count(const std::string& stage) const;
  /// Sum over every stage whose label starts with prefix.
  std::uint64_t count_prefix(const std::string& prefix) const;
  std::uint64_t total() const;
  std::uint64_t served_by(BackendKind kind) const;

 private:
  mutable std::mutex mu_;
  std::map<std::string, std::uint64_t> counts_;
  std::map<BackendKind, std::uint64_t> served_;
  std::uint64_t total_ = 0;
};

/// A source of completions. Implementations must be safe to call concurrently.
class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  virtual BackendKind kind() const = 0;
  virtual std::string send(const ChatRequest& request) = 0;

  /// Serves a batch. The default fans out over `parallelism` threads; results
  /// hold either the reply or the captured exception, in request order.
  struct Outcome {
    std::optional<std::string> content;
    std::exception_ptr error;
  };
  virtual std::vector<Outcome> send_batch(std::span<const ChatRequest> requests, int parallelism);
};

/// Replies come from per-stage FIFO queues, independent of prompt text.
class ScriptedBackend : public ChatBackend {
 public:
  ScriptedBackend() = default;
  explicit ScriptedBackend(std::map<std::string, std::deque<std::string>> queues);

  /// Reads every `<stage>.json` (a JSON array of strings) in dir.
  static std::shared_ptr<ScriptedBackend> from_directory(const std::filesystem::path& dir);

  void push(const std::string& stage, std::string reply);
  std::size_t remaining(const std::string& stage) const;

  BackendKind kind() const override { return BackendKind::scripted; }
  std::string send(const ChatRequest& request) override;
  /// Sequential, so queue order follows request order.
  std::vector<Outcome> send_batch(std::span<const ChatRequest> requests, int parallelism) override;

 private:
  mutable std::mutex mu_;
  std::map<std::string, std::deque<std::string>> queues_;
};

struct RemoteSettings {
  std::string api_base;  // e.g. https://api.openai.com/v1
  std::string api_key;
  int max_attempts = 3;
  std::chrono::milliseconds backoff_base{1000};
  std::chrono::milliseconds backoff_cap{4000};
  std::chrono::seconds timeout{120};

  /// Reads LLM_API_BASE and LLM_API_KEY.
  static RemoteSettings from_env();
};

/// OpenAI-style chat-completions endpoint.
class RemoteBackend : public ChatBackend {
 public:
  explicit RemoteBackend(RemoteSettings settings);

  BackendKind kind() const override { return BackendKind::remote; }
  std::string send(const ChatRequest& request) override;

  static std::string request_body(const ChatRequest& request);
  /// Extracts choices[0].message.content; throws GatewayError otherwise.
  static std::string response_content(const std::string& body);

 private:
  RemoteSettings settings_;
  std::string scheme_host_;
  std::string path_prefix_;
};

/// Backend for replay: every request must already be in the cache.
class NullBackend : public ChatBackend {
 public:
  BackendKind kind() const override { return BackendKind::cache; }
  std::string send(const ChatRequest& request) override;
};

std::string sha256_hex(std::string_view data);

/// Hex SHA-256 over (model_id, messages, temperature, max_tokens, seed_tag).
std::string cache_key(const ChatRequest& request);

/// One file per key under a directory.
class ResponseCache {
 public:
  explicit ResponseCache(std::filesystem::path dir);

  std::optional<std::string> get(const std::string& key) const;
  void put(const std::string& key, const std::string& content);
  const std::filesystem::path& dir() const { return dir_; }

 private:
  std::filesystem::path dir_;
};

class Gateway {
 public:
  /// cache may be null. With a NullBackend, a cache is required.
  Gateway(std::shared_ptr<ChatBackend> backend, std::shared_ptr<ResponseCache> cache = nullptr);

  ChatResponse complete(const ChatRequest& request);
  /// Responses come back in request order whatever the completion order.
  std::vector<ChatResponse> complete_many(std::span<const ChatRequest> requests, int parallelism);

  const CallLedger& ledger() const { return ledger_; }
  BackendKind backend_kind() const { return backend_->kind(); }

 private:
  std::shared_ptr<ChatBackend> backend_;
  std::shared_ptr<ResponseCache> cache_;
  CallLedger ledger_;
};

}  // namespace gqa
