#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "kgr3/error.hpp"

namespace kgr3 {

enum class Role : std::uint8_t { kSystem, kUser, kAssistant };

std::string_view to_string(Role role);
Role parse_role(std::string_view text);

struct ChatMessage {
  Role role = Role::kUser;
  std::string content;

  friend bool operator==(const ChatMessage&, const ChatMessage&) = default;
};

void to_json(nlohmann::json& j, const ChatMessage& message);
void from_json(const nlohmann::json& j, ChatMessage& message);

enum class Stage : std::uint8_t { kReasoning, kRerank };
std::string_view to_string(Stage stage);

// Out-of-band facts about a request. Only the oracle and adversarial mocks
// read the ground truth and candidate labels; wire clients ignore them.
struct RequestContext {
  std::string query_id;
  Stage stage = Stage::kReasoning;
  std::optional<std::string> ground_truth_label;
  std::vector<std::string> candidate_labels;
};

class TransportError : public Error {
 public:
  TransportError(const std::string& what, int attempts) : Error(what), attempts_(attempts) {}
  int attempts() const { return attempts_; }

 private:
  int attempts_;
};

class ProtocolError : public Error {
 public:
  ProtocolError(int status, std::string body, int attempts);
  int status() const { return status_; }
  const std::string& body() const { return body_; }
  int attempts() const { return attempts_; }

 private:
  int status_;
  std::string body_;
  int attempts_;
};

struct AuditRecord {
  std::string timestamp;
  std::string query_id;
  std::string stage;
  std::vector<ChatMessage> messages;
  std::string response;
  int attempts = 0;
  std::string error;  // empty on success
};

nlohmann::json to_json(const AuditRecord& record);
AuditRecord audit_record_from_json(const nlohmann::json& j);

// Append-only line-delimited JSON log, safe to share between threads.
class AuditLog {
 public:
  explicit AuditLog(const std::filesystem::path& path);
  void append(const AuditRecord& record);
  const std::filesystem::path& path() const { return path_; }

  static std::vector<AuditRecord> read(const std::filesystem::path& path);

 private:
  std::filesystem::path path_;
  std::mutex mutex_;
  std::ofstream out_;
};

class ChatModel {
 public:
  virtual ~ChatModel() = default;

  // Returns the assistant text. Every call, successful or not, is appended
  // to the audit log when one is attached.
  std::string complete(const std::vector<ChatMessage>& messages, const RequestContext& context);

  void set_audit_log(std::shared_ptr<AuditLog> log) { audit_ = std::move(log); }
  // Upper bound on useful parallel calls; 1 for order-sensitive models.
  virtual std::size_t max_concurrency() const { return 1; }

 protected:
  struct Reply {
    std::string text;
    int attempts = 1;
  };
  virtual Reply do_complete(const std::vector<ChatMessage>& messages,
                            const RequestContext& context) = 0;

 private:
  std::shared_ptr<AuditLog> audit_;
};

struct LlmEndpointConfig {
  std::string base_url = "http://127.0.0.1:8000";
  std::string path = "/v1/chat/completions";
  std::string model = "default";
  double temperature = 0.0;
  int max_tokens = 256;
  std::chrono::milliseconds timeout{60'000};
  int max_retries = 3;
  int max_concurrency = 4;
  std::chrono::milliseconds initial_backoff{1'000};
  std::string api_key;

  void validate() const;
};

nlohmann::json chat_request_body(const std::vector<ChatMessage>& messages,
                                 const LlmEndpointConfig& config);
// Extracts choices[0].message.content; throws ProtocolError when absent.
std::string parse_chat_response(std::string_view body, int status);

// Client for the open chat-completion wire schema. Transient failures
// (connection errors, 408, 429, 5xx) are retried with exponential backoff:
// initial_backoff * 2^attempt, no jitter.
class HttpChatModel : public ChatModel {
 public:
  explicit HttpChatModel(LlmEndpointConfig config);
  std::size_t max_concurrency() const override;
  const LlmEndpointConfig& config() const { return config_; }

 protected:
  Reply do_complete(const std::vector<ChatMessage>& messages, const RequestContext& context) override;

 private:
  LlmEndpointConfig config_;
  std::unique_ptr<std::counting_semaphore<>> in_flight_;
};

// Answers with the ground-truth label when it is among the candidates,
// otherwise with the first candidate.
class OracleChatModel : public ChatModel {
 public:
  std::size_t max_concurrency() const override { return 8; }

 protected:
  Reply do_complete(const std::vector<ChatMessage>& messages, const RequestContext& context) override;
};

// Answers with the first candidate whose label differs from the ground truth.
class AdversarialChatModel : public ChatModel {
 public:
  std::size_t max_concurrency() const override { return 8; }

 protected:
  Reply do_complete(const std::vector<ChatMessage>& messages, const RequestContext& context) override;
};

// Replays a fixed list of replies in call order. Without `cycle`, running
// past the end raises Error.
class ScriptedChatModel : public ChatModel {
 public:
  explicit ScriptedChatModel(std::vector<std::string> replies, bool cycle = false);
  // JSON array of strings, or {"replies": [...], "cycle": bool}.
  static std::unique_ptr<ScriptedChatModel> from_file(const std::filesystem::path& path);
  std::size_t calls() const { return next_.load(); }

 protected:
  Reply do_complete(const std::vector<ChatMessage>& messages, const RequestContext& context) override;

 private:
  std::vector<std::string> replies_;
  bool cycle_;
  std::atomic<std::size_t> next_{0};
};

// ISO-8601 UTC with milliseconds.
std::string utc_timestamp();

// Mock reply in the format the given stage expects.
std::string format_mock_reply(Stage stage, const std::string& answer);

}  // namespace kgr3
