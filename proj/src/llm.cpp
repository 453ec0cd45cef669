#include "kgr3/llm.hpp"

#include <ctime>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

namespace kgr3 {

using json = nlohmann::json;

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const auto secs = std::chrono::system_clock::to_time_t(now);
  const auto ms =
      std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  std::tm tm{};
  gmtime_r(&secs, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%S", &tm);
  char out[40];
  std::snprintf(out, sizeof(out), "%s.%03dZ", buf, static_cast<int>(ms));
  return out;
}

namespace {

bool is_transient_status(int status) { return status == 408 || status == 429 || status >= 500; }

class SemaphoreSlot {
 public:
  explicit SemaphoreSlot(std::counting_semaphore<>& sem) : sem_(sem) { sem_.acquire(); }
  ~SemaphoreSlot() { sem_.release(); }
  SemaphoreSlot(const SemaphoreSlot&) = delete;
  SemaphoreSlot& operator=(const SemaphoreSlot&) = delete;

 private:
  std::counting_semaphore<>& sem_;
};

}  // namespace

std::string_view to_string(Role role) {
  switch (role) {
    case Role::kSystem:
      return "system";
    case Role::kUser:
      return "user";
    case Role::kAssistant:
      return "assistant";
  }
  return "?";
}

Role parse_role(std::string_view text) {
  if (text == "system") return Role::kSystem;
  if (text == "user") return Role::kUser;
  if (text == "assistant") return Role::kAssistant;
  throw ParseError("unknown chat role '" + std::string(text) + "'");
}

void to_json(json& j, const ChatMessage& message) {
  j = json{{"role", to_string(message.role)}, {"content", message.content}};
}

void from_json(const json& j, ChatMessage& message) {
  message.role = parse_role(j.at("role").get<std::string>());
  message.content = j.at("content").get<std::string>();
}

std::string_view to_string(Stage stage) {
  return stage == Stage::kReasoning ? "reasoning" : "rerank";
}

ProtocolError::ProtocolError(int status, std::string body, int attempts)
    : Error("chat endpoint returned status " + std::to_string(status) + ": " + body),
      status_(status),
      body_(std::move(body)),
      attempts_(attempts) {}

json to_json(const AuditRecord& record) {
  json j{{"timestamp", record.timestamp}, {"query_id", record.query_id},
         {"stage", record.stage},         {"messages", record.messages},
         {"response", record.response},   {"attempts", record.attempts}};
  if (!record.error.empty()) j["error"] = record.error;
  return j;
}

AuditRecord audit_record_from_json(const json& j) {
  AuditRecord record;
  record.timestamp = j.value("timestamp", "");
  record.query_id = j.value("query_id", "");
  record.stage = j.value("stage", "");
  record.messages = j.at("messages").get<std::vector<ChatMessage>>();
  record.response = j.value("response", "");
  record.attempts = j.value("attempts", 0);
  record.error = j.value("error", "");
  return record;
}

AuditLog::AuditLog(const std::filesystem::path& path) : path_(path), out_(path, std::ios::app) {
  if (!out_) throw Error("cannot open audit log " + path.string());
}

void AuditLog::append(const AuditRecord& record) {
  const auto line = to_json(record).dump();
  std::lock_guard lock(mutex_);
  out_ << line << '\n';
  out_.flush();
}

std::vector<AuditRecord> AuditLog::read(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open audit log " + path.string());
  std::vector<AuditRecord> records;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    records.push_back(audit_record_from_json(json::parse(line)));
  }
  return records;
}

std::string ChatModel::complete(const std::vector<ChatMessage>& messages,
                                const RequestContext& context) {
  if (messages.empty()) throw Error("chat completion needs at least one message");
  for (const auto& m : messages) {
    if (m.role != Role::kSystem && m.content.empty()) {
      throw Error("chat message with role " + std::string(to_string(m.role)) + " has empty content");
    }
  }
  AuditRecord record;
  record.query_id = context.query_id;
  record.stage = std::string(to_string(context.stage));
  record.messages = messages;
  std::exception_ptr failure;
  try {
    Reply reply = do_complete(messages, context);
    if (audit_) {
      record.timestamp = utc_timestamp();
      record.response = reply.text;
      record.attempts = reply.attempts;
      audit_->append(record);
    }
    return std::move(reply.text);
  } catch (const TransportError& e) {
    record.attempts = e.attempts();
    record.error = e.what();
    failure = std::current_exception();
  } catch (const ProtocolError& e) {
    record.attempts = e.attempts();
    record.error = e.what();
    failure = std::current_exception();
  } catch (const std::exception& e) {
    record.attempts = 1;
    record.error = e.what();
    failure = std::current_exception();
  }
  if (audit_) {
    record.timestamp = utc_timestamp();
    audit_->append(record);
  }
  std::rethrow_exception(failure);
}

void LlmEndpointConfig::validate() const {
  if (max_retries < 0) throw ConfigError("llm endpoint: max_retries must be >= 0");
  if (max_concurrency < 1) throw ConfigError("llm endpoint: max_concurrency must be >= 1");
  if (temperature < 0) throw ConfigError("llm endpoint: temperature must be >= 0");
  if (max_tokens < 1) throw ConfigError("llm endpoint: max_tokens must be >= 1");
  if (base_url.empty()) throw ConfigError("llm endpoint: base_url is empty");
}

json chat_request_body(const std::vector<ChatMessage>& messages, const LlmEndpointConfig& config) {
  return json{{"model", config.model},
              {"messages", messages},
              {"temperature", config.temperature},
              {"max_tokens", config.max_tokens}};
}

std::string parse_chat_response(std::string_view body, int status) {
  json doc = json::parse(body, nullptr, false);
  if (doc.is_discarded()) throw ProtocolError(status, "response is not JSON: " + std::string(body), 1);
  try {
    const auto& content = doc.at("choices").at(0).at("message").at("content");
    if (content.is_null()) return {};
    return content.get<std::string>();
  } catch (const json::exception&) {
    throw ProtocolError(status, "response lacks choices[0].message.content: " + std::string(body), 1);
  }
}

HttpChatModel::HttpChatModel(LlmEndpointConfig config) : config_(std::move(config)) {
  config_.validate();
  in_flight_ = std::make_unique<std::counting_semaphore<>>(config_.max_concurrency);
}

std::size_t HttpChatModel::max_concurrency() const {
  return static_cast<std::size_t>(config_.max_concurrency);
}

ChatModel::Reply HttpChatModel::do_complete(const std::vector<ChatMessage>& messages,
                                            const RequestContext& context) {
  SemaphoreSlot slot(*in_flight_);
  const std::string body = chat_request_body(messages, config_).dump();
  const int max_attempts = config_.max_retries + 1;

  httplib::Client client(config_.base_url);
  const auto timeout_s = std::chrono::duration_cast<std::chrono::seconds>(config_.timeout);
  const auto timeout_us =
      std::chrono::duration_cast<std::chrono::microseconds>(config_.timeout - timeout_s);
  client.set_connection_timeout(timeout_s.count(), timeout_us.count());
  client.set_read_timeout(timeout_s.count(), timeout_us.count());
  client.set_write_timeout(timeout_s.count(), timeout_us.count());
  if (!config_.api_key.empty()) client.set_bearer_token_auth(config_.api_key);

  std::string last_failure;
  int last_status = 0;
  std::string last_body;
  for (int attempt = 0; attempt < max_attempts; ++attempt) {
    if (attempt > 0) {
      const auto delay = config_.initial_backoff * (1LL << std::min(attempt - 1, 30));
      spdlog::debug("query {}: retrying in {} ms ({})", context.query_id, delay.count(), last_failure);
      std::this_thread::sleep_for(delay);
    }
    auto result = client.Post(config_.path, body, "application/json");
    if (!result) {
      last_status = 0;
      last_failure = "transport failure: " + httplib::to_string(result.error());
      continue;
    }
    if (result->status >= 200 && result->status < 300) {
      try {
        return {parse_chat_response(result->body, result->status), attempt + 1};
      } catch (const ProtocolError& e) {
        throw ProtocolError(e.status(), e.body(), attempt + 1);
      }
    }
    if (!is_transient_status(result->status)) {
      throw ProtocolError(result->status, result->body, attempt + 1);
    }
    last_status = result->status;
    last_body = result->body;
    last_failure = "status " + std::to_string(result->status);
  }
  if (last_status != 0) throw ProtocolError(last_status, last_body, max_attempts);
  throw TransportError(config_.base_url + config_.path + ": " + last_failure + " after " +
                           std::to_string(max_attempts) + " attempts",
                       max_attempts);
}

std::string format_mock_reply(Stage stage, const std::string& answer) {
  if (stage == Stage::kReasoning) return "The possible answers: [" + answer + "]";
  return answer;
}

ChatModel::Reply OracleChatModel::do_complete(const std::vector<ChatMessage>&,
                                              const RequestContext& context) {
  if (context.candidate_labels.empty()) return {format_mock_reply(context.stage, ""), 1};
  if (context.ground_truth_label) {
    for (const auto& label : context.candidate_labels) {
      if (label == *context.ground_truth_label) return {format_mock_reply(context.stage, label), 1};
    }
  }
  return {format_mock_reply(context.stage, context.candidate_labels.front()), 1};
}

ChatModel::Reply AdversarialChatModel::do_complete(const std::vector<ChatMessage>&,
                                                   const RequestContext& context) {
  if (context.candidate_labels.empty()) return {format_mock_reply(context.stage, ""), 1};
  for (const auto& label : context.candidate_labels) {
    if (!context.ground_truth_label || label != *context.ground_truth_label) {
      return {format_mock_reply(context.stage, label), 1};
    }
  }
  return {format_mock_reply(context.stage, context.candidate_labels.front()), 1};
}

ScriptedChatModel::ScriptedChatModel(std::vector<std::string> replies, bool cycle)
    : replies_(std::move(replies)), cycle_(cycle) {
  if (cycle_ && replies_.empty()) throw ConfigError("cycling transcript needs at least one reply");
}

std::unique_ptr<ScriptedChatModel> ScriptedChatModel::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open transcript " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError("transcript " + path.string() + ": " + e.what());
  }
  if (doc.is_array()) return std::make_unique<ScriptedChatModel>(doc.get<std::vector<std::string>>());
  return std::make_unique<ScriptedChatModel>(doc.at("replies").get<std::vector<std::string>>(),
                                             doc.value("cycle", false));
}

ChatModel::Reply ScriptedChatModel::do_complete(const std::vector<ChatMessage>&,
                                                const RequestContext&) {
  const std::size_t index = next_.fetch_add(1);
  if (index >= replies_.size()) {
    if (!cycle_) {
      throw Error("scripted transcript exhausted after " + std::to_string(replies_.size()) +
                  " replies");
    }
    return {replies_[index % replies_.size()], 1};
  }
  return {replies_[index], 1};
}

}  // namespace kgr3
