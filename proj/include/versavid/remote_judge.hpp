#pragma once
// Chat-completion judge backend over HTTP(S). The bearer token is read from the
// JUDGE_API_KEY environment variable only.

#include <cstdlib>
#include <memory>
#include <regex>
#include <string>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "versavid/judge.hpp"

namespace versavid {

struct ParsedUrl {
  std::string scheme_host_port;
  std::string path;
};

inline ParsedUrl split_endpoint(const std::string& url) {
  static const std::regex re(R"(^(https?://[^/]+)(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(url, m, re)) {
    throw Error(ErrorCode::InvalidConfig, "endpoint url '" + url + "' is not http(s)://host[:port]/path");
  }
  return {m[1].str(), m[2].matched ? m[2].str() : std::string("/")};
}

class RemoteJudgeBackend : public JudgeBackend {
 public:
  explicit RemoteJudgeBackend(JudgeBackendConfig config, AuditLog* audit = nullptr)
      : config_(std::move(config)), url_(split_endpoint(config_.endpoint_url)), audit_(audit) {
    if (const char* key = std::getenv("JUDGE_API_KEY")) api_key_ = key;
  }

  std::string complete(const JudgeRequest& request) override {
    httplib::Client client(url_.scheme_host_port);
    const auto secs = static_cast<time_t>(config_.timeout_s);
    const auto usecs = static_cast<time_t>((config_.timeout_s - static_cast<double>(secs)) * 1e6);
    client.set_connection_timeout(secs, usecs);
    client.set_read_timeout(secs, usecs);
    client.set_write_timeout(secs, usecs);

    httplib::Headers headers;
    if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);

    const nlohmann::json body{
        {"model", config_.model_name},
        {"temperature", config_.temperature},
        {"messages", nlohmann::json::array({{{"role", "user"}, {"content", request.rendered_prompt}}})}};
    const auto payload = body.dump();
    auto res = client.Post(url_.path, headers, payload, "application/json");
    if (!res) {
      audit({{"request", body}, {"error", httplib::to_string(res.error())}});
      throw TransportError("POST " + config_.endpoint_url + ": " + httplib::to_string(res.error()));
    }
    audit({{"request", body}, {"status", res->status}, {"response", res->body}});
    if (res->status >= 500 || res->status == 429) {
      throw TransportError("judge endpoint returned HTTP " + std::to_string(res->status));
    }
    if (res->status != 200) {
      throw Error(ErrorCode::BackendUnavailable,
                  "judge endpoint returned HTTP " + std::to_string(res->status));
    }
    const auto reply = nlohmann::json::parse(res->body, nullptr, false);
    if (reply.is_discarded()) return res->body;
    try {
      return reply.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception&) {
      // Not chat-completion shaped; let verdict parsing decide.
      return res->body;
    }
  }

 private:
  void audit(const nlohmann::json& rec) {
    if (audit_) audit_->write(rec);
  }

  JudgeBackendConfig config_;
  ParsedUrl url_;
  AuditLog* audit_;
  std::string api_key_;
};

}  // namespace versavid
