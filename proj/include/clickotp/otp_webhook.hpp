#pragma once

// Webhook transport. Kept apart from otp.hpp so that only translation units
// that actually post over HTTP pay for the cpp-httplib include.

#include <memory>
#include <string>

#include <httplib.h>
#include <json.hpp>

#include "clickotp/otp.hpp"

namespace clickotp {

/// "http://host[:port][/path]" split into httplib's base URL and path.
struct HttpTarget {
  std::string base;  // scheme://host[:port]
  std::string path;  // always starts with '/'

  static HttpTarget parse(const std::string& url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos || url.compare(0, scheme_end, "http") != 0) {
      fail(ErrorCode::Config, "webhook URL must start with http://: " + url);
    }
    const auto path_start = url.find('/', scheme_end + 3);
    HttpTarget t;
    t.base = url.substr(0, path_start);
    t.path = path_start == std::string::npos ? "/" : url.substr(path_start);
    if (t.base.size() <= scheme_end + 3) fail(ErrorCode::Config, "webhook URL has no host: " + url);
    return t;
  }
};

/// POSTs {"session_id": "<id>", "otp": "<3 digits>"} as JSON.
class WebhookTransport final : public DeliveryTransport {
 public:
  explicit WebhookTransport(std::string url, std::chrono::seconds timeout = std::chrono::seconds(5))
      : url_(std::move(url)), target_(HttpTarget::parse(url_)), timeout_(timeout) {}

  TransportKind kind() const override { return TransportKind::WebhookPost; }
  std::string destination() const override { return url_; }

  static std::string body_for(const OtpKey& key) {
    nlohmann::json body = {{"session_id", key.session_id}, {"otp", key.digits.str()}};
    return body.dump();
  }

  void send(const OtpKey& key, const std::string&) override {
    httplib::Client client(target_.base);
    client.set_connection_timeout(timeout_);
    client.set_read_timeout(timeout_);
    client.set_write_timeout(timeout_);
    auto res = client.Post(target_.path, body_for(key), "application/json");
    if (!res) {
      fail(ErrorCode::Delivery, "webhook unreachable: " + httplib::to_string(res.error()));
    }
    if (res->status < 200 || res->status >= 300) {
      fail(ErrorCode::Delivery, "webhook answered HTTP " + std::to_string(res->status));
    }
  }

 private:
  std::string url_;
  HttpTarget target_;
  std::chrono::seconds timeout_;
};

inline std::unique_ptr<DeliveryTransport> make_transport(const OtpConfig& cfg) {
  switch (cfg.transport) {
    case TransportKind::ConsoleEcho: return std::make_unique<ConsoleEchoTransport>();
    case TransportKind::FileDrop: return std::make_unique<FileDropTransport>(cfg.file_dir);
    case TransportKind::WebhookPost: return std::make_unique<WebhookTransport>(cfg.webhook_url);
    case TransportKind::Memory: return std::make_unique<MemoryTransport>();
  }
  fail(ErrorCode::Config, "unknown transport");
}

}  // namespace clickotp
