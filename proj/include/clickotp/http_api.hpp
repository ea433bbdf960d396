#pragma once

// REST endpoints over AuthService. Handlers hold no mutable state of their
// own; everything shared lives behind the module contracts.

#include <cstdlib>
#include <functional>
#include <string>
#include <utility>

#include <httplib.h>
#include <json.hpp>

#include "clickotp/auth.hpp"
#include "clickotp/encoding.hpp"
#include "clickotp/error.hpp"
#include "clickotp/timings.hpp"

namespace clickotp {

using json = nlohmann::json;

inline int http_status_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::Validation:
    case ErrorCode::OutOfBounds:
    case ErrorCode::Domain: return 422;
    case ErrorCode::Conflict:
    case ErrorCode::State:
    case ErrorCode::Protocol:
    case ErrorCode::AlreadyUsed: return 409;
    case ErrorCode::NotFound:
    case ErrorCode::Authorization: return 404;
    case ErrorCode::Expired: return 410;
    case ErrorCode::Locked: return 423;
    case ErrorCode::Unavailable:
    case ErrorCode::PoolExhausted:
    case ErrorCode::Delivery: return 503;
    case ErrorCode::Refused: return 429;
    case ErrorCode::Integrity:
    case ErrorCode::Config: return 500;
  }
  return 500;
}

/// "host:port" from BIND_ADDR; defaults to 127.0.0.1:8080.
struct BindAddress {
  std::string host = "127.0.0.1";
  int port = 8080;

  static BindAddress parse(const std::string& text) {
    const auto colon = text.rfind(':');
    if (colon == std::string::npos || colon == 0 || colon + 1 == text.size()) {
      fail(ErrorCode::Config, "BIND_ADDR must look like host:port");
    }
    BindAddress out;
    out.host = text.substr(0, colon);
    char* end = nullptr;
    const long port = std::strtol(text.c_str() + colon + 1, &end, 10);
    if (*end != '\0' || port < 0 || port > 65535) fail(ErrorCode::Config, "BIND_ADDR port out of range");
    out.port = static_cast<int>(port);
    return out;
  }

  static BindAddress from_env() {
    const char* v = std::getenv("BIND_ADDR");
    return v && *v ? parse(v) : BindAddress{};
  }
};

struct ApiOptions {
  std::string static_dir;                           // optional web assets
  std::size_t max_body_bytes = 8u * 1024u * 1024u;  // 5 MiB image, base64-inflated
};

inline json challenge_json(const Challenge& ch) {
  return {{"level", ch.level}, {"images", ch.images}};
}

inline json click_json(const ClickResult& r) {
  if (r.finalize_ready()) return {{"finalize_ready", true}};
  return challenge_json(*r.next);
}

class ApiServer {
 public:
  struct BadRequest : std::runtime_error {
    using std::runtime_error::runtime_error;
  };

  using ClockFn = std::function<Timestamp()>;

  ApiServer(AuthService& auth, TimingLedger& timings, RandomSource& rng,
            ClockFn clock = [] { return Clock::now(); }, ApiOptions options = {})
      : auth_(auth), timings_(timings), rng_(rng), clock_(std::move(clock)), options_(std::move(options)) {
    routes();
  }

  httplib::Server& http() noexcept { return server_; }

  int bind_to_any_port(const std::string& host) { return server_.bind_to_any_port(host); }
  bool bind(const std::string& host, int port) { return server_.bind_to_port(host, port); }
  bool listen_after_bind() { return server_.listen_after_bind(); }
  void stop() { server_.stop(); }
  void wait_until_ready() const { server_.wait_until_ready(); }

 private:
  static void send_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  static void send_error(httplib::Response& res, const Error& e) {
    send_json(res, http_status_for(e.code()), {{"error", std::string(to_string(e.code()))}, {"message", e.what()}});
  }

  static json parse_body(const httplib::Request& req) {
    json body = json::parse(req.body, nullptr, false);
    if (body.is_discarded() || !body.is_object()) throw BadRequest("body is not a JSON object");
    return body;
  }

  /// Runs a handler, translating library errors and malformed JSON into
  /// HTTP statuses.
  template <class F>
  static void guarded(httplib::Response& res, F&& f) {
    try {
      f();
    } catch (const Error& e) {
      send_error(res, e);
    } catch (const BadRequest& e) {
      send_json(res, 400, {{"error", "bad_request"}, {"message", e.what()}});
    } catch (const json::exception& e) {
      send_json(res, 400, {{"error", "bad_request"}, {"message", e.what()}});
    } catch (const std::exception& e) {
      send_json(res, 500, {{"error", "internal"}, {"message", e.what()}});
    }
  }

  void routes() {
    server_.set_payload_max_length(options_.max_body_bytes);
    if (!options_.static_dir.empty()) server_.set_mount_point("/", options_.static_dir);

    server_.Get("/healthz", [](const httplib::Request&, httplib::Response& res) {
      send_json(res, 200, {{"status", "ok"}});
    });

    server_.Post("/api/users", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        const json body = parse_body(req);
        std::map<std::string, std::string> details;
        if (body.contains("details") && body["details"].is_object()) {
          for (const auto& [k, v] : body["details"].items()) details[k] = v.is_string() ? v.get<std::string>() : v.dump();
        }
        const std::string id = auth_.register_user(body.at("username").get<std::string>(),
                                                   body.at("mobile").get<std::string>(), std::move(details),
                                                   clock_());
        send_json(res, 201, {{"user_id", id}});
      });
    });

    server_.Post(R"(/api/users/([A-Za-z0-9_-]+)/images)", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        const json body = parse_body(req);
        const int level = body.at("level").get<int>();
        const auto status = parse_status(body.at("status").get<std::string>());
        if (!status) fail(ErrorCode::Validation, "status must be LeftToRight, RightToLeft, TopToBottom or BottomToTop");
        const auto image = base64_decode(body.at("image_base64").get<std::string>());
        if (!image) fail(ErrorCode::Validation, "image_base64 is not valid base64");
        const AttachResult r = auth_.attach_image_password(req.matches[1], level, *image,
                                                           body.at("content_type").get<std::string>(), *status,
                                                           clock_());
        json out = {{"image_id", r.image_id}};
        if (r.registration_complete) out["registration_complete"] = true;
        send_json(res, 201, out);
      });
    });

    server_.Post("/api/sessions", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        const json body = parse_body(req);
        const std::string username = body.at("username").get<std::string>();
        try {
          const LoginStart start = auth_.start_login(username, clock_(), rng_);
          json out = challenge_json(start.challenge);
          out["session_id"] = start.session_id;
          send_json(res, 201, out);
        } catch (const LockedError& e) {
          send_json(res, 423, {{"error", "authentication unavailable"}, {"retry_after", e.retry_after().count()}});
        } catch (const Error&) {
          // Unknown user, unfinished registration and transient refusals all
          // share this one response.
          send_json(res, 503, {{"error", "authentication unavailable"}, {"retry_after", 0}});
        }
      });
    });

    server_.Get(R"(/api/sessions/([A-Za-z0-9_-]+))", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        const auto ch = auth_.current_challenge(req.matches[1]);
        send_json(res, 200, ch ? challenge_json(*ch) : json{{"finalize_ready", true}});
      });
    });

    server_.Get(R"(/api/sessions/([A-Za-z0-9_-]+)/images/([A-Za-z0-9_-]+))",
                [this](const httplib::Request& req, httplib::Response& res) {
                  guarded(res, [&] {
                    const SessionImage img = auth_.session_image(req.matches[1], req.matches[2]);
                    res.status = 200;
                    res.set_header("Cache-Control", "no-store");
                    res.set_content(std::string(img.data.begin(), img.data.end()), img.content_type);
                  });
                });

    server_.Post(R"(/api/sessions/([A-Za-z0-9_-]+)/clicks)", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        const json body = parse_body(req);
        ClickEvent click;
        click.image_id = body.at("image_id").get<std::string>();
        click.x = body.at("x").get<double>();
        click.y = body.at("y").get<double>();
        click.rendered_w = body.at("rendered_w").get<double>();
        click.rendered_h = body.at("rendered_h").get<double>();
        send_json(res, 200, click_json(auth_.submit_click(req.matches[1], click, clock_())));
      });
    });

    server_.Post(R"(/api/sessions/([A-Za-z0-9_-]+)/finalize)", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        const LoginOutcome outcome = auth_.finalize(req.matches[1], clock_());
        send_json(res, 200, {{"result", outcome == LoginOutcome::Succeeded ? "success" : "failure"}});
      });
    });

    server_.Get("/api/metrics/timings.csv", [this](const httplib::Request&, httplib::Response& res) {
      res.status = 200;
      res.set_content(timings_.export_csv(), "text/csv");
    });
  }

  AuthService& auth_;
  TimingLedger& timings_;
  SynchronizedRandom rng_;
  ClockFn clock_;
  ApiOptions options_;
  httplib::Server server_;
};

}  // namespace clickotp
