#pragma once

#include <array>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>

#include "clickotp/error.hpp"
#include "clickotp/grid.hpp"
#include "clickotp/random.hpp"

namespace clickotp {

using Clock = std::chrono::system_clock;
using Timestamp = Clock::time_point;

inline constexpr std::chrono::seconds kDefaultOtpTtl{120};

/// Three grid labels; digit i names the cell to click at level i.
struct OtpDigits {
  std::array<GridLabel, 3> digits{GridLabel(1), GridLabel(1), GridLabel(1)};

  std::string str() const {
    std::string out;
    for (GridLabel d : digits) out.push_back(static_cast<char>('0' + d.value()));
    return out;
  }
  GridLabel at_level(int level) const { return digits.at(static_cast<std::size_t>(level - 1)); }

  static OtpDigits parse(std::string_view text) {
    if (text.size() != 3) fail(ErrorCode::Validation, "OTP must have exactly 3 digits");
    OtpDigits out;
    for (std::size_t i = 0; i < 3; ++i) {
      if (text[i] < '1' || text[i] > '9') fail(ErrorCode::Validation, "OTP digits must be 1..9");
      out.digits[i] = GridLabel(text[i] - '0');
    }
    return out;
  }
  friend bool operator==(const OtpDigits&, const OtpDigits&) = default;
};

enum class OtpState { Live, Consumed, Expired };

struct OtpKey {
  OtpDigits digits;
  Timestamp issued_at;
  std::chrono::seconds ttl = kDefaultOtpTtl;
  std::string session_id;
  OtpState state = OtpState::Live;

  bool past_ttl(Timestamp now) const { return now - issued_at > ttl; }
};

/// Thread-safe store of session keys. Each operation is atomic with respect
/// to the others, so concurrent consumers of one key see exactly one success.
class OtpStore {
 public:
  explicit OtpStore(std::chrono::seconds ttl = kDefaultOtpTtl) : ttl_(ttl) {
    if (ttl.count() <= 0) fail(ErrorCode::Config, "OTP TTL must be positive");
  }

  std::chrono::seconds ttl() const noexcept { return ttl_; }

  OtpKey generate(const std::string& session_id, RandomSource& rng, Timestamp now) {
    OtpKey key;
    for (auto& d : key.digits.digits) d = GridLabel(static_cast<int>(rng.uniform(1, 9)));
    key.issued_at = now;
    key.ttl = ttl_;
    key.session_id = session_id;

    std::lock_guard lock(mutex_);
    auto it = keys_.find(session_id);
    if (it != keys_.end() && it->second.state == OtpState::Live) {
      fail(ErrorCode::Conflict, "session already holds a live OTP");
    }
    keys_.insert_or_assign(session_id, key);
    return key;
  }

  OtpDigits consume(const std::string& session_id, Timestamp now) {
    std::lock_guard lock(mutex_);
    auto it = keys_.find(session_id);
    if (it == keys_.end()) fail(ErrorCode::NotFound, "no OTP for session");
    OtpKey& key = it->second;
    switch (key.state) {
      case OtpState::Consumed: fail(ErrorCode::AlreadyUsed, "OTP already used");
      case OtpState::Expired: fail(ErrorCode::Expired, "OTP expired");
      case OtpState::Live: break;
    }
    if (key.past_ttl(now)) {
      key.state = OtpState::Expired;
      fail(ErrorCode::Expired, "OTP expired");
    }
    key.state = OtpState::Consumed;
    return key.digits;
  }

  std::size_t sweep_expired(Timestamp now) {
    std::lock_guard lock(mutex_);
    std::size_t count = 0;
    for (auto& [id, key] : keys_) {
      if (key.state == OtpState::Live && key.past_ttl(now)) {
        key.state = OtpState::Expired;
        ++count;
      }
    }
    return count;
  }

  /// Drops terminal (consumed or expired) keys issued more than `age` ago.
  std::size_t purge_terminal(Timestamp now, std::chrono::seconds age) {
    std::lock_guard lock(mutex_);
    return std::erase_if(keys_, [&](const auto& kv) {
      return kv.second.state != OtpState::Live && now - kv.second.issued_at > age;
    });
  }

  void erase(const std::string& session_id) {
    std::lock_guard lock(mutex_);
    keys_.erase(session_id);
  }

  std::optional<OtpKey> peek(const std::string& session_id) const {
    std::lock_guard lock(mutex_);
    auto it = keys_.find(session_id);
    if (it == keys_.end()) return std::nullopt;
    return it->second;
  }

  std::size_t size() const {
    std::lock_guard lock(mutex_);
    return keys_.size();
  }

 private:
  std::chrono::seconds ttl_;
  mutable std::mutex mutex_;
  std::unordered_map<std::string, OtpKey> keys_;
};

enum class TransportKind { ConsoleEcho, FileDrop, WebhookPost, Memory };

constexpr std::string_view to_string(TransportKind k) noexcept {
  switch (k) {
    case TransportKind::ConsoleEcho: return "console";
    case TransportKind::FileDrop: return "file";
    case TransportKind::WebhookPost: return "webhook";
    case TransportKind::Memory: return "memory";
  }
  return "?";
}

struct DeliveryReceipt {
  TransportKind kind;
  std::string destination;
  std::string recipient;
  Timestamp delivered_at;
};

/// Out-of-band channel for session keys (stands in for the SMS modem).
class DeliveryTransport {
 public:
  virtual ~DeliveryTransport() = default;
  virtual TransportKind kind() const = 0;
  virtual std::string destination() const = 0;
  /// Writes the key; throws Error(Delivery) when the channel fails.
  virtual void send(const OtpKey& key, const std::string& recipient) = 0;
};

/// Session identifiers end up in file names and log lines.
inline bool is_safe_session_id(std::string_view id) {
  if (id.empty() || id.size() > 128) return false;
  for (char ch : id) {
    const bool ok = (ch >= 'a' && ch <= 'z') || (ch >= 'A' && ch <= 'Z') ||
                    (ch >= '0' && ch <= '9') || ch == '-' || ch == '_';
    if (!ok) return false;
  }
  return true;
}

/// One line "OTP <sid> <digits>" on a diagnostic stream.
class ConsoleEchoTransport final : public DeliveryTransport {
 public:
  explicit ConsoleEchoTransport(std::ostream& out = std::cerr) : out_(out) {}

  TransportKind kind() const override { return TransportKind::ConsoleEcho; }
  std::string destination() const override { return "console"; }

  void send(const OtpKey& key, const std::string&) override {
    std::lock_guard lock(mutex_);
    out_ << "OTP " << key.session_id << ' ' << key.digits.str() << '\n';
    out_.flush();
    if (!out_) fail(ErrorCode::Delivery, "console stream failed");
  }

 private:
  std::ostream& out_;
  std::mutex mutex_;
};

/// Writes `<dir>/otp-<sid>.txt` containing the digits and a newline.
class FileDropTransport final : public DeliveryTransport {
 public:
  explicit FileDropTransport(std::filesystem::path dir) : dir_(std::move(dir)) {}

  TransportKind kind() const override { return TransportKind::FileDrop; }
  std::string destination() const override { return dir_.string(); }

  static std::string file_name(std::string_view session_id) {
    return "otp-" + std::string(session_id) + ".txt";
  }

  std::filesystem::path path_for(std::string_view session_id) const {
    return dir_ / file_name(session_id);
  }

  void send(const OtpKey& key, const std::string&) override {
    if (!is_safe_session_id(key.session_id)) {
      fail(ErrorCode::Delivery, "session id not usable as a file name");
    }
    const auto final_path = path_for(key.session_id);
    const auto tmp_path = final_path.string() + ".tmp";
    {
      std::ofstream out(tmp_path, std::ios::binary | std::ios::trunc);
      if (!out) fail(ErrorCode::Delivery, "cannot write " + tmp_path);
      out << key.digits.str() << '\n';
      out.flush();
      if (!out) fail(ErrorCode::Delivery, "cannot write " + tmp_path);
    }
    std::error_code ec;
    std::filesystem::rename(tmp_path, final_path, ec);
    if (ec) fail(ErrorCode::Delivery, "cannot publish " + final_path.string() + ": " + ec.message());
  }

 private:
  std::filesystem::path dir_;
};

/// Keeps the last key per session in memory; used by simulations and tests.
class MemoryTransport final : public DeliveryTransport {
 public:
  TransportKind kind() const override { return TransportKind::Memory; }
  std::string destination() const override { return "memory"; }

  void send(const OtpKey& key, const std::string&) override {
    std::lock_guard lock(mutex_);
    inbox_[key.session_id] = key.digits;
    ++sent_;
  }

  std::optional<OtpDigits> take(const std::string& session_id) {
    std::lock_guard lock(mutex_);
    auto it = inbox_.find(session_id);
    if (it == inbox_.end()) return std::nullopt;
    OtpDigits d = it->second;
    inbox_.erase(it);
    return d;
  }

  std::size_t sent() const {
    std::lock_guard lock(mutex_);
    return sent_;
  }

 private:
  mutable std::mutex mutex_;
  std::unordered_map<std::string, OtpDigits> inbox_;
  std::size_t sent_ = 0;
};

/// Hands a live key to a transport. Never touches the store, so a key stays
/// spendable exactly once however often it is (re)delivered.
inline DeliveryReceipt deliver(const OtpKey& key, DeliveryTransport& transport,
                               const std::string& recipient = {},
                               Timestamp now = Clock::now()) {
  if (key.state != OtpState::Live) fail(ErrorCode::State, "only live keys can be delivered");
  transport.send(key, recipient);
  return {transport.kind(), transport.destination(), recipient, now};
}

/// Store plus configured transport.
class OtpService {
 public:
  OtpService(std::unique_ptr<DeliveryTransport> transport,
             std::chrono::seconds ttl = kDefaultOtpTtl)
      : store_(ttl), transport_(std::move(transport)) {
    if (!transport_) fail(ErrorCode::Config, "OTP transport missing");
  }

  OtpStore& store() noexcept { return store_; }
  const OtpStore& store() const noexcept { return store_; }
  DeliveryTransport& transport() noexcept { return *transport_; }

  /// Generates a key for the session and delivers it. Delivery runs outside
  /// the store lock; on failure the key stays live and the error propagates.
  DeliveryReceipt issue(const std::string& session_id, const std::string& recipient,
                        RandomSource& rng, Timestamp now) {
    const OtpKey key = store_.generate(session_id, rng, now);
    return deliver(key, *transport_, recipient, now);
  }

 private:
  OtpStore store_;
  std::unique_ptr<DeliveryTransport> transport_;
};

/// OTP_TTL_SECONDS, OTP_TRANSPORT, OTP_FILE_DIR, OTP_WEBHOOK_URL.
struct OtpConfig {
  std::chrono::seconds ttl = kDefaultOtpTtl;
  TransportKind transport = TransportKind::ConsoleEcho;
  std::string file_dir = ".";
  std::string webhook_url;

  static OtpConfig from_env() {
    OtpConfig cfg;
    if (const char* v = std::getenv("OTP_TTL_SECONDS"); v && *v) {
      char* end = nullptr;
      const long secs = std::strtol(v, &end, 10);
      if (*end != '\0' || secs <= 0) fail(ErrorCode::Config, "OTP_TTL_SECONDS must be a positive integer");
      cfg.ttl = std::chrono::seconds(secs);
    }
    if (const char* v = std::getenv("OTP_TRANSPORT"); v && *v) {
      const std::string_view kind(v);
      if (kind == "console") {
        cfg.transport = TransportKind::ConsoleEcho;
      } else if (kind == "file") {
        cfg.transport = TransportKind::FileDrop;
      } else if (kind == "webhook") {
        cfg.transport = TransportKind::WebhookPost;
      } else {
        fail(ErrorCode::Config, "OTP_TRANSPORT must be console, file or webhook");
      }
    }
    if (const char* v = std::getenv("OTP_FILE_DIR"); v && *v) cfg.file_dir = v;
    if (const char* v = std::getenv("OTP_WEBHOOK_URL"); v && *v) cfg.webhook_url = v;
    if (cfg.transport == TransportKind::WebhookPost && cfg.webhook_url.empty()) {
      fail(ErrorCode::Config, "OTP_WEBHOOK_URL is required for the webhook transport");
    }
    return cfg;
  }
};

}  // namespace clickotp
