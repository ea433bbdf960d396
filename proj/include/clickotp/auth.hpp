#pragma once

// User registry plus the registration and three-level login protocol.
//
// A login presents, per level, the user's real image among three decoys.
// Clicks are recorded without being judged; the verdict is computed only at
// finalize() and is a single opaque success/failure.

#include <algorithm>
#include <array>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "clickotp/error.hpp"
#include "clickotp/grid.hpp"
#include "clickotp/otp.hpp"
#include "clickotp/random.hpp"
#include "clickotp/timings.hpp"
#include "clickotp/vault.hpp"

namespace clickotp {

inline constexpr int kLevels = 3;
inline constexpr std::size_t kImagesPerLevel = 4;
inline constexpr std::size_t kDecoysPerLevel = kImagesPerLevel - 1;

struct ImagePassword {
  int level = 0;  // 1..3
  std::string image_id;
  LabelingStatus status = LabelingStatus::LeftToRight;
};

struct UserRecord {
  std::string user_id;
  std::string username;
  std::string mobile;
  std::map<std::string, std::string> details;  // opaque registration form fields
  std::vector<ImagePassword> passwords;        // ordered by level once finalized
  Timestamp created_at;

  bool finalized() const noexcept { return passwords.size() == kLevels; }
};

struct ClickEvent {
  std::string image_id;
  double x = 0;
  double y = 0;
  double rendered_w = 0;
  double rendered_h = 0;
};

struct RecordedClick {
  std::string image_id;
  GridCell cell;
};

enum class SessionState { AwaitingClicks, Succeeded, Failed, Expired };

struct Challenge {
  int level = 1;
  std::array<std::string, kImagesPerLevel> images;
  friend bool operator==(const Challenge&, const Challenge&) = default;
};

struct LoginSession {
  std::string session_id;
  std::string user_id;
  std::string username;
  int current_level = 1;
  std::array<Challenge, kLevels> challenges;
  std::array<ImagePassword, kLevels> expected;  // snapshot of the user's passwords
  std::vector<RecordedClick> clicks;
  SessionState state = SessionState::AwaitingClicks;
  Timestamp started_at;
};

struct LoginStart {
  std::string session_id;
  Challenge challenge;
};

/// Response to a click. Carries nothing that depends on the click's
/// correctness: either the next challenge or "ready to finalize".
struct ClickResult {
  std::optional<Challenge> next;
  bool finalize_ready() const noexcept { return !next.has_value(); }
  friend bool operator==(const ClickResult&, const ClickResult&) = default;
};

enum class LoginOutcome { Succeeded, Failed };

struct LockoutStatus {
  bool locked = false;
  std::chrono::seconds retry_after{0};
};

class LockedError : public Error {
 public:
  explicit LockedError(std::chrono::seconds retry_after)
      : Error(ErrorCode::Locked, "account temporarily locked"), retry_after_(retry_after) {}
  std::chrono::seconds retry_after() const noexcept { return retry_after_; }

 private:
  std::chrono::seconds retry_after_;
};

struct AuthConfig {
  std::chrono::seconds session_ttl{600};
  bool lockout_enabled = true;
  int lockout_threshold = 3;
  std::chrono::seconds lockout_window{900};
  std::chrono::seconds lockout_duration{900};
  std::size_t min_decoy_pool = kDecoysPerLevel * kLevels;
  std::filesystem::path registry_file;  // empty: users live in memory only
};

struct AttachResult {
  std::string image_id;
  bool registration_complete = false;
};

struct SessionImage {
  Bytes data;
  std::string content_type;
};

inline bool valid_username(std::string_view name) {
  if (name.empty() || name.size() > 64) return false;
  return std::all_of(name.begin(), name.end(), [](char c) {
    return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_' ||
           c == '.' || c == '-';
  });
}

inline double seconds_between(Timestamp from, Timestamp to) {
  return std::chrono::duration<double>(to - from).count();
}

class AuthService {
 public:
  AuthService(ImageVault& vault, OtpService& otp, AuthConfig config = {},
              TimingLedger* timings = nullptr)
      : vault_(vault), otp_(otp), config_(std::move(config)), timings_(timings) {
    if (!config_.registry_file.empty() && std::filesystem::exists(config_.registry_file)) load_registry();
  }

  AuthService(const AuthService&) = delete;
  AuthService& operator=(const AuthService&) = delete;

  const AuthConfig& config() const noexcept { return config_; }

  std::string register_user(const std::string& username, const std::string& mobile,
                            std::map<std::string, std::string> details, Timestamp now) {
    if (!valid_username(username)) fail(ErrorCode::Validation, "username must match [A-Za-z0-9_.-]{1,64}");
    if (mobile.empty() || mobile.size() > 64) fail(ErrorCode::Validation, "mobile must be 1..64 characters");

    UserRecord user;
    user.user_id = "u-" + id_rng_.hex_token();
    user.username = username;
    user.mobile = mobile;
    user.details = std::move(details);
    user.created_at = now;
    {
      std::unique_lock lock(users_mutex_);
      if (by_name_.count(username) != 0) fail(ErrorCode::Conflict, "username already exists");
      by_name_[username] = user.user_id;
      users_[user.user_id] = user;
      persist_locked();
    }
    if (timings_) timings_->open_user(user.user_id);
    return user.user_id;
  }

  AttachResult attach_image_password(const std::string& user_id, int level, const Bytes& image,
                                     const std::string& content_type, LabelingStatus status,
                                     Timestamp now) {
    if (level < 1 || level > kLevels) fail(ErrorCode::Validation, "level must be 1..3");
    {
      std::shared_lock lock(users_mutex_);
      const UserRecord& user = user_locked(user_id);
      if (has_level(user, level)) fail(ErrorCode::Conflict, "level already attached");
    }
    const StoredImage sealed = vault_.seal(image, user_id, content_type);

    AttachResult result{sealed.image_id, false};
    Timestamp created;
    {
      std::unique_lock lock(users_mutex_);
      UserRecord& user = user_locked(user_id);
      // Re-checked: a concurrent attach may have won the race while sealing.
      if (has_level(user, level)) fail(ErrorCode::Conflict, "level already attached");
      user.passwords.push_back({level, sealed.image_id, status});
      std::sort(user.passwords.begin(), user.passwords.end(),
                [](const ImagePassword& a, const ImagePassword& b) { return a.level < b.level; });
      result.registration_complete = user.finalized();
      created = user.created_at;
      persist_locked();
    }
    if (result.registration_complete && timings_) {
      timings_->record_registration(user_id, std::max(0.0, seconds_between(created, now)));
    }
    return result;
  }

  std::optional<UserRecord> find_user(const std::string& user_id) const {
    std::shared_lock lock(users_mutex_);
    auto it = users_.find(user_id);
    if (it == users_.end()) return std::nullopt;
    return it->second;
  }

  std::optional<UserRecord> find_user_by_name(const std::string& username) const {
    std::shared_lock lock(users_mutex_);
    auto it = by_name_.find(username);
    if (it == by_name_.end()) return std::nullopt;
    return users_.at(it->second);
  }

  LoginStart start_login(const std::string& username, Timestamp now, RandomSource& rng) {
    std::optional<UserRecord> user = find_user_by_name(username);
    // Unknown and unfinished accounts look alike to the caller.
    if (!user || !user->finalized()) fail(ErrorCode::Unavailable, "authentication unavailable");
    if (const LockoutStatus lock = check_lockout(username, now); lock.locked) {
      throw LockedError(lock.retry_after);
    }
    if (vault_.decoy_count() < config_.min_decoy_pool) {
      fail(ErrorCode::Unavailable, "authentication unavailable");
    }

    auto slot = std::make_shared<SessionSlot>();
    LoginSession& s = slot->session;
    s.session_id = rng.hex_token();
    s.user_id = user->user_id;
    s.username = user->username;
    s.started_at = now;

    std::set<std::string> own_images;
    for (const ImagePassword& p : user->passwords) own_images.insert(p.image_id);
    for (int level = 1; level <= kLevels; ++level) {
      const ImagePassword& real = user->passwords[static_cast<std::size_t>(level - 1)];
      s.expected[static_cast<std::size_t>(level - 1)] = real;
      std::vector<std::string> decoys;
      try {
        decoys = vault_.pick_decoys(own_images, kDecoysPerLevel, rng);
      } catch (const Error&) {
        fail(ErrorCode::Unavailable, "authentication unavailable");
      }
      Challenge& ch = s.challenges[static_cast<std::size_t>(level - 1)];
      ch.level = level;
      ch.images = {real.image_id, decoys[0], decoys[1], decoys[2]};
      shuffle(std::span<std::string>(ch.images), rng);
    }

    try {
      otp_.issue(s.session_id, user->mobile, rng, now);
    } catch (const Error&) {
      otp_.store().erase(s.session_id);
      fail(ErrorCode::Unavailable, "authentication unavailable");
    }

    LoginStart out{s.session_id, s.challenges[0]};
    std::unique_lock lock(sessions_mutex_);
    sessions_[s.session_id] = std::move(slot);
    return out;
  }

  ClickResult submit_click(const std::string& session_id, const ClickEvent& click, Timestamp now) {
    auto slot = find_slot(session_id);
    std::lock_guard lock(slot->mutex);
    LoginSession& s = slot->session;
    if (s.state != SessionState::AwaitingClicks) fail(ErrorCode::State, "session is closed");
    if (now - s.started_at > config_.session_ttl) {
      s.state = SessionState::Expired;
      burn_otp(session_id, now);
      fail(ErrorCode::Expired, "session expired");
    }
    if (s.clicks.size() >= kLevels) fail(ErrorCode::State, "all levels answered; finalize pending");

    const std::size_t idx = s.clicks.size();
    const auto& shown = s.challenges[idx].images;
    if (std::find(shown.begin(), shown.end(), click.image_id) == shown.end()) {
      s.state = SessionState::Failed;
      burn_otp(session_id, now);
      fail(ErrorCode::Protocol, "image was not presented at this level");
    }
    const GridCell cell = map_click(click.x, click.y, click.rendered_w, click.rendered_h);
    s.clicks.push_back({click.image_id, cell});

    ClickResult result;
    if (s.clicks.size() < kLevels) {
      s.current_level = static_cast<int>(s.clicks.size()) + 1;
      result.next = s.challenges[s.clicks.size()];
    }
    return result;
  }

  LoginOutcome finalize(const std::string& session_id, Timestamp now) {
    auto slot = find_slot(session_id);
    std::lock_guard lock(slot->mutex);
    LoginSession& s = slot->session;
    if (s.state != SessionState::AwaitingClicks) fail(ErrorCode::State, "session is closed");
    if (s.clicks.size() < kLevels) fail(ErrorCode::State, "finalize needs three clicks");

    if (now - s.started_at > config_.session_ttl) {
      s.state = SessionState::Expired;
      burn_otp(session_id, now);
      record_failure(s.username, now);
      return LoginOutcome::Failed;
    }

    std::optional<OtpDigits> digits;
    try {
      digits = otp_.store().consume(session_id, now);
    } catch (const Error&) {
    }

    // All six conditions are evaluated; no early exit.
    bool ok = digits.has_value();
    for (std::size_t i = 0; i < kLevels; ++i) {
      const ImagePassword& want = s.expected[i];
      const RecordedClick& got = s.clicks[i];
      const bool image_ok = got.image_id == want.image_id;
      const bool cell_ok =
          digits.has_value() && got.cell == expected_cell(want.status, digits->digits[i]);
      ok = ok & image_ok & cell_ok;
    }

    if (ok) {
      s.state = SessionState::Succeeded;
      clear_failures(s.username);
      if (timings_) timings_->record_login(s.user_id, std::max(0.0, seconds_between(s.started_at, now)));
      return LoginOutcome::Succeeded;
    }
    s.state = SessionState::Failed;
    record_failure(s.username, now);
    return LoginOutcome::Failed;
  }

  LockoutStatus check_lockout(const std::string& username, Timestamp now) const {
    if (!config_.lockout_enabled) return {};
    std::lock_guard lock(lockout_mutex_);
    auto it = lockouts_.find(username);
    if (it == lockouts_.end() || !it->second.locked_until || now >= *it->second.locked_until) return {};
    const auto left = std::chrono::ceil<std::chrono::seconds>(*it->second.locked_until - now);
    return {true, left};
  }

  /// Current level's challenge, or nullopt once all three clicks are in.
  /// Repeated calls return the same ids in the same order.
  std::optional<Challenge> current_challenge(const std::string& session_id) const {
    auto slot = find_slot(session_id);
    std::lock_guard lock(slot->mutex);
    const LoginSession& s = slot->session;
    if (s.state != SessionState::AwaitingClicks) fail(ErrorCode::State, "session is closed");
    if (s.clicks.size() >= kLevels) return std::nullopt;
    return s.challenges[s.clicks.size()];
  }

  /// Bytes of an image shown in this session's current or an earlier level.
  SessionImage session_image(const std::string& session_id, const std::string& image_id) const {
    std::vector<std::string> presented;
    {
      auto slot = find_slot(session_id);
      std::lock_guard lock(slot->mutex);
      const LoginSession& s = slot->session;
      if (s.state != SessionState::AwaitingClicks) fail(ErrorCode::State, "session is closed");
      const std::size_t shown = std::min<std::size_t>(s.clicks.size() + 1, kLevels);
      for (std::size_t i = 0; i < shown; ++i) {
        presented.insert(presented.end(), s.challenges[i].images.begin(), s.challenges[i].images.end());
      }
    }
    if (std::find(presented.begin(), presented.end(), image_id) == presented.end()) {
      fail(ErrorCode::NotFound, "image not part of this session");
    }
    const Requester requester{"session:" + session_id, presented};
    SessionImage out;
    out.data = vault_.open(image_id, requester);
    out.content_type = vault_.content_type(image_id).value_or("application/octet-stream");
    return out;
  }

  std::optional<LoginSession> find_session(const std::string& session_id) const {
    std::shared_lock lock(sessions_mutex_);
    auto it = sessions_.find(session_id);
    if (it == sessions_.end()) return std::nullopt;
    std::lock_guard slot_lock(it->second->mutex);
    return it->second->session;
  }

  /// Forgets a session and its key; simulations call this after each trial.
  void discard_session(const std::string& session_id) {
    {
      std::unique_lock lock(sessions_mutex_);
      sessions_.erase(session_id);
    }
    otp_.store().erase(session_id);
  }

  /// Expires abandoned sessions (burning their keys) and drops closed ones
  /// older than two session lifetimes. Returns the number of expirations.
  std::size_t sweep(Timestamp now) {
    std::size_t expired = 0;
    std::vector<std::string> drop;
    {
      std::shared_lock lock(sessions_mutex_);
      for (const auto& [id, slot] : sessions_) {
        std::lock_guard slot_lock(slot->mutex);
        LoginSession& s = slot->session;
        const auto age = now - s.started_at;
        if (s.state == SessionState::AwaitingClicks && age > config_.session_ttl) {
          s.state = SessionState::Expired;
          burn_otp(id, now);
          ++expired;
        }
        if (s.state != SessionState::AwaitingClicks && age > 2 * config_.session_ttl) drop.push_back(id);
      }
    }
    {
      std::unique_lock lock(sessions_mutex_);
      for (const auto& id : drop) sessions_.erase(id);
    }
    otp_.store().sweep_expired(now);
    otp_.store().purge_terminal(now, 2 * config_.session_ttl);
    return expired;
  }

  std::size_t session_count() const {
    std::shared_lock lock(sessions_mutex_);
    return sessions_.size();
  }

 private:
  struct SessionSlot {
    mutable std::mutex mutex;
    LoginSession session;
  };

  struct LockoutEntry {
    std::vector<Timestamp> failures;
    std::optional<Timestamp> locked_until;
  };

  void persist_locked() const {
    if (config_.registry_file.empty()) return;
    nlohmann::json doc = nlohmann::json::array();
    for (const auto& [id, u] : users_) {
      nlohmann::json pw = nlohmann::json::array();
      for (const ImagePassword& p : u.passwords) {
        pw.push_back({{"level", p.level}, {"image_id", p.image_id}, {"status", to_string(p.status)}});
      }
      doc.push_back({{"user_id", u.user_id},
                     {"username", u.username},
                     {"mobile", u.mobile},
                     {"details", u.details},
                     {"passwords", pw},
                     {"created_at", std::chrono::duration_cast<std::chrono::seconds>(
                                        u.created_at.time_since_epoch()).count()}});
    }
    const std::string tmp = config_.registry_file.string() + ".tmp";
    {
      std::ofstream out(tmp, std::ios::trunc);
      out << doc.dump(1);
      if (!out) fail(ErrorCode::Config, "cannot write " + tmp);
    }
    std::error_code ec;
    std::filesystem::rename(tmp, config_.registry_file, ec);
    if (ec) fail(ErrorCode::Config, "cannot publish " + config_.registry_file.string());
  }

  void load_registry() {
    std::ifstream in(config_.registry_file);
    const nlohmann::json doc = nlohmann::json::parse(in, nullptr, false);
    if (doc.is_discarded() || !doc.is_array()) fail(ErrorCode::Config, "corrupt user registry");
    for (const auto& j : doc) {
      UserRecord u;
      u.user_id = j.at("user_id").get<std::string>();
      u.username = j.at("username").get<std::string>();
      u.mobile = j.at("mobile").get<std::string>();
      u.details = j.at("details").get<std::map<std::string, std::string>>();
      u.created_at = Timestamp(std::chrono::seconds(j.at("created_at").get<std::int64_t>()));
      for (const auto& p : j.at("passwords")) {
        const auto status = parse_status(p.at("status").get<std::string>());
        if (!status) fail(ErrorCode::Config, "corrupt user registry status");
        u.passwords.push_back({p.at("level").get<int>(), p.at("image_id").get<std::string>(), *status});
      }
      by_name_[u.username] = u.user_id;
      users_[u.user_id] = std::move(u);
    }
  }

  static bool has_level(const UserRecord& user, int level) {
    return std::any_of(user.passwords.begin(), user.passwords.end(),
                       [level](const ImagePassword& p) { return p.level == level; });
  }

  UserRecord& user_locked(const std::string& user_id) {
    auto it = users_.find(user_id);
    if (it == users_.end()) fail(ErrorCode::NotFound, "unknown user");
    return it->second;
  }

  std::shared_ptr<SessionSlot> find_slot(const std::string& session_id) const {
    std::shared_lock lock(sessions_mutex_);
    auto it = sessions_.find(session_id);
    if (it == sessions_.end()) fail(ErrorCode::NotFound, "unknown session");
    return it->second;
  }

  void burn_otp(const std::string& session_id, Timestamp now) {
    try {
      otp_.store().consume(session_id, now);
    } catch (const Error&) {
    }
  }

  void record_failure(const std::string& username, Timestamp now) {
    if (!config_.lockout_enabled) return;
    std::lock_guard lock(lockout_mutex_);
    LockoutEntry& e = lockouts_[username];
    std::erase_if(e.failures, [&](Timestamp t) { return now - t >= config_.lockout_window; });
    e.failures.push_back(now);
    if (static_cast<int>(e.failures.size()) >= config_.lockout_threshold) {
      e.locked_until = now + config_.lockout_duration;
      e.failures.clear();
    }
  }

  void clear_failures(const std::string& username) {
    std::lock_guard lock(lockout_mutex_);
    lockouts_.erase(username);
  }

  ImageVault& vault_;
  OtpService& otp_;
  AuthConfig config_;
  TimingLedger* timings_;
  SystemRandom id_rng_;

  mutable std::shared_mutex users_mutex_;
  std::unordered_map<std::string, UserRecord> users_;
  std::unordered_map<std::string, std::string> by_name_;

  mutable std::shared_mutex sessions_mutex_;
  std::unordered_map<std::string, std::shared_ptr<SessionSlot>> sessions_;

  mutable std::mutex lockout_mutex_;
  std::unordered_map<std::string, LockoutEntry> lockouts_;
};

}  // namespace clickotp
