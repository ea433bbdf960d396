#pragma once

#include <cmath>
#include <cstdio>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "clickotp/error.hpp"

namespace clickotp {

inline constexpr const char* kTimingsCsvHeader =
    "Sl.No,Registration Time(s),Login Time-1(s),Login Time-2(s),Login Time-3(s)";

struct TimingRecord {
  int serial = 0;
  std::optional<double> registration_seconds;
  std::vector<double> login_seconds;  // completion order
};

/// Seconds rounded to one decimal; the ".0" is dropped for whole values.
inline std::string format_seconds(double seconds) {
  const double tenths = std::round(seconds * 10.0);
  char buf[64];
  if (std::fmod(tenths, 10.0) == 0.0) {
    std::snprintf(buf, sizeof buf, "%.0f", tenths / 10.0);
  } else {
    std::snprintf(buf, sizeof buf, "%.1f", tenths / 10.0);
  }
  return buf;
}

/// Per-user registration and login durations, numbered by registration order.
class TimingLedger {
 public:
  int open_user(const std::string& user_id) {
    std::lock_guard lock(mutex_);
    auto [it, inserted] = by_user_.try_emplace(user_id);
    if (inserted) {
      it->second.serial = static_cast<int>(by_user_.size());
      order_.push_back(user_id);
    }
    return it->second.serial;
  }

  void record_registration(const std::string& user_id, double seconds) {
    check(seconds);
    std::lock_guard lock(mutex_);
    entry(user_id).registration_seconds = seconds;
  }

  void record_login(const std::string& user_id, double seconds) {
    check(seconds);
    std::lock_guard lock(mutex_);
    entry(user_id).login_seconds.push_back(seconds);
  }

  std::vector<TimingRecord> snapshot() const {
    std::lock_guard lock(mutex_);
    std::vector<TimingRecord> out;
    out.reserve(order_.size());
    for (const auto& id : order_) out.push_back(by_user_.at(id));
    return out;
  }

  /// One row per user; only the first three logins have columns.
  std::string export_csv() const {
    std::string out = kTimingsCsvHeader;
    out += '\n';
    for (const TimingRecord& rec : snapshot()) {
      out += std::to_string(rec.serial);
      out += ',';
      if (rec.registration_seconds) out += format_seconds(*rec.registration_seconds);
      for (std::size_t i = 0; i < 3; ++i) {
        out += ',';
        if (i < rec.login_seconds.size()) out += format_seconds(rec.login_seconds[i]);
      }
      out += '\n';
    }
    return out;
  }

 private:
  static void check(double seconds) {
    if (!(seconds >= 0.0) || !std::isfinite(seconds)) fail(ErrorCode::Domain, "durations must be >= 0");
  }
  TimingRecord& entry(const std::string& user_id) {
    auto [it, inserted] = by_user_.try_emplace(user_id);
    if (inserted) {
      it->second.serial = static_cast<int>(by_user_.size());
      order_.push_back(user_id);
    }
    return it->second;
  }

  mutable std::mutex mutex_;
  std::map<std::string, TimingRecord> by_user_;
  std::vector<std::string> order_;
};

}  // namespace clickotp
