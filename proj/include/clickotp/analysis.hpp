#pragma once

// Security analysis: exact password space and attacker simulations.
//
// Simulated attacks go through AuthService itself (sessions, OTP store,
// decoys, finalize), so a bug in verification shows up as a shifted rate.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "clickotp/auth.hpp"
#include "clickotp/grid.hpp"
#include "clickotp/otp.hpp"
#include "clickotp/random.hpp"
#include "clickotp/vault.hpp"

namespace clickotp {

using Rational = boost::multiprecision::cpp_rational;

enum class AttackerKind {
  BlindGuess,       // random image, random cell at every level
  KnownImages,      // always picks the real image, random cell
  SessionObserver,  // replays knowledge from one observed session, no phone
};

constexpr std::string_view to_string(AttackerKind k) noexcept {
  switch (k) {
    case AttackerKind::BlindGuess: return "blind";
    case AttackerKind::KnownImages: return "known-images";
    case AttackerKind::SessionObserver: return "session-observer";
  }
  return "?";
}

inline std::optional<AttackerKind> parse_attacker(std::string_view text) {
  for (AttackerKind k : {AttackerKind::BlindGuess, AttackerKind::KnownImages, AttackerKind::SessionObserver}) {
    if (text == to_string(k)) return k;
  }
  return std::nullopt;
}

inline constexpr std::uint64_t kMaxTrials = 100'000'000;

struct AttackerModel {
  AttackerKind kind = AttackerKind::BlindGuess;
  std::uint64_t trials = 1'000'000;
  std::uint64_t seed = 1;

  void validate() const {
    if (trials < 1) fail(ErrorCode::Domain, "trials must be >= 1");
    if (trials > kMaxTrials) fail(ErrorCode::Refused, "trials exceed the 1e8 budget");
  }
};

/// What the observer learns from one full prior session: the screen (which
/// image was clicked, where) and, after the fact, that session's spent key.
/// The fresh key for the next session is never seen.
///
/// The attacker keeps every labeling consistent with each (cell, digit)
/// pair, picks one uniformly, guesses the unseen fresh digit uniformly and
/// clicks cell_of(hypothesis, guess) on the real image.
///
/// Exact success probability: enumerate all 4^3 true labelings and 9^3
/// fresh keys, and within each level average over the 9 prior digits, the
/// consistent hypotheses and the 9 guesses.
inline Rational session_observer_reference() {
  // level_hit[s][d]: P(hit at one level | true status s, fresh digit d).
  Rational level_hit[4][9];
  for (std::size_t s = 0; s < 4; ++s) {
    const LabelingStatus truth = kAllStatuses[s];
    for (int fresh = 1; fresh <= 9; ++fresh) {
      const GridCell target = cell_of(truth, GridLabel(fresh));
      Rational p = 0;
      for (int prior = 1; prior <= 9; ++prior) {
        const GridCell seen = cell_of(truth, GridLabel(prior));
        std::vector<LabelingStatus> consistent;
        for (LabelingStatus h : kAllStatuses) {
          if (label_of(h, seen) == GridLabel(prior)) consistent.push_back(h);
        }
        Rational given_prior = 0;
        for (LabelingStatus h : consistent) {
          int hits = 0;
          for (int guess = 1; guess <= 9; ++guess) hits += cell_of(h, GridLabel(guess)) == target;
          given_prior += Rational(hits, 9);
        }
        p += given_prior / static_cast<int>(consistent.size());
      }
      level_hit[s][fresh - 1] = p / 9;
    }
  }

  Rational total = 0;
  for (std::size_t s1 = 0; s1 < 4; ++s1)
    for (std::size_t s2 = 0; s2 < 4; ++s2)
      for (std::size_t s3 = 0; s3 < 4; ++s3)
        for (int d1 = 0; d1 < 9; ++d1)
          for (int d2 = 0; d2 < 9; ++d2)
            for (int d3 = 0; d3 < 9; ++d3) {
              total += level_hit[s1][d1] * level_hit[s2][d2] * level_hit[s3][d3];
            }
  return total / (64 * 729);
}

/// Closed forms for the two guessing models; enumeration for the observer.
inline Rational reference_probability(AttackerKind kind) {
  switch (kind) {
    case AttackerKind::BlindGuess: return Rational(1, 4 * 9 * 4 * 9 * 4 * 9);
    case AttackerKind::KnownImages: return Rational(1, 9 * 9 * 9);
    case AttackerKind::SessionObserver: return session_observer_reference();
  }
  fail(ErrorCode::Domain, "unknown attacker model");
}

struct AttackReport {
  AttackerModel model;
  std::uint64_t successes = 0;
  Rational reference = 0;

  double empirical_rate() const { return static_cast<double>(successes) / static_cast<double>(model.trials); }
  double reference_rate() const { return static_cast<double>(reference); }
  /// Binomial standard deviation of the empirical rate at the reference value.
  double sigma() const {
    const double p = reference_rate();
    return std::sqrt(p * (1.0 - p) / static_cast<double>(model.trials));
  }
  double z_score() const {
    const double s = sigma();
    return s > 0 ? (empirical_rate() - reference_rate()) / s : 0.0;
  }
  bool within(double k_sigma) const {
    return std::abs(empirical_rate() - reference_rate()) <= k_sigma * sigma();
  }
};

namespace detail {

inline Bytes synthetic_image(std::string_view tag, std::uint64_t n) {
  // PNG signature followed by a distinguishing payload; the vault only needs
  // opaque non-empty bytes.
  Bytes out = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1A, '\n'};
  out.insert(out.end(), tag.begin(), tag.end());
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(n >> (8 * i)));
  return out;
}

inline constexpr double kRenderSide = 300.0;

/// An isolated in-memory deployment used by one simulation worker.
class SimulationWorld {
 public:
  struct Victim {
    std::string username;
    std::array<ImagePassword, kLevels> passwords;
  };

  SimulationWorld(RandomSource& rng, std::size_t victims = 4, std::size_t decoys = 12)
      : vault_(Bytes(32, 0x5A)),
        otp_(std::make_unique<MemoryTransport>()),
        auth_(vault_, otp_, simulation_config()) {
    inbox_ = static_cast<MemoryTransport*>(&otp_.transport());
    for (std::size_t i = 0; i < decoys; ++i) vault_.add_decoy(synthetic_image("decoy", i), "image/png");
    for (std::size_t v = 0; v < victims; ++v) {
      Victim victim;
      victim.username = "victim" + std::to_string(v);
      const std::string uid = auth_.register_user(victim.username, "+1000000000" + std::to_string(v), {}, now_);
      for (int level = 1; level <= kLevels; ++level) {
        const LabelingStatus status = kAllStatuses[rng.below(4)];
        const auto r = auth_.attach_image_password(uid, level, synthetic_image(victim.username, level), "image/png",
                                                   status, now_);
        victim.passwords[static_cast<std::size_t>(level - 1)] = {level, r.image_id, status};
      }
      victims_.push_back(std::move(victim));
    }
  }

  // Lockout off: the simulation measures per-attempt probability.
  static AuthConfig simulation_config() {
    AuthConfig cfg;
    cfg.lockout_enabled = false;
    return cfg;
  }

  /// One attempt of `kind`; true when finalize reports success.
  bool trial(AttackerKind kind, RandomSource& rng) {
    const Victim& victim = victims_[rng.below(victims_.size())];
    if (kind == AttackerKind::SessionObserver) return observer_trial(victim, rng);

    const LoginStart start = auth_.start_login(victim.username, now_, rng);
    inbox_->take(start.session_id);  // the attacker never sees the phone
    Challenge ch = start.challenge;
    for (int level = 1; level <= kLevels; ++level) {
      std::string image;
      if (kind == AttackerKind::KnownImages) {
        image = victim.passwords[static_cast<std::size_t>(level - 1)].image_id;
      } else {
        image = ch.images[rng.below(kImagesPerLevel)];
      }
      const GridCell cell{static_cast<int>(rng.below(3)), static_cast<int>(rng.below(3))};
      ch = click(start.session_id, image, cell).next.value_or(ch);
    }
    return close(start.session_id);
  }

 private:
  ClickResult click(const std::string& sid, const std::string& image, GridCell cell) {
    const PixelPoint p = cell_center(cell, kRenderSide, kRenderSide);
    return auth_.submit_click(sid, {image, p.x, p.y, kRenderSide, kRenderSide}, now_);
  }

  bool close(const std::string& sid) {
    const bool ok = auth_.finalize(sid, now_) == LoginOutcome::Succeeded;
    auth_.discard_session(sid);
    return ok;
  }

  bool observer_trial(const Victim& victim, RandomSource& rng) {
    // The legitimate login being watched.
    const LoginStart seen = auth_.start_login(victim.username, now_, rng);
    const OtpDigits prior = inbox_->take(seen.session_id).value();
    std::array<RecordedClick, kLevels> observed;
    for (std::size_t i = 0; i < kLevels; ++i) {
      const ImagePassword& pw = victim.passwords[i];
      observed[i] = {pw.image_id, expected_cell(pw.status, prior.digits[i])};
      click(seen.session_id, observed[i].image_id, observed[i].cell);
    }
    if (!close(seen.session_id)) fail(ErrorCode::Integrity, "legitimate login failed inside simulation");

    // The attack.
    const LoginStart start = auth_.start_login(victim.username, now_, rng);
    inbox_->take(start.session_id);
    for (std::size_t i = 0; i < kLevels; ++i) {
      std::vector<LabelingStatus> consistent;
      for (LabelingStatus h : kAllStatuses) {
        if (label_of(h, observed[i].cell) == prior.digits[i]) consistent.push_back(h);
      }
      const LabelingStatus hypothesis = consistent[rng.below(consistent.size())];
      const GridLabel guess(static_cast<int>(rng.uniform(1, 9)));
      click(start.session_id, observed[i].image_id, cell_of(hypothesis, guess));
    }
    return close(start.session_id);
  }

  ImageVault vault_;
  OtpService otp_;
  AuthService auth_;
  MemoryTransport* inbox_ = nullptr;
  std::vector<Victim> victims_;
  Timestamp now_ = Timestamp(std::chrono::seconds(1'700'000'000));
};

}  // namespace detail

/// Work is cut into this many seed-derived chunks whatever the thread count,
/// so totals depend only on (seed, trials).
inline constexpr std::size_t kSimulationChunks = 16;

inline AttackReport run_attack(const AttackerModel& model, unsigned threads = 0) {
  model.validate();
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min<unsigned>(threads, kSimulationChunks);

  std::vector<std::uint64_t> successes(kSimulationChunks, 0);
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(threads);
  const auto worker = [&](unsigned w) {
    try {
      for (std::size_t chunk = next++; chunk < kSimulationChunks; chunk = next++) {
        std::uint64_t n = model.trials / kSimulationChunks + (chunk < model.trials % kSimulationChunks ? 1 : 0);
        if (n == 0) continue;
        SeededRandom rng(splitmix64(model.seed ^ splitmix64(chunk + 1)));
        detail::SimulationWorld world(rng);
        std::uint64_t hits = 0;
        for (std::uint64_t i = 0; i < n; ++i) hits += world.trial(model.kind, rng);
        successes[chunk] = hits;
      }
    } catch (...) {
      errors[w] = std::current_exception();
    }
  };

  std::vector<std::thread> pool;
  for (unsigned w = 1; w < threads; ++w) pool.emplace_back(worker, w);
  worker(0);
  for (auto& t : pool) t.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  AttackReport report;
  report.model = model;
  for (std::uint64_t s : successes) report.successes += s;
  report.reference = reference_probability(model.kind);
  return report;
}

inline std::string format_double(double v, const char* fmt = "%.6g") {
  char buf[64];
  std::snprintf(buf, sizeof buf, fmt, v);
  return buf;
}

inline std::string render_space(const SpaceParams& p, bool csv) {
  const BigUint s = password_space(p);
  std::ostringstream out;
  if (csv) {
    out << "w,h,t,m,n,c,space\n"
        << p.w << ',' << p.h << ',' << p.t << ',' << p.m << ',' << p.n << ',' << p.c << ',' << s << '\n';
    return out.str();
  }
  out << "password space S = (((floor(w*h/t^2) * m)^n)^c)\n"
      << "  w=" << p.w << " h=" << p.h << " t=" << p.t << " m=" << p.m << " n=" << p.n << " c=" << p.c << '\n'
      << "  exact:      " << s << '\n'
      << "  scientific: " << to_scientific(s).render() << '\n';
  return out.str();
}

inline std::string render_attack(const AttackReport& r, bool csv) {
  std::ostringstream out;
  const char* ref_kind = r.model.kind == AttackerKind::SessionObserver ? "exhaustive enumeration" : "closed form";
  if (csv) {
    out << "model,trials,seed,successes,empirical_rate,reference_rate,reference_exact,sigma,z_score\n"
        << to_string(r.model.kind) << ',' << r.model.trials << ',' << r.model.seed << ',' << r.successes << ','
        << format_double(r.empirical_rate(), "%.9g") << ',' << format_double(r.reference_rate(), "%.9g") << ','
        << r.reference << ',' << format_double(r.sigma(), "%.9g") << ',' << format_double(r.z_score(), "%.4f")
        << '\n';
    return out.str();
  }
  out << "attacker model: " << to_string(r.model.kind) << "  (interpretation: ";
  switch (r.model.kind) {
    case AttackerKind::BlindGuess: out << "random image and random cell at every level"; break;
    case AttackerKind::KnownImages: out << "knows the real images, guesses the cell"; break;
    case AttackerKind::SessionObserver:
      out << "watched one prior login and learned its spent key, not the fresh one";
      break;
  }
  out << ")\n"
      << "  trials:     " << r.model.trials << "  seed: " << r.model.seed << '\n'
      << "  successes:  " << r.successes << '\n'
      << "  empirical:  " << format_double(r.empirical_rate()) << '\n'
      << "  reference:  " << format_double(r.reference_rate()) << " = " << r.reference << " (" << ref_kind << ")\n"
      << "  sigma:      " << format_double(r.sigma()) << "  z = " << format_double(r.z_score(), "%.3f")
      << (r.within(3.0) ? "  (within 3 sigma)" : "  (OUTSIDE 3 sigma)") << '\n';
  return out.str();
}

}  // namespace clickotp
