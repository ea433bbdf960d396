#include <gtest/gtest.h>

#include <set>

#include "clickotp/auth.hpp"
#include "test_support.hpp"

namespace clickotp {
namespace {

using namespace std::chrono_literals;
using testing::at;
using testing::fake_png;
using testing::kT0;
using testing::ScriptedOtpRandom;
using testing::TempDir;
using testing::World;

constexpr auto LR = LabelingStatus::LeftToRight;
constexpr auto RL = LabelingStatus::RightToLeft;
constexpr auto TB = LabelingStatus::TopToBottom;
constexpr auto BT = LabelingStatus::BottomToTop;

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorCode::Refused;
}

ClickEvent click_at(const std::string& image, GridCell cell, double w = 300, double h = 300) {
  const PixelPoint p = cell_center(cell, w, h);
  return {image, p.x, p.y, w, h};
}

// Replays a legitimate user: reads the OTP and clicks the right cell on the
// real image at each level.
LoginOutcome legit_login(World& w, const std::string& uid, const std::string& name, Timestamp now,
                         RandomSource& rng) {
  const LoginStart start = w.auth.start_login(name, now, rng);
  const OtpDigits otp = w.inbox->take(start.session_id).value();
  for (int level = 1; level <= 3; ++level) {
    const ImagePassword pw = w.password(uid, level);
    w.auth.submit_click(start.session_id, click_at(pw.image_id, expected_cell(pw.status, otp.at_level(level))), now);
  }
  return w.auth.finalize(start.session_id, now);
}

// --- registration ---------------------------------------------------------

TEST(Register, CreatesUserAndRejectsDuplicates) {
  World w;
  const std::string uid = w.auth.register_user("alice", "+15550001", {{"email", "a@x"}}, kT0);
  EXPECT_EQ(uid.rfind("u-", 0), 0u);
  const auto user = w.auth.find_user(uid);
  ASSERT_TRUE(user);
  EXPECT_EQ(user->username, "alice");
  EXPECT_EQ(user->details.at("email"), "a@x");
  EXPECT_FALSE(user->finalized());
  EXPECT_EQ(code_of([&] { w.auth.register_user("alice", "+1", {}, kT0); }), ErrorCode::Conflict);
}

TEST(Register, ValidatesInput) {
  World w;
  EXPECT_EQ(code_of([&] { w.auth.register_user("", "+1", {}, kT0); }), ErrorCode::Validation);
  EXPECT_EQ(code_of([&] { w.auth.register_user("bad name", "+1", {}, kT0); }), ErrorCode::Validation);
  EXPECT_EQ(code_of([&] { w.auth.register_user(std::string(65, 'a'), "+1", {}, kT0); }), ErrorCode::Validation);
  EXPECT_EQ(code_of([&] { w.auth.register_user("bob", "", {}, kT0); }), ErrorCode::Validation);
  EXPECT_NO_THROW(w.auth.register_user("A_b.c-9", "+1", {}, kT0));
}

TEST(Attach, LevelsCompleteRegistration) {
  World w;
  const std::string uid = w.auth.register_user("alice", "+1", {}, kT0);
  auto r1 = w.auth.attach_image_password(uid, 2, fake_png("b"), "image/png", RL, kT0 + 10s);
  EXPECT_FALSE(r1.registration_complete);
  EXPECT_EQ(code_of([&] { w.auth.attach_image_password(uid, 2, fake_png("c"), "image/png", LR, kT0); }),
            ErrorCode::Conflict);
  EXPECT_EQ(code_of([&] { w.auth.attach_image_password(uid, 4, fake_png("c"), "image/png", LR, kT0); }),
            ErrorCode::Validation);
  EXPECT_EQ(code_of([&] { w.auth.attach_image_password(uid, 0, fake_png("c"), "image/png", LR, kT0); }),
            ErrorCode::Validation);
  EXPECT_EQ(code_of([&] { w.auth.attach_image_password("u-none", 1, fake_png("c"), "image/png", LR, kT0); }),
            ErrorCode::NotFound);
  EXPECT_EQ(code_of([&] { w.auth.attach_image_password(uid, 1, fake_png("c"), "image/gif", LR, kT0); }),
            ErrorCode::Validation);
  w.auth.attach_image_password(uid, 3, fake_png("d"), "image/jpeg", BT, kT0 + 20s);
  auto r3 = w.auth.attach_image_password(uid, 1, fake_png("a"), "image/png", TB, kT0 + 76s);
  EXPECT_TRUE(r3.registration_complete);

  const auto user = w.auth.find_user(uid).value();
  ASSERT_TRUE(user.finalized());
  EXPECT_EQ(user.passwords[0].level, 1);
  EXPECT_EQ(user.passwords[0].status, TB);
  EXPECT_EQ(user.passwords[1].status, RL);
  EXPECT_EQ(user.passwords[2].status, BT);
  EXPECT_EQ(w.vault.owner_of(user.passwords[0].image_id), uid);

  const auto rows = w.timings.snapshot();
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_DOUBLE_EQ(rows[0].registration_seconds.value(), 76.0);
}

TEST(Registry, PersistsToJsonFile) {
  TempDir dir;
  AuthConfig cfg;
  cfg.registry_file = dir.path() / "users.json";
  ImageVault vault(testing::test_master_key());
  OtpService otp(std::make_unique<MemoryTransport>());
  std::string uid;
  {
    AuthService auth(vault, otp, cfg);
    uid = auth.register_user("carol", "+2", {{"k", "v"}}, kT0);
    auth.attach_image_password(uid, 1, fake_png("c1"), "image/png", BT, kT0);
  }
  AuthService reloaded(vault, otp, cfg);
  const auto user = reloaded.find_user_by_name("carol");
  ASSERT_TRUE(user);
  EXPECT_EQ(user->user_id, uid);
  EXPECT_EQ(user->details.at("k"), "v");
  ASSERT_EQ(user->passwords.size(), 1u);
  EXPECT_EQ(user->passwords[0].status, BT);
  EXPECT_EQ(code_of([&] { reloaded.register_user("carol", "+2", {}, kT0); }), ErrorCode::Conflict);
}

// --- login start ------------------------------------------------------------

TEST(StartLogin, ComposesFourImagesPerLevelWithOneReal) {
  World w;
  const std::string uid = w.enroll("alice", {LR, RL, TB});
  const std::string bob = w.enroll("bob", {LR, LR, LR});
  SeededRandom rng(5);
  const LoginStart start = w.auth.start_login("alice", kT0, rng);
  EXPECT_EQ(start.session_id.size(), 32u);
  EXPECT_EQ(start.challenge.level, 1);

  const LoginSession s = w.auth.find_session(start.session_id).value();
  std::set<std::string> own, bobs;
  for (int l = 1; l <= 3; ++l) own.insert(w.password(uid, l).image_id);
  for (int l = 1; l <= 3; ++l) bobs.insert(w.password(bob, l).image_id);
  for (int l = 1; l <= 3; ++l) {
    const Challenge& ch = s.challenges[static_cast<std::size_t>(l - 1)];
    EXPECT_EQ(ch.level, l);
    const std::set<std::string> distinct(ch.images.begin(), ch.images.end());
    EXPECT_EQ(distinct.size(), 4u);
    int real = 0;
    for (const auto& id : ch.images) {
      if (id == w.password(uid, l).image_id) {
        ++real;
      } else {
        EXPECT_EQ(own.count(id), 0u);
        EXPECT_EQ(bobs.count(id), 0u) << "another user's image used as decoy";
        EXPECT_EQ(w.vault.owner_of(id), std::string(kSystemOwner));
      }
    }
    EXPECT_EQ(real, 1);
  }
  EXPECT_EQ(w.inbox->sent(), 1u);
}

TEST(StartLogin, UnknownAndUnfinishedUsersLookTheSame) {
  World w;
  w.auth.register_user("half", "+1", {}, kT0);
  SeededRandom rng(1);
  std::string msg_unknown, msg_half;
  try {
    w.auth.start_login("ghost", kT0, rng);
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Unavailable);
    msg_unknown = e.what();
  }
  try {
    w.auth.start_login("half", kT0, rng);
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Unavailable);
    msg_half = e.what();
  }
  EXPECT_FALSE(msg_unknown.empty());
  EXPECT_EQ(msg_unknown, msg_half);
}

TEST(StartLogin, SmallDecoyPoolIsUnavailable) {
  World w(8);
  w.enroll("alice", {LR, LR, LR});
  SeededRandom rng(1);
  EXPECT_EQ(code_of([&] { w.auth.start_login("alice", kT0, rng); }), ErrorCode::Unavailable);
  EXPECT_EQ(w.auth.session_count(), 0u);
}

TEST(StartLogin, TwoSessionsDiffer) {
  World w;
  w.enroll("alice", {LR, LR, LR});
  SystemRandom rng;
  const LoginStart a = w.auth.start_login("alice", kT0, rng);
  const LoginStart b = w.auth.start_login("alice", kT0, rng);
  EXPECT_NE(a.session_id, b.session_id);
  EXPECT_EQ(w.auth.session_count(), 2u);
}

TEST(StartLogin, DeterministicUnderSeed) {
  World w1, w2;
  // Same decoy contents give the same decoy ids in both worlds; user image ids
  // differ, so compare the positions of the real image and the decoy ids.
  w1.enroll("alice", {LR, LR, LR});
  w2.enroll("alice", {LR, LR, LR});
  SeededRandom r1(99), r2(99);
  const LoginStart a = w1.auth.start_login("alice", kT0, r1);
  const LoginStart b = w2.auth.start_login("alice", kT0, r2);
  EXPECT_EQ(a.session_id, b.session_id);
  const auto sa = w1.auth.find_session(a.session_id).value();
  const auto sb = w2.auth.find_session(b.session_id).value();
  for (std::size_t l = 0; l < 3; ++l) {
    for (std::size_t i = 0; i < 4; ++i) {
      const bool real_a = sa.challenges[l].images[i] == sa.expected[l].image_id;
      const bool real_b = sb.challenges[l].images[i] == sb.expected[l].image_id;
      EXPECT_EQ(real_a, real_b);
      if (!real_a) {
        EXPECT_EQ(sa.challenges[l].images[i], sb.challenges[l].images[i]);
      }
    }
  }
  EXPECT_EQ(w1.inbox->take(a.session_id), w2.inbox->take(b.session_id));
}

// --- golden flow --------------------------------------------------------------

TEST(Login, GoldenScenario386) {
  World w;
  const std::string uid = w.enroll("alice", {LR, LR, LR});
  ScriptedOtpRandom rng(3, "386");
  const LoginStart start = w.auth.start_login("alice", kT0, rng);
  ASSERT_EQ(w.inbox->take(start.session_id)->str(), "386");

  const std::array<GridCell, 3> cells = {GridCell{0, 2}, GridCell{2, 1}, GridCell{1, 2}};
  for (int l = 1; l <= 3; ++l) {
    const ClickResult r =
        w.auth.submit_click(start.session_id, click_at(w.password(uid, l).image_id, cells[l - 1]), kT0 + 5s);
    EXPECT_EQ(r.finalize_ready(), l == 3);
    if (l < 3) {
      EXPECT_EQ(r.next->level, l + 1);
    }
  }
  EXPECT_EQ(w.auth.finalize(start.session_id, kT0 + 29s), LoginOutcome::Succeeded);
  EXPECT_EQ(w.auth.find_session(start.session_id)->state, SessionState::Succeeded);
  EXPECT_DOUBLE_EQ(w.timings.snapshot()[0].login_seconds.at(0), 29.0);
}

TEST(Login, MixedStatusesSucceed) {
  for (auto a : kAllStatuses) {
    for (auto b : kAllStatuses) {
      World w;
      const std::string uid = w.enroll("u", {a, b, BT});
      SeededRandom rng(static_cast<std::uint64_t>(a) * 4 + static_cast<std::uint64_t>(b));
      EXPECT_EQ(legit_login(w, uid, "u", kT0, rng), LoginOutcome::Succeeded);
    }
  }
}

// Each of the six conditions, broken alone, fails the login.
enum class Break { None, Image1, Image2, Image3, Cell1, Cell2, Cell3 };

LoginOutcome login_breaking(Break what) {
  World w;
  const std::string uid = w.enroll("alice", {LR, RL, TB});
  SeededRandom rng(17);
  const LoginStart start = w.auth.start_login("alice", kT0, rng);
  const OtpDigits otp = w.inbox->take(start.session_id).value();
  const LoginSession s = w.auth.find_session(start.session_id).value();
  for (int l = 1; l <= 3; ++l) {
    const ImagePassword pw = w.password(uid, l);
    std::string image = pw.image_id;
    GridCell cell = expected_cell(pw.status, otp.at_level(l));
    if (static_cast<int>(what) == l) {
      for (const auto& id : s.challenges[static_cast<std::size_t>(l - 1)].images) {
        if (id != pw.image_id) image = id;
      }
    }
    if (static_cast<int>(what) == l + 3) cell = GridCell{(cell.row + 1) % 3, cell.col};
    w.auth.submit_click(start.session_id, click_at(image, cell), kT0);
  }
  return w.auth.finalize(start.session_id, kT0);
}

TEST(Login, EachConditionIsRequired) {
  EXPECT_EQ(login_breaking(Break::None), LoginOutcome::Succeeded);
  for (Break b : {Break::Image1, Break::Image2, Break::Image3, Break::Cell1, Break::Cell2, Break::Cell3}) {
    EXPECT_EQ(login_breaking(b), LoginOutcome::Failed) << static_cast<int>(b);
  }
}

TEST(Login, WrongOtpDigitFails) {
  World w;
  const std::string uid = w.enroll("alice", {LR, LR, LR});
  ScriptedOtpRandom rng(3, "386");
  const LoginStart start = w.auth.start_login("alice", kT0, rng);
  // Clicks for 387 instead of 386.
  const std::array<GridCell, 3> cells = {GridCell{0, 2}, GridCell{2, 1}, GridCell{2, 0}};
  for (int l = 1; l <= 3; ++l) {
    w.auth.submit_click(start.session_id, click_at(w.password(uid, l).image_id, cells[l - 1]), kT0);
  }
  EXPECT_EQ(w.auth.finalize(start.session_id, kT0), LoginOutcome::Failed);
}

// Click responses must not depend on whether the click was right.
TEST(Login, ResponsesCarryNoCorrectnessSignal) {
  World w;
  const std::string uid = w.enroll("alice", {LR, RL, TB});
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    testing::ReplayRandom ra(seed), rb(seed);
    rb.reset(seed, 0xFFFF);  // same draws apart from the session id
    const LoginStart a = w.auth.start_login("alice", kT0, ra);
    const LoginStart b = w.auth.start_login("alice", kT0, rb);
    ASSERT_EQ(a.challenge, b.challenge);
    const OtpDigits otp = w.inbox->take(a.session_id).value();
    for (int l = 1; l <= 3; ++l) {
      const ImagePassword pw = w.password(uid, l);
      const auto shown = w.auth.current_challenge(a.session_id).value();
      std::string wrong = shown.images[0] == pw.image_id ? shown.images[1] : shown.images[0];
      const GridCell good = expected_cell(pw.status, otp.at_level(l));
      const ClickResult right = w.auth.submit_click(a.session_id, click_at(pw.image_id, good), kT0);
      const ClickResult bad =
          w.auth.submit_click(b.session_id, click_at(wrong, GridCell{(good.row + 1) % 3, good.col}), kT0);
      EXPECT_EQ(right, bad);
    }
    w.auth.discard_session(a.session_id);
    w.auth.discard_session(b.session_id);
  }
}

TEST(Login, ProtocolErrorForImageNotShown) {
  World w;
  const std::string uid = w.enroll("alice", {LR, LR, LR});
  SeededRandom rng(2);
  const LoginStart start = w.auth.start_login("alice", kT0, rng);
  // The level-2 real image is not in the level-1 challenge.
  EXPECT_EQ(code_of([&] { w.auth.submit_click(start.session_id, click_at(w.password(uid, 2).image_id, {0, 0}), kT0); }),
            ErrorCode::Protocol);
  EXPECT_EQ(w.auth.find_session(start.session_id)->state, SessionState::Failed);
  EXPECT_EQ(code_of([&] { w.auth.finalize(start.session_id, kT0); }), ErrorCode::State);
}

TEST(Login, OutOfBoundsClickIsRejectedWithoutRecording) {
  World w;
  const std::string uid = w.enroll("alice", {LR, LR, LR});
  SeededRandom rng(2);
  const LoginStart start = w.auth.start_login("alice", kT0, rng);
  ClickEvent ev = click_at(w.password(uid, 1).image_id, {0, 0});
  ev.x = 301;
  EXPECT_EQ(code_of([&] { w.auth.submit_click(start.session_id, ev, kT0); }), ErrorCode::OutOfBounds);
  EXPECT_TRUE(w.auth.find_session(start.session_id)->clicks.empty());
}

TEST(Login, FinalizeNeedsThreeClicksAndFourthClickIsRejected) {
  World w;
  const std::string uid = w.enroll("alice", {LR, LR, LR});
  SeededRandom rng(4);
  const LoginStart start = w.auth.start_login("alice", kT0, rng);
  w.auth.submit_click(start.session_id, click_at(w.password(uid, 1).image_id, {0, 0}), kT0);
  w.auth.submit_click(start.session_id, click_at(w.password(uid, 2).image_id, {0, 0}), kT0);
  EXPECT_EQ(code_of([&] { w.auth.finalize(start.session_id, kT0); }), ErrorCode::State);
  w.auth.submit_click(start.session_id, click_at(w.password(uid, 3).image_id, {0, 0}), kT0);
  EXPECT_FALSE(w.auth.current_challenge(start.session_id));
  EXPECT_EQ(code_of([&] { w.auth.submit_click(start.session_id, click_at(w.password(uid, 3).image_id, {0, 0}), kT0); }),
            ErrorCode::State);
}

TEST(Login, ReplayedFinalizeIsRejected) {
  World w;
  const std::string uid = w.enroll("alice", {LR, LR, LR});
  SeededRandom rng(8);
  const LoginStart start = w.auth.start_login("alice", kT0, rng);
  const OtpDigits otp = w.inbox->take(start.session_id).value();
  for (int l = 1; l <= 3; ++l) {
    const ImagePassword pw = w.password(uid, l);
    w.auth.submit_click(start.session_id, click_at(pw.image_id, expected_cell(pw.status, otp.at_level(l))), kT0);
  }
  EXPECT_EQ(w.auth.finalize(start.session_id, kT0), LoginOutcome::Succeeded);
  EXPECT_EQ(code_of([&] { w.auth.finalize(start.session_id, kT0); }), ErrorCode::State);
  EXPECT_EQ(code_of([&] { w.otp.store().consume(start.session_id, kT0); }), ErrorCode::AlreadyUsed);
}

TEST(Login, CurrentChallengeIsStable) {
  World w;
  const std::string uid = w.enroll("alice", {LR, LR, LR});
  SeededRandom rng(4);
  const LoginStart start = w.auth.start_login("alice", kT0, rng);
  EXPECT_EQ(w.auth.current_challenge(start.session_id), start.challenge);
  EXPECT_EQ(w.auth.current_challenge(start.session_id), start.challenge);
  const ClickResult r = w.auth.submit_click(start.session_id, click_at(w.password(uid, 1).image_id, {1, 1}), kT0);
  EXPECT_EQ(w.auth.current_challenge(start.session_id), r.next);
}

TEST(Login, SessionImagesOnlyForPresentedIds) {
  World w;
  const std::string uid = w.enroll("alice", {LR, LR, LR});
  SeededRandom rng(4);
  const LoginStart start = w.auth.start_login("alice", kT0, rng);
  const SessionImage img = w.auth.session_image(start.session_id, w.password(uid, 1).image_id);
  EXPECT_EQ(img.data, fake_png("alice1"));
  EXPECT_EQ(img.content_type, "image/png");
  for (const auto& id : start.challenge.images) EXPECT_NO_THROW(w.auth.session_image(start.session_id, id));
  // Level 2 not yet revealed.
  EXPECT_EQ(code_of([&] { w.auth.session_image(start.session_id, w.password(uid, 2).image_id); }),
            ErrorCode::NotFound);
  EXPECT_EQ(code_of([&] { w.auth.session_image("nope", start.challenge.images[0]); }), ErrorCode::NotFound);
}

// --- expiry and lockout -----------------------------------------------------

TEST(Expiry, ClickAfterTtlExpiresSession) {
  World w;
  const std::string uid = w.enroll("alice", {LR, LR, LR});
  SeededRandom rng(4);
  const LoginStart start = w.auth.start_login("alice", kT0, rng);
  EXPECT_EQ(code_of([&] { w.auth.submit_click(start.session_id, click_at(w.password(uid, 1).image_id, {0, 0}), kT0 + 601s); }),
            ErrorCode::Expired);
  EXPECT_EQ(w.auth.find_session(start.session_id)->state, SessionState::Expired);
}

TEST(Expiry, OtpLifetimeGovernsFinalize) {
  World w;
  const std::string uid = w.enroll("alice", {LR, LR, LR});
  SeededRandom rng(4);
  const LoginStart start = w.auth.start_login("alice", kT0, rng);
  const OtpDigits otp = w.inbox->take(start.session_id).value();
  for (int l = 1; l <= 3; ++l) {
    const ImagePassword pw = w.password(uid, l);
    w.auth.submit_click(start.session_id, click_at(pw.image_id, expected_cell(pw.status, otp.at_level(l))), kT0);
  }
  // Correct clicks, but the OTP is past its 120 s lifetime.
  EXPECT_EQ(w.auth.finalize(start.session_id, kT0 + 121s), LoginOutcome::Failed);
}

TEST(Expiry, SweepExpiresAndDrops) {
  World w;
  w.enroll("alice", {LR, LR, LR});
  SeededRandom rng(4);
  const LoginStart start = w.auth.start_login("alice", kT0, rng);
  EXPECT_EQ(w.auth.sweep(kT0 + 10s), 0u);
  EXPECT_EQ(w.auth.sweep(kT0 + 601s), 1u);
  EXPECT_EQ(w.auth.find_session(start.session_id)->state, SessionState::Expired);
  w.auth.sweep(kT0 + 1201s);
  EXPECT_EQ(w.auth.session_count(), 0u);
  EXPECT_EQ(w.otp.store().size(), 0u);
}

LoginOutcome failed_login(World& w, const std::string& uid, Timestamp now, std::uint64_t seed) {
  SeededRandom rng(seed);
  const LoginStart start = w.auth.start_login("alice", now, rng);
  for (int l = 1; l <= 3; ++l) {
    const auto ch = w.auth.current_challenge(start.session_id).value();
    const std::string real = w.password(uid, l).image_id;
    const std::string decoy = ch.images[0] == real ? ch.images[1] : ch.images[0];
    w.auth.submit_click(start.session_id, click_at(decoy, {0, 0}), now);
  }
  return w.auth.finalize(start.session_id, now);
}

TEST(Lockout, ThreeFailuresLockFifteenMinutes) {
  World w;
  const std::string uid = w.enroll("alice", {LR, LR, LR});
  failed_login(w, uid, kT0, 1);
  failed_login(w, uid, kT0 + 60s, 2);
  EXPECT_FALSE(w.auth.check_lockout("alice", kT0 + 61s).locked);
  failed_login(w, uid, kT0 + 120s, 3);
  const LockoutStatus st = w.auth.check_lockout("alice", kT0 + 121s);
  EXPECT_TRUE(st.locked);
  EXPECT_EQ(st.retry_after, 899s);

  SeededRandom rng(9);
  try {
    w.auth.start_login("alice", kT0 + 121s, rng);
    ADD_FAILURE() << "expected lockout";
  } catch (const LockedError& e) {
    EXPECT_EQ(e.code(), ErrorCode::Locked);
    EXPECT_EQ(e.retry_after(), 899s);
  }
  EXPECT_FALSE(w.auth.check_lockout("alice", kT0 + 120s + 900s).locked);
  EXPECT_EQ(legit_login(w, uid, "alice", kT0 + 120s + 900s, rng), LoginOutcome::Succeeded);
}

TEST(Lockout, FailuresOutsideWindowDoNotCount) {
  World w;
  const std::string uid = w.enroll("alice", {LR, LR, LR});
  failed_login(w, uid, kT0, 1);
  failed_login(w, uid, kT0 + 600s, 2);
  failed_login(w, uid, kT0 + 900s, 3);  // the first one has aged out
  EXPECT_FALSE(w.auth.check_lockout("alice", kT0 + 901s).locked);
  failed_login(w, uid, kT0 + 1000s, 4);
  EXPECT_TRUE(w.auth.check_lockout("alice", kT0 + 1001s).locked);
}

TEST(Lockout, SuccessClearsFailures) {
  World w;
  const std::string uid = w.enroll("alice", {LR, LR, LR});
  failed_login(w, uid, kT0, 1);
  failed_login(w, uid, kT0 + 1s, 2);
  SeededRandom rng(7);
  EXPECT_EQ(legit_login(w, uid, "alice", kT0 + 2s, rng), LoginOutcome::Succeeded);
  failed_login(w, uid, kT0 + 3s, 3);
  EXPECT_FALSE(w.auth.check_lockout("alice", kT0 + 4s).locked);
}

TEST(Lockout, DisabledNeverLocks) {
  AuthConfig cfg;
  cfg.lockout_enabled = false;
  World w(12, cfg);
  const std::string uid = w.enroll("alice", {LR, LR, LR});
  for (int i = 0; i < 5; ++i) failed_login(w, uid, kT0 + std::chrono::seconds(i), static_cast<std::uint64_t>(i));
  EXPECT_FALSE(w.auth.check_lockout("alice", kT0 + 10s).locked);
}

// Property: with random seeds and users, every challenge shows the real image
// once plus three distinct SYSTEM decoys, and legitimate logins always pass.
TEST(Property, ChallengesAreHonestAndLegitUsersPass) {
  World w(15);
  std::vector<std::string> uids;
  for (int i = 0; i < 4; ++i) {
    uids.push_back(w.enroll("user" + std::to_string(i),
                            {kAllStatuses[static_cast<std::size_t>(i % 4)], kAllStatuses[static_cast<std::size_t>((i + 1) % 4)],
                             kAllStatuses[static_cast<std::size_t>((i + 2) % 4)]}));
  }
  SeededRandom rng(2024);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t u = static_cast<std::size_t>(rng.below(uids.size()));
    const std::string name = "user" + std::to_string(u);
    const LoginStart start = w.auth.start_login(name, kT0, rng);
    const LoginSession s = w.auth.find_session(start.session_id).value();
    for (std::size_t l = 0; l < 3; ++l) {
      int real = 0;
      for (const auto& id : s.challenges[l].images) {
        if (id == s.expected[l].image_id) {
          ++real;
        } else {
          ASSERT_EQ(w.vault.owner_of(id), std::string(kSystemOwner));
        }
      }
      ASSERT_EQ(real, 1);
    }
    w.auth.discard_session(start.session_id);
    w.inbox->take(start.session_id);
    ASSERT_EQ(legit_login(w, uids[u], name, kT0, rng), LoginOutcome::Succeeded);
  }
}

}  // namespace
}  // namespace clickotp
