// authd: the authentication HTTP service.
//
// Environment:
//   MASTER_KEY       vault master secret, hex or base64 (required)
//   VAULT_PATH       sealed image records + user registry (default ./vault)
//   DECOY_DIR        directory of decoy images ingested at startup
//   BIND_ADDR        host:port (default 127.0.0.1:8080)
//   STATIC_DIR       optional web assets served at /
//   OTP_TTL_SECONDS, OTP_TRANSPORT, OTP_FILE_DIR, OTP_WEBHOOK_URL

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <csignal>
#include <cstdlib>
#include <iostream>
#include <mutex>
#include <thread>

#include "clickotp/auth.hpp"
#include "clickotp/http_api.hpp"
#include "clickotp/otp_webhook.hpp"
#include "clickotp/vault.hpp"

namespace {

clickotp::ApiServer* g_server = nullptr;

void on_signal(int) {
  if (g_server) g_server->stop();
}

std::string env_or(const char* name, const char* fallback) {
  const char* v = std::getenv(name);
  return v && *v ? v : fallback;
}

}  // namespace

int main() {
  using namespace clickotp;
  try {
    const char* master = std::getenv("MASTER_KEY");
    if (!master || !*master) fail(ErrorCode::Config, "MASTER_KEY is required");

    const std::filesystem::path vault_path = env_or("VAULT_PATH", "vault");
    ImageVault vault(ImageCipher(ImageCipher::parse_master_key(master)),
                     std::make_unique<DirectoryRecordStore>(vault_path / "images"));
    if (const std::string decoys = env_or("DECOY_DIR", ""); !decoys.empty()) {
      const std::size_t added = vault.ingest_decoys(decoys);
      std::cerr << "authd: ingested " << added << " new decoys (" << vault.decoy_count() << " total)\n";
    }
    if (vault.decoy_count() < kDecoysPerLevel * kLevels) {
      std::cerr << "authd: warning: decoy pool has " << vault.decoy_count()
                << " images; logins need at least " << kDecoysPerLevel * kLevels << "\n";
    }

    const OtpConfig otp_cfg = OtpConfig::from_env();
    OtpService otp(make_transport(otp_cfg), otp_cfg.ttl);

    AuthConfig auth_cfg;
    auth_cfg.registry_file = vault_path / "users.json";
    TimingLedger timings;
    AuthService auth(vault, otp, auth_cfg, &timings);

    SystemRandom rng;
    ApiOptions options;
    options.static_dir = env_or("STATIC_DIR", "");
    ApiServer server(auth, timings, rng, [] { return Clock::now(); }, options);
    g_server = &server;
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);

    const BindAddress bind = BindAddress::from_env();
    if (!server.bind(bind.host, bind.port)) fail(ErrorCode::Config, "cannot bind " + bind.host);
    std::cerr << "authd: listening on " << bind.host << ':' << bind.port << " (OTP transport "
              << to_string(otp_cfg.transport) << ")\n";

    std::mutex mu;
    std::condition_variable cv;
    bool stopping = false;
    std::thread sweeper([&] {
      std::unique_lock lock(mu);
      while (!cv.wait_for(lock, std::chrono::seconds(30), [&] { return stopping; })) {
        auth.sweep(Clock::now());
      }
    });

    server.listen_after_bind();
    {
      std::lock_guard lock(mu);
      stopping = true;
    }
    cv.notify_all();
    sweeper.join();
    g_server = nullptr;
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "authd: " << e.what() << '\n';
    return 1;
  }
}
