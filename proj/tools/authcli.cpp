// authcli: password-space evaluation and attacker simulations.
//
//   authcli space  [--w 450] [--h 450] [--t 150] [--m 4] [--n 4] [--c 3] [--csv]
//   authcli attack --model {blind|known-images|session-observer} --trials N --seed S [--csv]

#include <iostream>

#include <CLI11.hpp>

#include "clickotp/analysis.hpp"

namespace {

constexpr int kUsageError = 2;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Click-point + one-time-key authentication: security analysis"};
  app.require_subcommand(1);

  clickotp::SpaceParams space;
  bool space_csv = false;
  auto* space_cmd = app.add_subcommand("space", "Exact theoretical password space");
  space_cmd->set_help_flag("--help", "Print this help message and exit");  // frees -h for --h
  space_cmd->add_option("--w", space.w, "Image width in pixels")->capture_default_str();
  space_cmd->add_option("--h", space.h, "Image height in pixels")->capture_default_str();
  space_cmd->add_option("--t", space.t, "Tolerance-square side in pixels")->capture_default_str();
  space_cmd->add_option("--m", space.m, "Images per challenge level")->capture_default_str();
  space_cmd->add_option("--n", space.n, "Number of labeling statuses")->capture_default_str();
  space_cmd->add_option("--c", space.c, "Number of levels (click points)")->capture_default_str();
  space_cmd->add_flag("--csv", space_csv, "Machine-readable CSV output");

  std::string model_name;
  clickotp::AttackerModel model;
  bool attack_csv = false;
  unsigned threads = 0;
  auto* attack_cmd = app.add_subcommand("attack", "Monte Carlo attack against an in-memory deployment");
  attack_cmd->add_option("--model", model_name, "blind | known-images | session-observer")->required();
  attack_cmd->add_option("--trials", model.trials, "Simulated login attempts")->capture_default_str();
  attack_cmd->add_option("--seed", model.seed, "RNG seed")->capture_default_str();
  attack_cmd->add_option("--threads", threads, "Worker threads (0 = hardware)")->capture_default_str();
  attack_cmd->add_flag("--csv", attack_csv, "Machine-readable CSV output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsageError;
  }

  try {
    if (*space_cmd) {
      std::cout << clickotp::render_space(space, space_csv);
      return 0;
    }
    const auto kind = clickotp::parse_attacker(model_name);
    if (!kind) {
      std::cerr << "error: --model must be blind, known-images or session-observer\n";
      return kUsageError;
    }
    model.kind = *kind;
    std::cout << clickotp::render_attack(clickotp::run_attack(model, threads), attack_csv);
    return 0;
  } catch (const clickotp::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    const bool usage = e.code() == clickotp::ErrorCode::Domain || e.code() == clickotp::ErrorCode::Refused;
    return usage ? kUsageError : 1;
  }
}
