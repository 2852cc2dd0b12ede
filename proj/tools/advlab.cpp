#include <CLI11.hpp>

#include <iostream>

#include "advlab/cli/commands.hpp"

namespace {

struct CommonArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads;
  std::optional<std::string> out;
};

void add_common(CLI::App* sub, CommonArgs& a) {
  sub->add_option("--config", a.config, "JSON config file")->required();
  sub->add_option("--seed", a.seed, "global seed (overrides the config)");
  sub->add_option("--threads", a.threads, "worker threads (overrides the config)")->check(CLI::PositiveNumber);
  sub->add_option("--out", a.out, "output directory (overrides the config)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adversarial robustness and transferability lab"};
  app.require_subcommand(1);
  CommonArgs args;
  std::string command;

  for (const char* name : {"train", "eval", "attack", "report"}) {
    auto* sub = app.add_subcommand(name);
    add_common(sub, args);
    sub->callback([&command, name] { command = name; });
  }
  auto* bench = app.add_subcommand("bench", "transfer benchmark");
  bench->require_subcommand(1);
  for (const char* name : {"build", "run"}) {
    auto* sub = bench->add_subcommand(name);
    add_common(sub, args);
    sub->callback([&command, name] { command = std::string("bench ") + name; });
  }

  CLI11_PARSE(app, argc, argv);

  try {
    advlab::cli::Overrides o{args.seed, args.threads, std::nullopt};
    if (args.out) o.out = *args.out;
    advlab::cli::run_command(command, advlab::cli::read_json_file(args.config), o);
  } catch (const std::exception& e) {
    std::cerr << "advlab: error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
