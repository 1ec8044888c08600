// Command-line front end.  Everything goes through the public C API so this
// binary doubles as a smoke test of the shared library surface.
#include <csignal>
#include <cstdint>
#include <cstdio>
#include <string>

#include "CLI11.hpp"

#include "metalora/metalora.h"

namespace {

void print_line(const char* line, void* /*user*/) {
  std::fputs(line, stdout);
  std::fputc('\n', stdout);
  std::fflush(stdout);
}

extern "C" void on_sigint(int /*sig*/) { mtk_request_interrupt(); }

int report(int status) {
  if (status != 0) {
    const char* msg = mtk_last_error();
    if (msg != nullptr && msg[0] != '\0') std::fprintf(stderr, "metalora: %s\n", msg);
  }
  return status;
}

}  // namespace

int main(int argc, char** argv) {
  std::signal(SIGINT, on_sigint);

  CLI::App app{"metalora: tensor-network adapters with generated parameter seeds"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(mtk_version()));

  std::string filter;
  std::string verify_out = "verify_out";
  CLI::App* verify = app.add_subcommand("verify", "run the property suites");
  verify->add_option("--filter", filter,
                     "only one module's suites (tensor_core, adapters, meta_net, training)");
  verify->add_option("--out", verify_out, "report directory")->capture_default_str();

  std::string gen_config;
  CLI::App* gen = app.add_subcommand("gen-data", "materialize the synthetic datasets");
  gen->add_option("--config", gen_config, "run config (JSON)")->required();

  std::string train_config, train_out;
  std::uint64_t train_seed = 0;
  bool have_seed = false;
  CLI::App* train = app.add_subcommand("train", "train one adapter arm");
  train->add_option("--config", train_config, "run config (JSON)")->required();
  CLI::Option* seed_opt = train->add_option("--seed", train_seed, "override config seed");
  train->add_option("--out", train_out, "override config output directory");

  std::string cmp_config;
  CLI::App* cmp = app.add_subcommand("compare", "full arm x seed comparison");
  cmp->add_option("--config", cmp_config, "run config (JSON)")->required();

  CLI11_PARSE(app, argc, argv);
  have_seed = seed_opt->count() > 0;

  if (verify->parsed()) {
    return report(mtk_cmd_verify(filter.empty() ? nullptr : filter.c_str(), verify_out.c_str(),
                                 print_line, nullptr));
  }
  if (gen->parsed()) {
    return report(mtk_cmd_gen_data(gen_config.c_str(), print_line, nullptr));
  }
  if (train->parsed()) {
    return report(mtk_cmd_train(train_config.c_str(), have_seed ? &train_seed : nullptr,
                                train_out.empty() ? nullptr : train_out.c_str(), print_line,
                                nullptr));
  }
  if (cmp->parsed()) {
    return report(mtk_cmd_compare(cmp_config.c_str(), print_line, nullptr));
  }
  return 0;
}
