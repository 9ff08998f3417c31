// Command-line front end. See `tmut --help`.
#include <iostream>

#include "CLI11.hpp"
#include "tmut/harness/commands.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Traffic mutation experiments against packet-level intrusion detectors"};
  app.require_subcommand(1);

  tmut::CommandOptions opt;
  std::uint64_t seed = 0;
  std::string out;
  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", opt.config, "JSON experiment config")->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "override the config seed");
    sub->add_option("--out", out, "output directory (overrides the config)");
  };

  const char* help[] = {"generate or split traffic into the scenario pcaps",
                        "extract target features for the training and attack traces",
                        "train and calibrate the target detector",
                        "train the GAN and emit adversarial features",
                        "run one attack end to end",
                        "apply a defense and re-run the attack",
                        "measure feature distance against mutation overhead",
                        "summarize finished runs"};
  for (std::size_t i = 0; i < tmut::command_names().size(); ++i) {
    CLI::App* sub = app.add_subcommand(tmut::command_names()[i], help[i]);
    common(sub);
    if (tmut::command_names()[i] == "defend") {
      sub->add_option("--defense", opt.defense, "AT, FS or AFR")->check(CLI::IsMember({"AT", "FS", "AFR"}));
      sub->add_option("--retain", opt.retain, "fraction of dimensions kept by FS/AFR");
    }
    if (tmut::command_names()[i] == "report") sub->add_option("runs", opt.inputs, "run directories")->required();
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : tmut::kExitConfig;
  }

  CLI::App* sub = app.get_subcommands().front();
  if (sub->count("--seed")) opt.seed = seed;
  if (sub->count("--out")) opt.out = out;
  return tmut::run_command(sub->get_name(), opt, std::cerr);
}
