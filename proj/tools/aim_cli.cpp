// Command-line front end for the manipulation pipeline. One subcommand per
// stage; every stage reads --config, derives its inputs from the shared
// output directory, and writes a manifest next to its artifacts.
//
// Exit codes: 0 ok, 1 invariant/verification failure, 2 missing
// prerequisite artifact, 3 configuration error.

#include <cstdio>
#include <exception>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "aim/error.hpp"
#include "aim/pipeline.hpp"

int main(int argc, char** argv) {
  CLI::App app{"articulated-object interaction pipeline"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_override, dataset_override;
  std::int64_t seed_override = -1;
  int threads_override = 0;
  bool force = false;

  app.add_option("--config", config_path, "pipeline config file (TOML-style)")
      ->required();
  app.add_option("--seed", seed_override, "override pipeline.seed");
  app.add_option("--out", out_override, "override pipeline.out");
  app.add_option("--dataset-dir", dataset_override,
                 "override pipeline.dataset_dir");
  app.add_option("--threads", threads_override, "override pipeline.threads");
  app.add_flag("--force", force, "re-run the stage even if up to date");

  for (const std::string& stage : aim::Pipeline::stage_names())
    app.add_subcommand(stage, "run the '" + stage + "' stage");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);  // prints help / error text
    return code == 0 ? 0 : 3;
  }

  const std::string stage = app.get_subcommands().front()->get_name();
  try {
    aim::KvConfig kv = aim::KvConfig::parse_file(config_path);
    if (seed_override >= 0)
      kv.set("pipeline.seed", std::to_string(seed_override));
    if (!out_override.empty()) kv.set("pipeline.out", out_override);
    if (!dataset_override.empty())
      kv.set("pipeline.dataset_dir", dataset_override);
    if (threads_override > 0)
      kv.set("pipeline.threads", std::to_string(threads_override));

    aim::Pipeline pipeline(aim::pipeline_config_from(kv));
    if (stage == "verify") {
      std::vector<std::string> fails = pipeline.verify();
      if (fails.empty()) {
        std::cout << "verify: all manifests and artifacts check out\n";
        return 0;
      }
      for (const std::string& f : fails) std::cerr << "verify: " << f << "\n";
      return 1;
    }
    bool ran = pipeline.run_stage(stage, force);
    std::cout << stage << (ran ? ": done\n" : ": up to date, skipped\n");
    return 0;
  } catch (const aim::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 3;
  } catch (const aim::PrerequisiteError& e) {
    std::cerr << "missing prerequisite: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
