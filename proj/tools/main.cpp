#include <cstdio>
#include <exception>
#include <string>

#include <CLI11.hpp>

#include "hgff/error.hpp"
#include "hgff/experiment.hpp"
#include "hgff/version.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Hadamard flow operator and Gaussian free field sampler"};
  app.set_version_flag("--version", std::string(hgff::kVersion));
  app.require_subcommand(1);

  std::string config_path;
  std::string manifest_path;
  std::string out_dir = ".";
  bool check = false;
  int threads = 0;

  CLI::App* run = app.add_subcommand("run", "Run an experiment described by a JSON config");
  run->add_option("config", config_path, "JSON config file")->required();
  run->add_flag("--check", check, "Evaluate pass/fail thresholds; exit 2 on failure");
  run->add_option("--out", out_dir, "Output directory (default: current directory)");
  run->add_option("--threads", threads,
                  "Worker threads (default: HADAMARD_GFF_THREADS or hardware count)");

  CLI::App* reproduce =
      app.add_subcommand("reproduce", "Re-run the experiment recorded in a manifest");
  reproduce->add_option("manifest", manifest_path, "manifest.json of a previous run")->required();
  reproduce->add_option("--out", out_dir, "Output directory (default: current directory)");

  CLI11_PARSE(app, argc, argv);

  try {
    hgff::RunOptions opts;
    opts.out_dir = out_dir;
    opts.check = check;
    opts.threads = threads;
    hgff::RunResult result = run->parsed()
                                 ? hgff::run_experiment(hgff::load_config_file(config_path), opts)
                                 : hgff::reproduce_from_manifest(manifest_path, opts);
    return result.exit_code;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
