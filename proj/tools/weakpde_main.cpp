// Command-line surface: generate synthetic datasets, train a discovery run
// from a config file, and summarize a finished (or aborted) run directory.
//
// Exit codes: 0 success, 2 configuration/usage error, 3 runtime abort.

#include <CLI11.hpp>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <weakpde/run_config.hpp>
#include <weakpde/synthetic_data.hpp>

namespace fs = std::filesystem;
using namespace weakpde;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitAbort = 3;

// Relative output paths land under WEAKPDE_OUT_ROOT when it is set.
fs::path resolve_out(const std::string& path) {
  fs::path p(path);
  if (p.is_absolute()) return p;
  if (const char* root = std::getenv("WEAKPDE_OUT_ROOT"))
    if (*root) return fs::path(root) / p;
  return p;
}

int cmd_generate(const std::string& preset_name, int n, double noise,
                 std::uint64_t seed, const std::string& out) {
  PdePreset preset;
  try {
    preset = preset_by_name(preset_name);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  }
  if (n < 1) {
    std::cerr << "error: --n must be positive\n";
    return kExitConfig;
  }
  if (noise < 0) {
    std::cerr << "error: --noise must be non-negative\n";
    return kExitConfig;
  }
  const fs::path dir =
      resolve_out(out.empty() ? preset.name + "_data" : out);
  try {
    const GridSolution grid = solve_etdrk4(preset);
    const Dataset ds = corrupt(grid, n, noise, seed);
    fs::create_directories(dir);
    const fs::path data_path = dir / "dataset.txt";
    const fs::path grid_path = dir / "noise_free.txt";
    write_dataset(data_path.string(), ds);
    write_grid(grid_path.string(), grid);
    std::printf("sigma_nf = %.17g\n", ds.sigma_nf);
    std::printf("dataset: %s\n", data_path.string().c_str());
    std::printf("sidecar: %s\n", (data_path.string() + ".meta.json").c_str());
    std::printf("noise-free grid: %s\n", grid_path.string().c_str());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitAbort;
  }
  return 0;
}

int cmd_train(const std::string& config_path,
              const std::vector<std::string>& overrides,
              const std::string& out_flag, long long seed_flag) {
  RunConfig cfg;
  std::vector<Dataset> datasets;
  try {
    cfg = load_run_config(config_path);
    for (const auto& kv : overrides) {
      const size_t eq = kv.find('=');
      if (eq == std::string::npos)
        throw ConfigError("config: --set expects key=value, got '" + kv + "'");
      apply_kv(cfg, kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (!out_flag.empty()) cfg.train.out_dir = out_flag;
    if (seed_flag >= 0) cfg.train.seed = static_cast<std::uint64_t>(seed_flag);
    if (cfg.train.out_dir.empty()) cfg.train.out_dir = "run";
    cfg.validate();
    for (const auto& path : cfg.datasets) {
      try {
        datasets.push_back(read_dataset(path));
      } catch (const std::exception& e) {
        throw ConfigError("config: dataset: " + std::string(e.what()));
      }
    }
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  }

  const fs::path out = resolve_out(cfg.train.out_dir);
  cfg.train.out_dir = out.string();
  try {
    fs::create_directories(out);
    {
      std::ofstream f(out / "config.txt", std::ios::trunc);
      f << dump_run_config(cfg);
      if (!f) throw std::runtime_error("cannot write " +
                                       (out / "config.txt").string());
    }
    const TrainResult res =
        run_training(cfg.train, datasets, cfg.library(), nullptr);
    std::printf("identified PDE: %s\n", res.pde.c_str());
    std::printf("report: %s\n", (out / "report.txt").string().c_str());
  } catch (const TrainAbort& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitAbort;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitAbort;
  }
  return 0;
}

int cmd_report(const std::string& run_dir) {
  const fs::path dir = resolve_out(run_dir);
  const fs::path state_path = dir / "checkpoint" / "state.json";
  std::ifstream f(state_path);
  if (!f) {
    std::cerr << "error: no run found in " << dir.string() << " (missing "
              << state_path.string() << ")\n";
    return kExitConfig;
  }
  nlohmann::json state;
  try {
    state = nlohmann::json::parse(f);
  } catch (const std::exception& e) {
    std::cerr << "error: unreadable checkpoint: " << e.what() << '\n';
    return kExitAbort;
  }
  try {
    const std::string phase = state.at("phase").get<std::string>();
    if (phase != "done")
      std::printf(
          "warning: run is incomplete; summarizing the last checkpoint "
          "(phase %s, %d epochs)\n",
          phase.c_str(), state.at("epochs_completed").get<int>());
    std::printf("identified PDE: %s\n",
                state.at("pde").get<std::string>().c_str());
    std::printf("\n%-14s %-22s %s\n", "term", "coefficient", "state");
    const auto& terms = state.at("terms");
    const auto& xi = state.at("xi");
    const auto& active = state.at("active");
    for (size_t m = 0; m < terms.size(); ++m)
      std::printf("%-14s % -22.10g %s\n",
                  terms[m].get<std::string>().c_str(), xi[m].get<double>(),
                  active[m].get<int>() ? "active" : "masked");
    const auto& per = state.at("epochs_per_phase");
    std::printf("\nepochs: burn-in %d, sparsification %d, fine-tuning %d\n",
                per[0].get<int>(), per[1].get<int>(), per[2].get<int>());
    std::printf("seed: %llu\n",
                static_cast<unsigned long long>(
                    state.at("seed").get<std::uint64_t>()));

    const fs::path table_path = dir / "loss_history.txt";
    std::ofstream tf(table_path, std::ios::trunc);
    tf << "epoch\tphase\tdata\tweak\tlp\tactive\tK\n";
    for (const auto& row : state.at("history")) {
      char line[160];
      std::snprintf(line, sizeof line, "%d\t%s\t%.17g\t%.17g\t%.17g\t%d\t%d\n",
                    row[0].get<int>(), row[1].get<std::string>().c_str(),
                    row[2].get<double>(), row[3].get<double>(),
                    row[4].get<double>(), row[5].get<int>(),
                    row[6].get<int>());
      tf << line;
    }
    if (!tf) throw std::runtime_error("cannot write " + table_path.string());
    std::printf("loss history: %s\n", table_path.string().c_str());
  } catch (const std::exception& e) {
    std::cerr << "error: malformed checkpoint: " << e.what() << '\n';
    return kExitAbort;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"weak-form PDE discovery toolkit"};
  app.require_subcommand(1);

  std::string gen_preset, gen_out;
  int gen_n = 4000;
  double gen_noise = 0.25;
  std::uint64_t gen_seed = 1;
  auto* gen = app.add_subcommand("generate", "solve a preset and sample it");
  gen->add_option("preset", gen_preset, "burgers | kdv | ks | kdv-sine")
      ->required();
  gen->add_option("--n", gen_n, "number of sample points");
  gen->add_option("--noise", gen_noise, "noise SD as a fraction of sigma_nf");
  gen->add_option("--seed", gen_seed, "sampling seed");
  gen->add_option("--out", gen_out, "output directory (default <preset>_data)");

  std::string train_config, train_out;
  long long train_seed = -1;
  std::vector<std::string> train_sets;
  auto* train = app.add_subcommand("train", "run discovery from a config file");
  train->add_option("config", train_config, "key = value config file")
      ->required();
  train->add_option("--set", train_sets, "override one field, key=value");
  train->add_option("--out", train_out, "override the output directory");
  train->add_option("--seed", train_seed, "override the seed");

  std::string report_dir;
  auto* report = app.add_subcommand("report", "summarize a run directory");
  report->add_option("run_dir", report_dir, "directory a train run wrote")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) ? kExitConfig : 0;
  }

  if (gen->parsed())
    return cmd_generate(gen_preset, gen_n, gen_noise, gen_seed, gen_out);
  if (train->parsed())
    return cmd_train(train_config, train_sets, train_out, train_seed);
  return cmd_report(report_dir);
}
