#pragma once

#include <stdexcept>
#include <string>
#include <vector>
#include <weakpde/trainer.hpp>

namespace weakpde {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// One experiment: where the samples live, which candidate terms to weigh,
// and every training knob. Field names double as the config-file keys.
struct RunConfig {
  std::vector<std::string> datasets;  // dataset file paths, at least one
  std::string lhs = "D_t U";
  std::vector<std::string> terms;  // empty means the default 1-D library
  TrainConfig train;

  LibrarySpec library() const;  // parses lhs/terms, throws ConfigError
  void validate() const;
};

// Applies one `key = value` assignment; key "dataset" appends, "terms" takes a
// comma-separated list, everything else matches a RunConfig/TrainConfig field.
// Throws ConfigError naming the offending field.
void apply_kv(RunConfig& cfg, const std::string& key, const std::string& value);

// key = value lines; # starts a comment, blank lines are skipped.
RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::string& path);

// Echo that parses back to an identical configuration.
std::string dump_run_config(const RunConfig& cfg);

}  // namespace weakpde
