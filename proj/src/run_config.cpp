#include <weakpde/run_config.hpp>

#include <cctype>
#include <climits>
#include <fstream>
#include <sstream>

namespace weakpde {

namespace {

std::string trim(const std::string& s) {
  size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

double to_double(const std::string& key, const std::string& value) {
  try {
    size_t used = 0;
    const double v = std::stod(value, &used);
    if (used == value.size()) return v;
  } catch (const std::exception&) {
  }
  throw ConfigError("config: " + key + ": expected a number, got '" + value +
                    "'");
}

long long to_ll(const std::string& key, const std::string& value) {
  try {
    size_t used = 0;
    const long long v = std::stoll(value, &used);
    if (used == value.size()) return v;
  } catch (const std::exception&) {
  }
  throw ConfigError("config: " + key + ": expected an integer, got '" + value +
                    "'");
}

int to_int(const std::string& key, const std::string& value) {
  const long long v = to_ll(key, value);
  if (v < INT_MIN || v > INT_MAX)
    throw ConfigError("config: " + key + ": value out of range");
  return static_cast<int>(v);
}

std::vector<std::string> split_terms(const std::string& value) {
  std::vector<std::string> out;
  std::string piece;
  std::stringstream ss(value);
  while (std::getline(ss, piece, ',')) {
    piece = trim(piece);
    if (piece.empty())
      throw ConfigError("config: terms: empty entry in term list");
    out.push_back(piece);
  }
  if (out.empty()) throw ConfigError("config: terms: empty term list");
  return out;
}

}  // namespace

LibrarySpec RunConfig::library() const {
  LibrarySpec lib;
  try {
    lib.lhs = parse_term(lhs);
  } catch (const ParseError& e) {
    throw ConfigError("config: lhs: " + std::string(e.what()));
  }
  if (terms.empty()) {
    lib.rhs = LibrarySpec::default_1d().rhs;
  } else {
    for (const auto& t : terms) {
      try {
        lib.rhs.push_back(parse_term(t));
      } catch (const ParseError& e) {
        throw ConfigError("config: terms: " + std::string(e.what()));
      }
    }
  }
  try {
    lib.validate();
  } catch (const std::exception& e) {
    throw ConfigError("config: terms: " + std::string(e.what()));
  }
  return lib;
}

void RunConfig::validate() const {
  if (datasets.empty())
    throw ConfigError("config: dataset: at least one dataset file is required");
  library();
  try {
    train.validate();
  } catch (const std::exception& e) {
    throw ConfigError("config: " + std::string(e.what()));
  }
}

void apply_kv(RunConfig& cfg, const std::string& raw_key,
              const std::string& raw_value) {
  const std::string key = trim(raw_key);
  const std::string value = trim(raw_value);
  TrainConfig& t = cfg.train;
  if (key == "dataset") {
    if (value.empty())
      throw ConfigError("config: dataset: empty path");
    cfg.datasets.push_back(value);
  } else if (key == "lhs") {
    cfg.lhs = value;
  } else if (key == "terms") {
    cfg.terms = split_terms(value);
  } else if (key == "lambda_data") {
    t.lambda_data = to_double(key, value);
  } else if (key == "lambda_weak") {
    t.lambda_weak = to_double(key, value);
  } else if (key == "lambda_lp") {
    t.lambda_lp = to_double(key, value);
  } else if (key == "p") {
    t.p = to_double(key, value);
  } else if (key == "delta") {
    t.delta = to_double(key, value);
  } else if (key == "n_random") {
    t.n_random = to_int(key, value);
  } else if (key == "resample_period") {
    t.resample_period = to_int(key, value);
  } else if (key == "weight_beta") {
    t.weight_beta = to_double(key, value);
  } else if (key == "quad_nodes") {
    t.quad_nodes = to_int(key, value);
  } else if (key == "radius_min") {
    t.radius_min = to_double(key, value);
  } else if (key == "radius_max") {
    t.radius_max = to_double(key, value);
  } else if (key == "n_burn") {
    t.n_burn = to_int(key, value);
  } else if (key == "n_sparse") {
    t.n_sparse = to_int(key, value);
  } else if (key == "n_tune") {
    t.n_tune = to_int(key, value);
  } else if (key == "tune_patience") {
    t.tune_patience = to_int(key, value);
  } else if (key == "adam_lr") {
    t.adam_lr = to_double(key, value);
  } else if (key == "lbfgs_history") {
    t.lbfgs_history = to_int(key, value);
  } else if (key == "lbfgs_max_line_steps") {
    t.lbfgs_max_line_steps = to_int(key, value);
  } else if (key == "hidden_layers") {
    t.hidden_layers = to_int(key, value);
  } else if (key == "width") {
    t.width = to_int(key, value);
  } else if (key == "checkpoint_every") {
    t.checkpoint_every = to_int(key, value);
  } else if (key == "out_dir") {
    t.out_dir = value;
  } else if (key == "seed") {
    t.seed = static_cast<std::uint64_t>(to_ll(key, value));
  } else {
    throw ConfigError("config: no such field '" + key + "'");
  }
}

RunConfig parse_run_config(const std::string& text) {
  RunConfig cfg;
  std::stringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) +
                        ": expected key = value");
    try {
      apply_kv(cfg, line.substr(0, eq), line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError(std::string(e.what()) + " (line " +
                        std::to_string(lineno) + ")");
    }
  }
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("config: cannot read " + path);
  std::stringstream buf;
  buf << f.rdbuf();
  return parse_run_config(buf.str());
}

std::string dump_run_config(const RunConfig& cfg) {
  std::string s;
  for (const auto& d : cfg.datasets) s += "dataset = " + d + "\n";
  s += "lhs = " + cfg.lhs + "\n";
  if (!cfg.terms.empty()) {
    s += "terms = ";
    for (size_t i = 0; i < cfg.terms.size(); ++i)
      s += (i ? ", " : "") + cfg.terms[i];
    s += "\n";
  }
  s += cfg.train.echo();
  return s;
}

}  // namespace weakpde
