#include <weakpde/trainer.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <limits>
#include <ostream>
#include <set>
#include <weakpde/optimizers.hpp>
#include <weakpde/rng.hpp>

#ifdef __GLIBC__
#include <malloc.h>
#endif

namespace weakpde {

namespace {

// Nodes per evaluation chunk. Small enough that one chunk's forward traces
// stay cache-resident for the backward pass (2x faster than 32k-row chunks
// at the default 40-node quadrature); large enough to keep GEMMs efficient.
constexpr Eigen::Index kChunkRows = 2048;
const char* const kPhaseNames[3] = {"burn-in", "sparsification", "fine-tuning"};

std::string num(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string sci(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.6e", v);
  return buf;
}

}  // namespace

void TrainConfig::validate() const {
  auto bad = [](const std::string& what) {
    throw std::runtime_error("training config: " + what);
  };
  if (!(lambda_data >= 0) || !std::isfinite(lambda_data))
    bad("lambda_data must be a non-negative real");
  if (!(lambda_weak >= 0) || !std::isfinite(lambda_weak))
    bad("lambda_weak must be a non-negative real");
  if (!(lambda_lp >= 0) || !std::isfinite(lambda_lp))
    bad("lambda_lp must be a non-negative real");
  if (!(p > 0.0) || !(p <= 1.0)) bad("p must lie in (0, 1]");
  if (!(delta > 0.0)) bad("delta must be positive");
  if (n_random < 1) bad("n_random must be positive");
  if (resample_period < 1) bad("resample_period must be positive");
  if (!(weight_beta > 0.0)) bad("weight_beta must be positive");
  if (quad_nodes < 3) bad("quad_nodes must be at least 3");
  if (!(radius_min > 0.0) || !(radius_min <= radius_max))
    bad("need 0 < radius_min <= radius_max");
  if (n_burn < 0 || n_sparse < 0 || n_tune < 0)
    bad("epoch counts must be non-negative");
  if (tune_patience < 1) bad("tune_patience must be positive");
  if (!(adam_lr > 0.0)) bad("adam_lr must be positive");
  if (lbfgs_history < 1) bad("lbfgs_history must be positive");
  if (lbfgs_max_line_steps < 1) bad("lbfgs_max_line_steps must be positive");
  if (hidden_layers < 1 || width < 1)
    bad("network dimensions must be positive");
  if (checkpoint_every < 0) bad("checkpoint_every must be non-negative");
}

std::string TrainConfig::echo() const {
  std::string s;
  s += "lambda_data = " + num(lambda_data) + "\n";
  s += "lambda_weak = " + num(lambda_weak) + "\n";
  s += "lambda_lp = " + num(lambda_lp) + "\n";
  s += "p = " + num(p) + "\n";
  s += "delta = " + num(delta) + "\n";
  s += "n_random = " + std::to_string(n_random) + "\n";
  s += "resample_period = " + std::to_string(resample_period) + "\n";
  s += "weight_beta = " + num(weight_beta) + "\n";
  s += "quad_nodes = " + std::to_string(quad_nodes) + "\n";
  s += "radius_min = " + num(radius_min) + "\n";
  s += "radius_max = " + num(radius_max) + "\n";
  s += "n_burn = " + std::to_string(n_burn) + "\n";
  s += "n_sparse = " + std::to_string(n_sparse) + "\n";
  s += "n_tune = " + std::to_string(n_tune) + "\n";
  s += "tune_patience = " + std::to_string(tune_patience) + "\n";
  s += "adam_lr = " + num(adam_lr) + "\n";
  s += "lbfgs_history = " + std::to_string(lbfgs_history) + "\n";
  s += "lbfgs_max_line_steps = " + std::to_string(lbfgs_max_line_steps) + "\n";
  s += "hidden_layers = " + std::to_string(hidden_layers) + "\n";
  s += "width = " + std::to_string(width) + "\n";
  s += "checkpoint_every = " + std::to_string(checkpoint_every) + "\n";
  s += "out_dir = " + out_dir + "\n";
  s += "seed = " + std::to_string(seed) + "\n";
  return s;
}

double data_loss(const NetworkConfig& cfg, const Eigen::VectorXd& net_params,
                 const Dataset& ds) {
  const Eigen::Index n = ds.n_data();
  if (n == 0) throw std::runtime_error("data loss: dataset is empty");
  Eigen::ArrayXXd pts(n, 2);
  pts.col(0) = ds.t;
  pts.col(1) = ds.x;
  const Eigen::ArrayXd u = evaluate(cfg, net_params, pts);
  return (u - ds.value.array()).square().mean();
}

double lp_loss(const CoefficientVector& xi, const Eigen::VectorXd& eta) {
  const Eigen::Index m = xi.values.size();
  if (eta.size() != m || static_cast<Eigen::Index>(xi.active.size()) != m)
    throw std::runtime_error("lp loss: eta does not match the coefficients");
  double s = 0;
  for (Eigen::Index i = 0; i < m; ++i)
    if (xi.active[i]) s += eta[i] * xi.values[i] * xi.values[i];
  return s;
}

Eigen::VectorXd refresh_eta(const CoefficientVector& xi, double p,
                            double delta) {
  if (!(p > 0.0) || !(p <= 1.0) || !(delta > 0.0))
    throw std::runtime_error("eta: need p in (0, 1] and delta > 0");
  Eigen::VectorXd eta(xi.values.size());
  for (Eigen::Index i = 0; i < eta.size(); ++i)
    eta[i] = 1.0 / std::max(std::pow(std::abs(xi.values[i]), 2.0 - p), delta);
  return eta;
}

std::vector<int> update_targeted_weights(const Eigen::VectorXd& residuals,
                                         const std::vector<int>& row_ids) {
  const Eigen::Index k = residuals.size();
  if (static_cast<Eigen::Index>(row_ids.size()) != k)
    throw std::runtime_error("targeted: one id per residual required");
  if (k < 2) return {};
  const double mean = residuals.mean();
  const double sd =
      std::sqrt((residuals.array() - mean).square().sum() / double(k - 1));
  const double bar = mean + 2.0 * sd;
  std::vector<int> out;
  for (Eigen::Index i = 0; i < k; ++i)
    if (residuals[i] > bar) out.push_back(row_ids[i]);
  return out;
}

CoefficientVector threshold_xi(CoefficientVector xi, double delta) {
  if (!(delta > 0.0)) throw std::runtime_error("threshold: delta must be positive");
  const double root = std::sqrt(delta);
  for (Eigen::Index m = 0; m < xi.values.size(); ++m) {
    if (!xi.active[m]) {
      xi.values[m] = 0.0;
      continue;
    }
    if (std::abs(xi.values[m]) < root) {
      xi.values[m] = 0.0;
      xi.active[m] = 0;
    }
  }
  return xi;
}

bool resample_due(int epoch, int resample_period) {
  return resample_period > 0 && epoch % resample_period == 0;
}

DatasetBatch::DatasetBatch(const Dataset& ds, const LibrarySpec& lib,
                           int hidden_layers, int width, int quad_nodes,
                           double beta, std::uint64_t master_seed)
    : domain_(ds.domain), lib_(lib) {
  lib_.validate();
  domain_.validate();
  const Eigen::Index n = ds.n_data();
  if (n == 0) throw std::runtime_error("training: dataset is empty");
  net_cfg_ = NetworkConfig::for_domain(domain_, hidden_layers, width);
  data_pts_.resize(n, 2);
  data_pts_.col(0) = ds.t;
  data_pts_.col(1) = ds.x;
  data_values_ = ds.value;
  master_ = std::make_shared<const MasterWeight>(
      make_master(domain_, lib_, quad_nodes, master_seed, beta));
  powers_.push_back(lib_.lhs.power);
  for (const auto& t : lib_.rhs) powers_.push_back(t.power);
  max_power_ = *std::max_element(powers_.begin(), powers_.end());
}

void DatasetBatch::set_pool(const std::vector<WeightFunction>& weights,
                            const std::vector<int>& ids) {
  if (weights.size() != ids.size())
    throw std::runtime_error("training: one id per weight required");
  pool_.clear();
  fused_.clear();
  spans_.clear();
  chunks_.clear();
  pool_.reserve(weights.size());
  fused_.reserve(weights.size());
  Eigen::Index total = 0;
  for (size_t j = 0; j < weights.size(); ++j) {
    pool_.push_back(map_from_master(master_, weights[j], ids[j]));
    fused_.push_back(fused_vectors(lib_, pool_.back()));
    spans_.emplace_back(total, pool_.back().nodes.rows());
    total += pool_.back().nodes.rows();
  }
  nodes_.resize(total, domain_.dim());
  for (size_t j = 0; j < pool_.size(); ++j)
    nodes_.middleRows(spans_[j].first, spans_[j].second) = pool_[j].nodes;
  // chunks of whole weights, each at most kChunkRows nodes (single weights
  // above the cap get their own chunk)
  Chunk cur;
  for (int j = 0; j < static_cast<int>(pool_.size()); ++j) {
    const Eigen::Index wn = spans_[j].second;
    if (cur.count > 0 && cur.nodes + wn > kChunkRows) {
      chunks_.push_back(cur);
      cur = Chunk{j, 0, spans_[j].first, 0};
    }
    if (cur.count == 0) {
      cur.first = j;
      cur.begin = spans_[j].first;
    }
    ++cur.count;
    cur.nodes += wn;
  }
  if (cur.count > 0) chunks_.push_back(cur);
}

DatasetBatch::Losses DatasetBatch::evaluate(const Eigen::VectorXd& theta,
                                            const CoefficientVector& xi,
                                            double lambda_data,
                                            double lambda_weak,
                                            Eigen::VectorXd* grad_theta,
                                            Eigen::VectorXd* grad_xi) const {
  const int m_terms = static_cast<int>(lib_.rhs.size());
  if (xi.values.size() != m_terms ||
      static_cast<int>(xi.active.size()) != m_terms)
    throw std::runtime_error("training: coefficient size does not match library");
  if (grad_xi && grad_xi->size() != m_terms)
    throw std::runtime_error("training: xi gradient has wrong size");

  Losses out;
  const int k_rows = static_cast<int>(pool_.size());
  out.sys.A.resize(k_rows, m_terms);
  out.sys.b.resize(k_rows);
  out.residual.resize(k_rows);
  out.sys.row_ids.resize(k_rows);
  for (int k = 0; k < k_rows; ++k) out.sys.row_ids[k] = pool_[k].id;

  // data term
  {
    const NetTrace tr = net_forward(net_cfg_, theta, data_pts_);
    const Eigen::ArrayXd rd = tr.out - data_values_.array();
    out.data = rd.square().mean();
    if (grad_theta) {
      const Eigen::ArrayXd seed =
          (2.0 * lambda_data / double(rd.size())) * rd;
      net_backward(net_cfg_, theta, tr, seed, *grad_theta);
    }
  }

  // weak term, chunked over whole weights
  std::vector<Eigen::ArrayXd> mono(max_power_ + 1);
  std::vector<bool> have(max_power_ + 1);
  for (const Chunk& c : chunks_) {
    const NetTrace tr =
        net_forward(net_cfg_, theta, nodes_.middleRows(c.begin, c.nodes));
    Eigen::ArrayXd seeds;
    if (grad_theta) seeds = Eigen::ArrayXd::Zero(c.nodes);
    for (int k = c.first; k < c.first + c.count; ++k) {
      const Eigen::Index loc = spans_[k].first - c.begin;
      const Eigen::Index wn = spans_[k].second;
      const Eigen::ArrayXd u = tr.out.segment(loc, wn);
      std::fill(have.begin(), have.end(), false);
      auto upow = [&](int pw) -> const Eigen::ArrayXd& {
        if (!have[pw]) {
          mono[pw] = monomial_eval(u, pw);
          have[pw] = true;
        }
        return mono[pw];
      };
      out.sys.b[k] = (fused_[k][0] * upow(powers_[0])).sum();
      double r = out.sys.b[k];
      for (int m = 0; m < m_terms; ++m) {
        out.sys.A(k, m) = (fused_[k][m + 1] * upow(powers_[m + 1])).sum();
        if (xi.active[m]) r -= xi.values[m] * out.sys.A(k, m);
      }
      out.residual[k] = r;
      if (grad_theta) {
        Eigen::ArrayXd slope = Eigen::ArrayXd::Zero(wn);
        if (powers_[0] > 0)
          slope = fused_[k][0] * double(powers_[0]) * upow(powers_[0] - 1);
        for (int m = 0; m < m_terms; ++m) {
          const double c_m = xi.active[m] ? xi.values[m] : 0.0;
          if (c_m != 0.0 && powers_[m + 1] > 0)
            slope -= c_m * double(powers_[m + 1]) * fused_[k][m + 1] *
                     upow(powers_[m + 1] - 1);
        }
        seeds.segment(loc, wn) = (2.0 * lambda_weak * r) * slope;
      }
    }
    if (grad_theta) net_backward(net_cfg_, theta, tr, seeds, *grad_theta);
  }
  out.weak = out.residual.squaredNorm();
  if (grad_xi && k_rows > 0) {
    const Eigen::VectorXd g =
        -2.0 * lambda_weak * (out.sys.A.transpose() * out.residual);
    for (int m = 0; m < m_terms; ++m)
      if (xi.active[m]) (*grad_xi)[m] += g[m];
  }
  return out;
}

namespace {

nlohmann::json config_json(const TrainConfig& c) {
  nlohmann::json j;
  j["lambda_data"] = c.lambda_data;
  j["lambda_weak"] = c.lambda_weak;
  j["lambda_lp"] = c.lambda_lp;
  j["p"] = c.p;
  j["delta"] = c.delta;
  j["n_random"] = c.n_random;
  j["resample_period"] = c.resample_period;
  j["weight_beta"] = c.weight_beta;
  j["quad_nodes"] = c.quad_nodes;
  j["radius_min"] = c.radius_min;
  j["radius_max"] = c.radius_max;
  j["n_burn"] = c.n_burn;
  j["n_sparse"] = c.n_sparse;
  j["n_tune"] = c.n_tune;
  j["tune_patience"] = c.tune_patience;
  j["adam_lr"] = c.adam_lr;
  j["lbfgs_history"] = c.lbfgs_history;
  j["lbfgs_max_line_steps"] = c.lbfgs_max_line_steps;
  j["hidden_layers"] = c.hidden_layers;
  j["width"] = c.width;
  j["checkpoint_every"] = c.checkpoint_every;
  j["out_dir"] = c.out_dir;
  j["seed"] = c.seed;
  return j;
}

struct RunSinks {
  std::ofstream file;
  std::ostream* echo = nullptr;

  void say(const std::string& line) {
    if (file.is_open()) file << line << std::endl;
    if (echo) *echo << line << '\n';
  }
};

void write_checkpoint(const std::string& out_dir, const TrainConfig& cfg,
                      const LibrarySpec& lib,
                      const std::vector<DatasetBatch>& batches,
                      const Eigen::VectorXd& x,
                      const std::vector<Eigen::Index>& offs,
                      Eigen::Index xi_off, const CoefficientVector& mask,
                      const std::vector<EpochRecord>& history,
                      const std::array<int, 3>& ran, int epochs_completed,
                      const std::string& label) {
  if (out_dir.empty()) return;
  namespace fs = std::filesystem;
  const fs::path dir = fs::path(out_dir) / "checkpoint";
  fs::create_directories(dir);

  const int m_terms = static_cast<int>(lib.rhs.size());
  CoefficientVector xi = mask;
  xi.values = x.segment(xi_off, m_terms);
  for (int m = 0; m < m_terms; ++m)
    if (!xi.active[m]) xi.values[m] = 0.0;

  nlohmann::json j;
  j["epochs_completed"] = epochs_completed;
  j["phase"] = label;
  j["seed"] = cfg.seed;
  j["pde"] = format_pde(lib, xi);
  j["lhs"] = format_term(lib.lhs);
  std::vector<std::string> terms;
  std::vector<double> values;
  std::vector<int> active;
  for (int m = 0; m < m_terms; ++m) {
    terms.push_back(format_term(lib.rhs[m]));
    values.push_back(xi.values[m]);
    active.push_back(xi.active[m] ? 1 : 0);
  }
  j["terms"] = terms;
  j["xi"] = values;
  j["active"] = active;
  j["epochs_per_phase"] = ran;
  j["config"] = config_json(cfg);
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& h : history)
    rows.push_back({h.epoch, h.phase, h.data, h.weak, h.lp, h.active, h.k_rows});
  j["history"] = rows;
  std::vector<std::string> nets;
  for (size_t i = 0; i < batches.size(); ++i) {
    const std::string name = "net" + std::to_string(i) + ".bin";
    const Eigen::Index len =
        (i + 1 < batches.size() ? offs[i + 1] : xi_off) - offs[i];
    save_network((dir / name).string(), batches[i].net_config(),
                 x.segment(offs[i], len));
    nets.push_back(name);
  }
  j["nets"] = nets;

  const fs::path tmp = dir / "state.json.tmp";
  {
    std::ofstream f(tmp, std::ios::trunc);
    if (!f) throw std::runtime_error("checkpoint: cannot open " + tmp.string());
    f << j.dump(1) << '\n';
    if (!f) throw std::runtime_error("checkpoint: write failed");
  }
  fs::rename(tmp, dir / "state.json");
}

void write_report(const std::string& out_dir, const TrainConfig& cfg,
                  const LibrarySpec& lib, const TrainResult& res) {
  if (out_dir.empty()) return;
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  std::ofstream f(fs::path(out_dir) / "report.txt", std::ios::trunc);
  if (!f) throw std::runtime_error("report: cannot open output file");
  f << "identified PDE: " << res.pde << "\n\nterms:\n";
  for (size_t m = 0; m < lib.rhs.size(); ++m) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%-14s % .10g", format_term(lib.rhs[m]).c_str(),
                  res.xi.values[static_cast<Eigen::Index>(m)]);
    f << "  " << buf << (res.xi.active[m] ? "  active" : "  masked") << '\n';
  }
  f << "\nepochs: burn-in " << res.epochs_per_phase[0] << ", sparsification "
    << res.epochs_per_phase[1] << ", fine-tuning " << res.epochs_per_phase[2]
    << "\nseed: " << cfg.seed << "\n\nconfig:\n";
  std::string echo = cfg.echo();
  size_t at = 0;
  while (at < echo.size()) {
    const size_t nl = echo.find('\n', at);
    f << "  " << echo.substr(at, nl - at) << '\n';
    at = nl + 1;
  }
  if (!f) throw std::runtime_error("report: write failed");
}

}  // namespace

TrainResult run_training(const TrainConfig& config,
                         const std::vector<Dataset>& datasets,
                         const LibrarySpec& lib, std::ostream* log) {
  config.validate();
  lib.validate();
  if (datasets.empty())
    throw std::runtime_error("training: need at least one dataset");
#ifdef __GLIBC__
  // The epoch loop churns through multi-megabyte activation buffers; keep
  // them on the heap instead of bouncing pages through mmap/munmap.
  mallopt(M_MMAP_THRESHOLD, 128 << 20);
  mallopt(M_TRIM_THRESHOLD, 256 << 20);
#endif
  const int n_sets = static_cast<int>(datasets.size());
  const int m_terms = static_cast<int>(lib.rhs.size());
  if (m_terms == 0) throw std::runtime_error("training: empty term library");

  RunSinks sink;
  sink.echo = log;
  if (!config.out_dir.empty()) {
    std::filesystem::create_directories(config.out_dir);
    sink.file.open(std::filesystem::path(config.out_dir) / "train_log.txt",
                   std::ios::trunc);
    if (!sink.file)
      throw std::runtime_error("training: cannot open epoch log in " +
                               config.out_dir);
  }

  // per-dataset surrogates and weight machinery
  std::vector<DatasetBatch> batches;
  batches.reserve(n_sets);
  std::vector<Eigen::Index> offs(n_sets);
  Eigen::Index total = 0;
  for (int i = 0; i < n_sets; ++i) {
    batches.emplace_back(datasets[i], lib, config.hidden_layers, config.width,
                         config.quad_nodes, config.weight_beta,
                         mix_seed(config.seed, 501 + i));
    offs[i] = total;
    total += net_offsets(batches[i].net_config()).total;
  }
  const Eigen::Index xi_off = total;
  total += m_terms;

  Eigen::VectorXd x = Eigen::VectorXd::Zero(total);
  for (int i = 0; i < n_sets; ++i) {
    const Eigen::VectorXd theta =
        init_network(batches[i].net_config(), mix_seed(config.seed, 401 + i));
    x.segment(offs[i], theta.size()) = theta;
  }
  CoefficientVector xi = CoefficientVector::zeros(m_terms);

  std::vector<std::vector<WeightFunction>> random_w(n_sets), targeted_w(n_sets);
  std::vector<std::vector<int>> random_ids(n_sets), targeted_ids(n_sets);
  std::vector<int> next_id(n_sets, 0);
  std::vector<bool> pool_dirty(n_sets, true);

  auto rebuild_pool = [&](int i) {
    std::vector<WeightFunction> pool = targeted_w[i];
    std::vector<int> ids = targeted_ids[i];
    const std::set<int> taken(targeted_ids[i].begin(), targeted_ids[i].end());
    for (size_t j = 0; j < random_w[i].size(); ++j) {
      if (taken.count(random_ids[i][j])) continue;
      pool.push_back(random_w[i][j]);
      ids.push_back(random_ids[i][j]);
    }
    batches[i].set_pool(pool, ids);
  };

  AdamState adam = AdamState::init(total);
  AdamConfig acfg;
  acfg.lr = config.adam_lr;
  LbfgsState lstate;
  LbfgsConfig lcfg;
  lcfg.history = config.lbfgs_history;
  lcfg.max_line_steps = config.lbfgs_max_line_steps;

  TrainResult res;
  res.xi = xi;
  std::array<int, 3>& ran = res.epochs_per_phase;
  Eigen::VectorXd last_good = x;
  int epochs_completed = 0;
  int epoch = 0;

  struct Parts {
    double data = 0, weak = 0, lp = 0;
    int k_rows = 0;
    std::vector<WeakSystem> sys;
    std::vector<Eigen::VectorXd> resid;
  };

  // total loss at xv; fills grad (scaled by the lambdas) when non-null
  auto eval_all = [&](const Eigen::VectorXd& xv, double lam_lp,
                      const Eigen::VectorXd& eta, Eigen::VectorXd* grad,
                      Parts& parts) -> double {
    if (grad) grad->setZero();
    CoefficientVector cxi = xi;
    cxi.values = xv.segment(xi_off, m_terms);
    for (int m = 0; m < m_terms; ++m)
      if (!cxi.active[m]) cxi.values[m] = 0.0;
    parts = Parts{};
    Eigen::VectorXd gtheta, gxi;
    for (int i = 0; i < n_sets; ++i) {
      const Eigen::Index len =
          (i + 1 < n_sets ? offs[i + 1] : xi_off) - offs[i];
      Eigen::VectorXd* gt = nullptr;
      Eigen::VectorXd* gx = nullptr;
      if (grad) {
        gtheta = Eigen::VectorXd::Zero(len);
        gxi = Eigen::VectorXd::Zero(m_terms);
        gt = &gtheta;
        gx = &gxi;
      }
      auto L = batches[i].evaluate(xv.segment(offs[i], len), cxi,
                                   config.lambda_data, config.lambda_weak, gt,
                                   gx);
      parts.data += L.data;
      parts.weak += L.weak;
      parts.k_rows += static_cast<int>(L.residual.size());
      parts.sys.push_back(std::move(L.sys));
      parts.resid.push_back(std::move(L.residual));
      if (grad) {
        grad->segment(offs[i], len) += gtheta;
        grad->segment(xi_off, m_terms) += gxi;
      }
    }
    parts.lp = lp_loss(cxi, eta);
    if (grad && lam_lp > 0)
      for (int m = 0; m < m_terms; ++m)
        if (cxi.active[m])
          (*grad)[xi_off + m] += lam_lp * 2.0 * eta[m] * cxi.values[m];
    return config.lambda_data * parts.data + config.lambda_weak * parts.weak +
           lam_lp * parts.lp;
  };

  auto abort_run = [&](const std::string& why) {
    sink.say("abort: " + why);
    write_checkpoint(config.out_dir, config, lib, batches, last_good, offs,
                     xi_off, xi, res.history, ran, epochs_completed, "aborted");
    throw TrainAbort("training aborted: " + why);
  };

  for (int ph = 0; ph < 3; ++ph) {
    const int n_epochs =
        ph == 0 ? config.n_burn : ph == 1 ? config.n_sparse : config.n_tune;
    const double lam_lp = ph == 1 ? config.lambda_lp : 0.0;
    if (ph == 2) lstate.clear();
    double best_monitor = -std::numeric_limits<double>::infinity();
    int flat_streak = 0;

    for (int e = 0; e < n_epochs; ++e) {
      xi.values = x.segment(xi_off, m_terms);
      for (int m = 0; m < m_terms; ++m)
        if (!xi.active[m]) xi.values[m] = 0.0;
      const Eigen::VectorXd eta = refresh_eta(xi, config.p, config.delta);

      if (resample_due(epoch, config.resample_period)) {
        for (int i = 0; i < n_sets; ++i) {
          random_w[i] = sample_random_weights(
              batches[i].domain(), config.n_random, config.radius_min,
              config.radius_max,
              mix_seed(mix_seed(config.seed, 301 + i),
                       static_cast<std::uint64_t>(epoch)));
          random_ids[i].clear();
          for (size_t j = 0; j < random_w[i].size(); ++j)
            random_ids[i].push_back(next_id[i]++);
          pool_dirty[i] = true;
        }
      }
      for (int i = 0; i < n_sets; ++i)
        if (pool_dirty[i]) {
          rebuild_pool(i);
          pool_dirty[i] = false;
        }

      Parts parts;
      Eigen::VectorXd grad(total);
      double loss = 0;
      try {
        loss = eval_all(x, lam_lp, eta, &grad, parts);
      } catch (const EvalError& err) {
        abort_run(err.what());
      }
      if (!std::isfinite(loss))
        abort_run("non-finite loss at epoch " + std::to_string(epoch));

      EpochRecord rec;
      rec.epoch = epoch;
      rec.phase = kPhaseNames[ph];
      rec.data = parts.data;
      rec.weak = parts.weak;
      rec.lp = parts.lp;
      rec.active = xi.n_active();
      rec.k_rows = parts.k_rows;
      res.history.push_back(rec);
      sink.say("epoch " + std::to_string(epoch) + " phase " + rec.phase +
               " data " + sci(rec.data) + " weak " + sci(rec.weak) + " lp " +
               sci(rec.lp) + " active " + std::to_string(rec.active) + " K " +
               std::to_string(rec.k_rows));

      if (ph < 2) {
        adam_step(adam, x, grad, acfg);
      } else {
        auto oracle = [&](const Eigen::VectorXd& xv,
                          Eigen::VectorXd& g) -> double {
          Parts scratch;
          try {
            return eval_all(xv, 0.0, eta, &g, scratch);
          } catch (const EvalError&) {
            g.setZero();
            return std::numeric_limits<double>::infinity();
          }
        };
        const LbfgsReport rep = lbfgs_step(lstate, x, oracle, lcfg);
        if (!rep.accepted)
          sink.say("fine-tuning: line search failed at epoch " +
                   std::to_string(epoch) + "; optimizer history reset");
      }
      for (int m = 0; m < m_terms; ++m)
        if (!xi.active[m]) x[xi_off + m] = 0.0;

      // end of epoch: reselect targeted weights from this epoch's residuals
      for (int i = 0; i < n_sets; ++i) {
        const auto picked = update_targeted_weights(
            parts.resid[i].cwiseAbs(), parts.sys[i].row_ids);
        if (picked != targeted_ids[i]) {
          std::vector<WeightFunction> chosen;
          for (int id : picked) {
            for (const auto& pw : batches[i].pool())
              if (pw.id == id) {
                WeightFunction wf = pw.wf;
                wf.kind = WeightKind::targeted;
                chosen.push_back(std::move(wf));
                break;
              }
          }
          targeted_w[i] = std::move(chosen);
          targeted_ids[i] = picked;
          pool_dirty[i] = true;
        }
      }

      last_good = x;
      ++epoch;
      epochs_completed = epoch;
      ++ran[ph];
      if (config.checkpoint_every > 0 &&
          epoch % config.checkpoint_every == 0)
        write_checkpoint(config.out_dir, config, lib, batches, x, offs, xi_off,
                         xi, res.history, ran, epochs_completed,
                         kPhaseNames[ph]);

      if (ph == 2) {
        double monitor = 0;
        for (int m = 0; m < m_terms; ++m)
          if (xi.active[m])
            monitor += std::pow(std::abs(x[xi_off + m]), config.p);
        if (monitor > best_monitor) {
          best_monitor = monitor;
          flat_streak = 0;
        } else if (++flat_streak >= config.tune_patience) {
          sink.say("fine-tuning stopped after epoch " + std::to_string(epoch - 1) +
                   ": no L^p increase for " +
                   std::to_string(config.tune_patience) + " epochs");
          break;
        }
      }
    }

    if (ph < 2) {
      xi.values = x.segment(xi_off, m_terms);
      for (int m = 0; m < m_terms; ++m)
        if (!xi.active[m]) xi.values[m] = 0.0;
      const CoefficientVector cut = threshold_xi(xi, config.delta);
      for (int m = 0; m < m_terms; ++m)
        if (xi.active[m] && !cut.active[m]) {
          x[xi_off + m] = 0.0;
          adam.m[xi_off + m] = 0.0;
          adam.v[xi_off + m] = 0.0;
        }
      xi = cut;
      last_good = x;
      sink.say("threshold after " + std::string(kPhaseNames[ph]) + ": kept " +
               std::to_string(xi.n_active()) + " of " +
               std::to_string(m_terms) + " terms");
      if (xi.n_active() == 0)
        sink.say("warning: every candidate term was eliminated; continuing with " +
                 format_term(lib.lhs) + " = 0");
    }
  }

  xi.values = x.segment(xi_off, m_terms);
  for (int m = 0; m < m_terms; ++m)
    if (!xi.active[m]) xi.values[m] = 0.0;
  res.xi = xi;
  res.pde = format_pde(lib, xi);
  for (int i = 0; i < n_sets; ++i) {
    const Eigen::Index len = (i + 1 < n_sets ? offs[i + 1] : xi_off) - offs[i];
    res.net_configs.push_back(batches[i].net_config());
    res.nets.push_back(x.segment(offs[i], len));
  }
  write_checkpoint(config.out_dir, config, lib, batches, x, offs, xi_off, xi,
                   res.history, ran, epochs_completed, "done");
  write_report(config.out_dir, config, lib, res);
  sink.say("identified PDE: " + res.pde);
  return res;
}

}  // namespace weakpde
