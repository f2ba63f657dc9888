#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>
#include <weakpde/synthetic_data.hpp>
#include <weakpde/weak_form.hpp>

namespace weakpde {

struct TrainAbort : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  // loss weights; lambda_lp applies during sparsification only
  double lambda_data = 1.0;
  double lambda_weak = 1.0;
  double lambda_lp = 2e-5;
  double p = 0.1;
  double delta = 1e-7;
  // weight-function management
  int n_random = 200;
  int resample_period = 20;
  double weight_beta = 5.0;
  int quad_nodes = 40;
  double radius_min = 0.5;
  double radius_max = 5.0;
  // schedule
  int n_burn = 2000;
  int n_sparse = 2000;
  int n_tune = 1000;
  int tune_patience = 10;
  // optimizers
  double adam_lr = 1e-3;
  int lbfgs_history = 10;
  int lbfgs_max_line_steps = 20;
  // surrogate architecture
  int hidden_layers = 5;
  int width = 40;
  // artifacts: no files are written when out_dir is empty
  int checkpoint_every = 100;
  std::string out_dir;
  std::uint64_t seed = 0;

  void validate() const;
  // key = value lines, one per field, as echoed into reports
  std::string echo() const;
};

struct EpochRecord {
  int epoch = 0;
  std::string phase;  // burn-in | sparsification | fine-tuning
  double data = 0, weak = 0, lp = 0;
  int active = 0;
  int k_rows = 0;
};

struct TrainResult {
  CoefficientVector xi;
  std::vector<NetworkConfig> net_configs;  // one surrogate per dataset
  std::vector<Eigen::VectorXd> nets;
  std::vector<EpochRecord> history;
  std::array<int, 3> epochs_per_phase = {0, 0, 0};
  std::string pde;
};

// mean squared mismatch between the surrogate and the samples
double data_loss(const NetworkConfig& cfg, const Eigen::VectorXd& net_params,
                 const Dataset& ds);

// sum of eta_m xi_m^2 over active entries
double lp_loss(const CoefficientVector& xi, const Eigen::VectorXd& eta);

// eta_m = 1 / max(|xi_m|^{2-p}, delta); recomputed only at epoch boundaries
// and held constant inside each epoch, so the loss gradient in xi_m is
// exactly 2 eta_m xi_m.
Eigen::VectorXd refresh_eta(const CoefficientVector& xi, double p, double delta);

// ids whose residual is strictly above mean + 2 sample standard deviations;
// empty when fewer than two rows exist
std::vector<int> update_targeted_weights(const Eigen::VectorXd& residuals,
                                         const std::vector<int>& row_ids);

// zero and permanently mask every active entry with |xi_m| < sqrt(delta)
CoefficientVector threshold_xi(CoefficientVector xi, double delta);

bool resample_due(int epoch, int resample_period);

// One dataset prepared for training: the surrogate configuration, the sample
// matrix, and the current weight pool with its cached assembly vectors.
class DatasetBatch {
 public:
  DatasetBatch(const Dataset& ds, const LibrarySpec& lib, int hidden_layers,
               int width, int quad_nodes, double beta,
               std::uint64_t master_seed);

  const NetworkConfig& net_config() const { return net_cfg_; }
  const DomainBox& domain() const { return domain_; }
  int n_rows() const { return static_cast<int>(pool_.size()); }
  const std::vector<PreparedWeight>& pool() const { return pool_; }

  // replaces the weight pool; rows keep the order given here
  void set_pool(const std::vector<WeightFunction>& weights,
                const std::vector<int>& ids);

  struct Losses {
    double data = 0, weak = 0;
    WeakSystem sys;            // assembled at the given parameters
    Eigen::VectorXd residual;  // signed, b - A xi per row
  };

  // Data and weak losses at (theta, xi). When the gradient sinks are given,
  // accumulates lambda_data * d(data)/d(theta) + lambda_weak * d(weak)/d(theta)
  // into grad_theta (surrogate-local layout) and lambda_weak * d(weak)/d(xi)
  // into grad_xi; masked coefficients receive exactly zero gradient. The
  // returned losses are unweighted.
  Losses evaluate(const Eigen::VectorXd& theta, const CoefficientVector& xi,
                  double lambda_data, double lambda_weak,
                  Eigen::VectorXd* grad_theta = nullptr,
                  Eigen::VectorXd* grad_xi = nullptr) const;

 private:
  struct Chunk {
    int first = 0, count = 0;              // weight range
    Eigen::Index begin = 0, nodes = 0;     // node range
  };

  DomainBox domain_;
  LibrarySpec lib_;
  NetworkConfig net_cfg_;
  Eigen::ArrayXXd data_pts_;
  Eigen::VectorXd data_values_;
  std::shared_ptr<const MasterWeight> master_;
  std::vector<PreparedWeight> pool_;
  std::vector<std::vector<Eigen::ArrayXd>> fused_;  // per weight, 0 = lhs
  Eigen::ArrayXXd nodes_;                           // all pool nodes stacked
  std::vector<std::pair<Eigen::Index, Eigen::Index>> spans_;  // per weight
  std::vector<Chunk> chunks_;
  std::vector<int> powers_;  // lhs first, then rhs terms
  int max_power_ = 1;
};

// Burn-in, sparsification, and fine-tuning over one shared coefficient
// vector; one surrogate per dataset. Writes the epoch log, checkpoints, and
// the final report under config.out_dir when set, and mirrors log lines to
// `log` when given. Throws TrainAbort (after checkpointing the last healthy
// state) if the loss turns non-finite.
TrainResult run_training(const TrainConfig& config,
                         const std::vector<Dataset>& datasets,
                         const LibrarySpec& lib, std::ostream* log = nullptr);

}  // namespace weakpde
