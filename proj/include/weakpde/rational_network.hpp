#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>
#include <weakpde/autodiff.hpp>
#include <weakpde/domain.hpp>

namespace weakpde {

struct EvalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Elementwise trainable rational activation p(x)/q(x), cubic over quadratic.
// One coefficient set is shared by all units of a layer.
struct RationalActivation {
  std::array<double, 4> num;  // a0 + a1 x + a2 x^2 + a3 x^3
  std::array<double, 3> den;  // b0 + b1 x + b2 x^2

  double operator()(double x) const;

  // Frozen least-squares fit of a leaky-ReLU reference on [-1, 1].
  static RationalActivation reference_init();
};

struct NetworkConfig {
  int input_dim = 2;
  int hidden_layers = 5;
  int width = 40;
  int output_dim = 1;
  // Invertible per-axis map onto [-1, 1]: x_norm = (x - shift) * scale.
  Eigen::VectorXd norm_shift, norm_scale;

  void validate() const;
  static NetworkConfig for_domain(const DomainBox& box, int hidden_layers = 5,
                                  int width = 40);
};

// Offsets of each parameter block within a network's own flat vector; the
// block order here fixes the registration order inside a ParamLayout.
struct NetOffsets {
  struct Layer {
    int weight, bias, act_num, act_den;
    int in_dim, out_dim;
  };
  std::vector<Layer> layers;  // hidden layers
  int out_weight = 0, out_bias = 0;
  int total = 0;
};
NetOffsets net_offsets(const NetworkConfig& cfg);

// Group ids of one network registered inside a shared ParamLayout.
struct NetworkGroups {
  std::vector<int> weight, bias, act_num, act_den;  // per hidden layer
  int out_weight = -1, out_bias = -1;
  int begin_offset = 0, size = 0;  // contiguous slice in the flat vector
};
NetworkGroups register_network(ParamLayout& layout, const NetworkConfig& cfg,
                               const std::string& prefix);

// Glorot-uniform weights, zero biases, reference activation coefficients.
// Same seed, same configuration -> identical vector.
Eigen::VectorXd init_network(const NetworkConfig& cfg, std::uint64_t seed);

// Plain batched forward pass (no tape); net_params is the network's own flat
// vector. Throws EvalError naming the point on a non-finite output, or on a
// point outside `domain` when one is supplied (debug check).
Eigen::ArrayXd evaluate(const NetworkConfig& cfg,
                        const Eigen::VectorXd& net_params,
                        const Eigen::ArrayXXd& pts,
                        const DomainBox* domain = nullptr);

// Records the identical forward pass on a tape; returns the output node
// (rows(pts) x 1). pts must already be in physical coordinates.
int emit_network(Tape& tape, const NetworkConfig& cfg, const NetworkGroups& g,
                 const Eigen::ArrayXXd& pts);

// Forward pass over a batch keeping the per-layer values needed to push
// per-point output adjoints back to the parameters with dense products.
// Mirrors evaluate() exactly, including its failure modes.
struct NetTrace {
  std::vector<Eigen::ArrayXXd> xs;  // input of each affine; xs[0] normalized
  std::vector<Eigen::ArrayXXd> zs;  // hidden-layer affine outputs
  Eigen::ArrayXd out;
};
NetTrace net_forward(const NetworkConfig& cfg, const Eigen::VectorXd& net_params,
                     const Eigen::ArrayXXd& pts);

// Accumulates sum_i seed[i] * d out[i] / d params into grad (one network's
// own flat vector, laid out per net_offsets). Throws EvalError on a singular
// activation denominator, where the value has no derivative.
void net_backward(const NetworkConfig& cfg, const Eigen::VectorXd& net_params,
                  const NetTrace& trace, const Eigen::ArrayXd& seed,
                  Eigen::VectorXd& grad);

// Versioned binary checkpoint of one network; round-trips bit-exactly.
void save_network(const std::string& path, const NetworkConfig& cfg,
                  const Eigen::VectorXd& net_params);
std::pair<NetworkConfig, Eigen::VectorXd> load_network(const std::string& path);

}  // namespace weakpde
