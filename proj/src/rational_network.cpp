#include <weakpde/rational_network.hpp>

#include <cstring>
#include <fstream>
#include <weakpde/rng.hpp>

namespace weakpde {

namespace {

// Least-squares type-(3,2) fit of leaky ReLU (slope 0.01) on [-1,1],
// denominator normalized to b0 = 1. Derived once by the fit procedure that
// the unit tests re-run as an oracle.
constexpr std::array<double, 4> kActNum = {
    0.042514122375574032, 0.50500000000000023, 1.2412629449448083,
    0.8521594765159074};
constexpr std::array<double, 3> kActDen = {1.0, 1.0584661288614924e-15,
                                           1.6874445079522911};

}  // namespace

double RationalActivation::operator()(double x) const {
  const double p = ((num[3] * x + num[2]) * x + num[1]) * x + num[0];
  const double q = (den[2] * x + den[1]) * x + den[0];
  return p / q;
}

RationalActivation RationalActivation::reference_init() {
  return RationalActivation{kActNum, kActDen};
}

void NetworkConfig::validate() const {
  if (input_dim < 1 || hidden_layers < 1 || width < 1 || output_dim < 1)
    throw std::runtime_error("network: all dimensions must be positive");
  if (norm_shift.size() != input_dim || norm_scale.size() != input_dim)
    throw std::runtime_error("network: normalization size mismatch");
  for (int i = 0; i < input_dim; ++i)
    if (!(norm_scale[i] > 0.0) || !std::isfinite(norm_scale[i]) ||
        !std::isfinite(norm_shift[i]))
      throw std::runtime_error("network: normalization must be invertible");
}

NetworkConfig NetworkConfig::for_domain(const DomainBox& box, int hidden_layers,
                                        int width) {
  box.validate();
  NetworkConfig cfg;
  cfg.input_dim = box.dim();
  cfg.hidden_layers = hidden_layers;
  cfg.width = width;
  cfg.norm_shift = 0.5 * (box.lo + box.hi);
  cfg.norm_scale = (2.0 / (box.hi - box.lo).array()).matrix();
  cfg.validate();
  return cfg;
}

NetOffsets net_offsets(const NetworkConfig& cfg) {
  NetOffsets off;
  int at = 0;
  for (int l = 0; l < cfg.hidden_layers; ++l) {
    NetOffsets::Layer L;
    L.in_dim = (l == 0) ? cfg.input_dim : cfg.width;
    L.out_dim = cfg.width;
    L.weight = at;
    at += L.out_dim * L.in_dim;
    L.bias = at;
    at += L.out_dim;
    L.act_num = at;
    at += 4;
    L.act_den = at;
    at += 3;
    off.layers.push_back(L);
  }
  off.out_weight = at;
  at += cfg.output_dim * cfg.width;
  off.out_bias = at;
  at += cfg.output_dim;
  off.total = at;
  return off;
}

NetworkGroups register_network(ParamLayout& layout, const NetworkConfig& cfg,
                               const std::string& prefix) {
  cfg.validate();
  NetworkGroups g;
  g.begin_offset = layout.size();
  for (int l = 0; l < cfg.hidden_layers; ++l) {
    const int in = (l == 0) ? cfg.input_dim : cfg.width;
    const std::string lp = prefix + "layer" + std::to_string(l) + ".";
    g.weight.push_back(layout.add(lp + "weight", cfg.width, in));
    g.bias.push_back(layout.add(lp + "bias", cfg.width));
    g.act_num.push_back(layout.add(lp + "act_num", 4));
    g.act_den.push_back(layout.add(lp + "act_den", 3));
  }
  g.out_weight = layout.add(prefix + "out.weight", cfg.output_dim, cfg.width);
  g.out_bias = layout.add(prefix + "out.bias", cfg.output_dim);
  g.size = layout.size() - g.begin_offset;
  return g;
}

Eigen::VectorXd init_network(const NetworkConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const NetOffsets off = net_offsets(cfg);
  Eigen::VectorXd p = Eigen::VectorXd::Zero(off.total);
  Rng rng(seed);
  const RationalActivation act = RationalActivation::reference_init();
  for (const auto& L : off.layers) {
    const double bound = std::sqrt(6.0 / (L.in_dim + L.out_dim));
    for (int i = 0; i < L.out_dim * L.in_dim; ++i)
      p[L.weight + i] = rng.uniform(-bound, bound);
    for (int i = 0; i < 4; ++i) p[L.act_num + i] = act.num[i];
    for (int i = 0; i < 3; ++i) p[L.act_den + i] = act.den[i];
  }
  const double bound = std::sqrt(6.0 / (cfg.width + cfg.output_dim));
  for (int i = 0; i < cfg.output_dim * cfg.width; ++i)
    p[off.out_weight + i] = rng.uniform(-bound, bound);
  return p;
}

namespace {

std::string point_string(const Eigen::ArrayXXd& pts, Eigen::Index row) {
  std::string s = "(";
  for (int j = 0; j < pts.cols(); ++j)
    s += (j ? ", " : "") + std::to_string(pts(row, j));
  return s + ")";
}

Eigen::ArrayXXd normalize_points(const NetworkConfig& cfg,
                                 const Eigen::ArrayXXd& pts) {
  if (pts.cols() != cfg.input_dim)
    throw EvalError("network: points have wrong dimension");
  Eigen::ArrayXXd xn(pts.rows(), pts.cols());
  for (int j = 0; j < pts.cols(); ++j)
    xn.col(j) = (pts.col(j) - cfg.norm_shift[j]) * cfg.norm_scale[j];
  return xn;
}

}  // namespace

Eigen::ArrayXd evaluate(const NetworkConfig& cfg,
                        const Eigen::VectorXd& net_params,
                        const Eigen::ArrayXXd& pts, const DomainBox* domain) {
  cfg.validate();
  const NetOffsets off = net_offsets(cfg);
  if (net_params.size() != off.total)
    throw EvalError("network: parameter vector has wrong size");
  if (domain) {
    for (Eigen::Index i = 0; i < pts.rows(); ++i)
      for (int j = 0; j < pts.cols(); ++j)
        if (pts(i, j) < domain->lo[j] || pts(i, j) > domain->hi[j])
          throw EvalError("network: point outside domain " +
                          point_string(pts, i));
  }
  const Eigen::Index n = pts.rows();
  Eigen::ArrayXXd h = normalize_points(cfg, pts);
  const double* base = net_params.data();
  for (const auto& L : off.layers) {
    Eigen::Map<const Eigen::MatrixXd> W(base + L.weight, L.out_dim, L.in_dim);
    Eigen::Map<const Eigen::VectorXd> b(base + L.bias, L.out_dim);
    const Eigen::ArrayXXd z =
        ((h.matrix() * W.transpose()).rowwise() + b.transpose()).array();
    const double* a = base + L.act_num;
    const double* d = base + L.act_den;
    Eigen::ArrayXXd pn = Eigen::ArrayXXd::Constant(n, L.out_dim, a[3]);
    for (int c = 2; c >= 0; --c) pn = pn * z + a[c];
    Eigen::ArrayXXd qn = Eigen::ArrayXXd::Constant(n, L.out_dim, d[2]);
    for (int c = 1; c >= 0; --c) qn = qn * z + d[c];
    h = pn / qn;
    if (!h.allFinite()) {
      for (Eigen::Index i = 0; i < n; ++i)
        for (int j = 0; j < L.out_dim; ++j)
          if (!std::isfinite(h(i, j))) {
            // removable 0/0 (the all-zero configuration) evaluates to 0
            if (pn(i, j) == 0.0 && qn(i, j) == 0.0)
              h(i, j) = 0.0;
            else
              throw EvalError(
                  "network: singular activation denominator at point " +
                  point_string(pts, i));
          }
    }
  }
  Eigen::Map<const Eigen::MatrixXd> Wo(base + off.out_weight, cfg.output_dim,
                                       cfg.width);
  Eigen::Map<const Eigen::VectorXd> bo(base + off.out_bias, cfg.output_dim);
  Eigen::ArrayXd out =
      ((h.matrix() * Wo.transpose()).rowwise() + bo.transpose()).array().col(0);
  for (Eigen::Index i = 0; i < n; ++i)
    if (!std::isfinite(out(i)))
      throw EvalError("network: non-finite output at point " +
                      point_string(pts, i));
  return out;
}

int emit_network(Tape& tape, const NetworkConfig& cfg, const NetworkGroups& g,
                 const Eigen::ArrayXXd& pts) {
  cfg.validate();
  int h = tape.constant(normalize_points(cfg, pts));
  for (int l = 0; l < cfg.hidden_layers; ++l) {
    const int z = tape.affine(h, g.weight[l], g.bias[l]);
    int pn = tape.leaf_scalar(g.act_num[l], 3);
    for (int c = 2; c >= 0; --c)
      pn = tape.add(tape.mul(pn, z), tape.leaf_scalar(g.act_num[l], c));
    int qn = tape.leaf_scalar(g.act_den[l], 2);
    for (int c = 1; c >= 0; --c)
      qn = tape.add(tape.mul(qn, z), tape.leaf_scalar(g.act_den[l], c));
    h = tape.div(pn, qn);
  }
  return tape.affine(h, g.out_weight, g.out_bias);
}

NetTrace net_forward(const NetworkConfig& cfg, const Eigen::VectorXd& net_params,
                     const Eigen::ArrayXXd& pts) {
  cfg.validate();
  const NetOffsets off = net_offsets(cfg);
  if (net_params.size() != off.total)
    throw EvalError("network: parameter vector has wrong size");
  const Eigen::Index n = pts.rows();
  NetTrace tr;
  tr.xs.reserve(off.layers.size() + 1);
  tr.zs.reserve(off.layers.size());
  tr.xs.push_back(normalize_points(cfg, pts));
  const double* base = net_params.data();
  for (const auto& L : off.layers) {
    Eigen::Map<const Eigen::MatrixXd> W(base + L.weight, L.out_dim, L.in_dim);
    Eigen::Map<const Eigen::VectorXd> b(base + L.bias, L.out_dim);
    tr.zs.emplace_back(
        ((tr.xs.back().matrix() * W.transpose()).rowwise() + b.transpose())
            .array());
    const Eigen::ArrayXXd& z = tr.zs.back();
    const double* a = base + L.act_num;
    const double* d = base + L.act_den;
    Eigen::ArrayXXd pn = Eigen::ArrayXXd::Constant(n, L.out_dim, a[3]);
    for (int c = 2; c >= 0; --c) pn = pn * z + a[c];
    Eigen::ArrayXXd qn = Eigen::ArrayXXd::Constant(n, L.out_dim, d[2]);
    for (int c = 1; c >= 0; --c) qn = qn * z + d[c];
    Eigen::ArrayXXd h = pn / qn;
    if (!h.allFinite()) {
      for (Eigen::Index i = 0; i < n; ++i)
        for (int j = 0; j < L.out_dim; ++j)
          if (!std::isfinite(h(i, j))) {
            if (pn(i, j) == 0.0 && qn(i, j) == 0.0)
              h(i, j) = 0.0;
            else
              throw EvalError(
                  "network: singular activation denominator at point " +
                  point_string(pts, i));
          }
    }
    tr.xs.push_back(std::move(h));
  }
  Eigen::Map<const Eigen::MatrixXd> Wo(base + off.out_weight, cfg.output_dim,
                                       cfg.width);
  Eigen::Map<const Eigen::VectorXd> bo(base + off.out_bias, cfg.output_dim);
  tr.out = ((tr.xs.back().matrix() * Wo.transpose()).rowwise() + bo.transpose())
               .array()
               .col(0);
  for (Eigen::Index i = 0; i < n; ++i)
    if (!std::isfinite(tr.out(i)))
      throw EvalError("network: non-finite output at point " +
                      point_string(pts, i));
  return tr;
}

void net_backward(const NetworkConfig& cfg, const Eigen::VectorXd& net_params,
                  const NetTrace& trace, const Eigen::ArrayXd& seed,
                  Eigen::VectorXd& grad) {
  cfg.validate();
  const NetOffsets off = net_offsets(cfg);
  if (net_params.size() != off.total || grad.size() != off.total)
    throw EvalError("network: parameter vector has wrong size");
  const int L = cfg.hidden_layers;
  if (static_cast<int>(trace.zs.size()) != L ||
      static_cast<int>(trace.xs.size()) != L + 1 ||
      seed.size() != trace.out.size())
    throw EvalError("network: trace does not match configuration");
  const Eigen::Index n = seed.size();
  const double* base = net_params.data();

  Eigen::Map<const Eigen::MatrixXd> Wo(base + off.out_weight, cfg.output_dim,
                                       cfg.width);
  grad.segment(off.out_weight, cfg.width).noalias() +=
      trace.xs[L].matrix().transpose() * seed.matrix();
  grad[off.out_bias] += seed.sum();
  Eigen::ArrayXXd dy = (seed.matrix() * Wo.row(0)).array();  // n x width

  for (int l = L - 1; l >= 0; --l) {
    const auto& Lo = off.layers[l];
    const Eigen::ArrayXXd& z = trace.zs[l];
    const Eigen::ArrayXXd& y = trace.xs[l + 1];
    const double* a = base + Lo.act_num;
    const double* d = base + Lo.act_den;
    Eigen::ArrayXXd qn = Eigen::ArrayXXd::Constant(n, Lo.out_dim, d[2]);
    for (int c = 1; c >= 0; --c) qn = qn * z + d[c];
    if ((qn == 0.0).any())
      throw EvalError("network: singular activation denominator in backward");
    const Eigen::ArrayXXd dp = dy / qn;
    const Eigen::ArrayXXd dq = -dp * y;
    Eigen::ArrayXXd zp = Eigen::ArrayXXd::Ones(n, Lo.out_dim);
    for (int j = 0; j < 4; ++j) {
      grad[Lo.act_num + j] += (dp * zp).sum();
      if (j < 3) {
        grad[Lo.act_den + j] += (dq * zp).sum();
        zp *= z;
      }
    }
    const Eigen::ArrayXXd pd = a[1] + z * (2.0 * a[2] + z * (3.0 * a[3]));
    const Eigen::ArrayXXd qd = d[1] + z * (2.0 * d[2]);
    const Eigen::ArrayXXd dz = dp * pd + dq * qd;
    Eigen::Map<const Eigen::MatrixXd> W(base + Lo.weight, Lo.out_dim, Lo.in_dim);
    Eigen::Map<Eigen::MatrixXd> gW(grad.data() + Lo.weight, Lo.out_dim,
                                   Lo.in_dim);
    gW.noalias() += dz.matrix().transpose() * trace.xs[l].matrix();
    grad.segment(Lo.bias, Lo.out_dim) +=
        dz.colwise().sum().matrix().transpose();
    if (l > 0) dy = (dz.matrix() * W).array();
  }
}

namespace {
constexpr char kMagic[4] = {'W', 'P', 'N', 'N'};
constexpr std::uint32_t kVersion = 1;
}  // namespace

void save_network(const std::string& path, const NetworkConfig& cfg,
                  const Eigen::VectorXd& net_params) {
  cfg.validate();
  const NetOffsets off = net_offsets(cfg);
  if (net_params.size() != off.total)
    throw std::runtime_error("checkpoint: parameter vector has wrong size");
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("checkpoint: cannot open " + path);
  auto put = [&f](const void* p, size_t n) {
    f.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
  };
  put(kMagic, 4);
  put(&kVersion, 4);
  const std::int32_t dims[4] = {cfg.input_dim, cfg.hidden_layers, cfg.width,
                                cfg.output_dim};
  put(dims, sizeof dims);
  put(cfg.norm_shift.data(), sizeof(double) * cfg.input_dim);
  put(cfg.norm_scale.data(), sizeof(double) * cfg.input_dim);
  const std::uint64_t count = static_cast<std::uint64_t>(net_params.size());
  put(&count, 8);
  put(net_params.data(), sizeof(double) * net_params.size());
  if (!f) throw std::runtime_error("checkpoint: write failed for " + path);
}

std::pair<NetworkConfig, Eigen::VectorXd> load_network(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("checkpoint: cannot open " + path);
  auto get = [&f, &path](void* p, size_t n) {
    f.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (!f) throw std::runtime_error("checkpoint: truncated file " + path);
  };
  char magic[4];
  get(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("checkpoint: bad magic in " + path);
  std::uint32_t version = 0;
  get(&version, 4);
  if (version != kVersion)
    throw std::runtime_error("checkpoint: unsupported version in " + path);
  std::int32_t dims[4];
  get(dims, sizeof dims);
  NetworkConfig cfg;
  cfg.input_dim = dims[0];
  cfg.hidden_layers = dims[1];
  cfg.width = dims[2];
  cfg.output_dim = dims[3];
  if (cfg.input_dim < 1 || cfg.input_dim > 16)
    throw std::runtime_error("checkpoint: implausible header in " + path);
  cfg.norm_shift.resize(cfg.input_dim);
  cfg.norm_scale.resize(cfg.input_dim);
  get(cfg.norm_shift.data(), sizeof(double) * cfg.input_dim);
  get(cfg.norm_scale.data(), sizeof(double) * cfg.input_dim);
  cfg.validate();
  std::uint64_t count = 0;
  get(&count, 8);
  if (count != static_cast<std::uint64_t>(net_offsets(cfg).total))
    throw std::runtime_error("checkpoint: parameter count mismatch in " + path);
  Eigen::VectorXd p(static_cast<Eigen::Index>(count));
  get(p.data(), sizeof(double) * count);
  return {cfg, p};
}

}  // namespace weakpde
