#include <weakpde/pde_library.hpp>

#include <cctype>
#include <cstdio>
#include <numeric>

namespace weakpde {

int MultiIndex::total() const {
  return t + std::accumulate(x.begin(), x.end(), 0);
}

double MultiIndex::sign() const { return total() % 2 ? -1.0 : 1.0; }

void LibrarySpec::validate() const {
  const int d = spatial_dim();
  if (d != 1)
    throw std::runtime_error("library: only one spatial axis is supported");
  for (const auto& term : rhs)
    if (static_cast<int>(term.alpha.x.size()) != d)
      throw std::runtime_error("library: mixed spatial dimensions");
  for (size_t i = 0; i < rhs.size(); ++i)
    for (size_t j = i + 1; j < rhs.size(); ++j)
      if (rhs[i] == rhs[j])
        throw std::runtime_error("library: duplicate term " + format_term(rhs[i]));
}

std::vector<MultiIndex> LibrarySpec::multi_indices() const {
  std::vector<MultiIndex> out{lhs.alpha};
  for (const auto& term : rhs) {
    bool seen = false;
    for (const auto& a : out)
      if (a == term.alpha) {
        seen = true;
        break;
      }
    if (!seen) out.push_back(term.alpha);
  }
  return out;
}

int LibrarySpec::index_of(const std::vector<MultiIndex>& list,
                          const MultiIndex& a) {
  for (size_t i = 0; i < list.size(); ++i)
    if (list[i] == a) return static_cast<int>(i);
  throw std::logic_error("multi-index not in library list");
}

LibrarySpec LibrarySpec::default_1d() {
  auto term = [](int t, int b, int k) { return LibraryTerm{MultiIndex{t, {b}}, k}; };
  LibrarySpec lib;
  lib.lhs = term(1, 0, 1);
  for (int k = 0; k <= 3; ++k) {
    const int max_b = (k == 0) ? 0 : (k == 1) ? 4 : (k == 2) ? 3 : 2;
    for (int b = 0; b <= max_b; ++b) lib.rhs.push_back(term(0, b, k));
  }
  return lib;
}

CoefficientVector CoefficientVector::zeros(int n) {
  CoefficientVector xi;
  xi.values = Eigen::VectorXd::Zero(n);
  xi.active.assign(n, 1);
  return xi;
}

int CoefficientVector::n_active() const {
  int n = 0;
  for (auto a : active) n += a ? 1 : 0;
  return n;
}

namespace {

[[noreturn]] void fail(size_t pos, const std::string& why) {
  throw ParseError("parse error at position " + std::to_string(pos) + ": " + why);
}

// Parses the digits after '^'; pos points at the first exponent character.
int parse_exponent(const std::string& s, size_t& pos) {
  if (pos >= s.size() || !std::isdigit(static_cast<unsigned char>(s[pos])))
    fail(pos, "expected a non-negative integer exponent after '^'");
  int v = 0;
  while (pos < s.size() && std::isdigit(static_cast<unsigned char>(s[pos]))) {
    v = v * 10 + (s[pos] - '0');
    ++pos;
  }
  return v;
}

}  // namespace

LibraryTerm parse_term(const std::string& text, int spatial_dim) {
  if (spatial_dim != 1)
    throw ParseError("only one spatial axis is supported");
  LibraryTerm term{MultiIndex{0, std::vector<int>(spatial_dim, 0)}, 1};
  // 0: expect D_t/D_x/U/1, 1: expect D_x/U, 2: expect U, 3: done
  int state = 0;
  size_t i = 0;
  while (true) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    if (i >= text.size()) break;
    const size_t start = i;
    if (state == 3) fail(start, "unexpected trailing text");
    if (text.compare(i, 2, "D_") == 0) {
      if (i + 2 >= text.size()) fail(start, "incomplete derivative operator");
      const char axis = text[i + 2];
      if (axis != 't' && axis != 'x') fail(start, "unknown derivative operator");
      i += 3;
      int order = 1;
      if (i < text.size() && text[i] == '^') {
        ++i;
        order = parse_exponent(text, i);
      }
      if (order == 0) fail(start, "zero-order operator must be omitted");
      if (axis == 't') {
        if (state != 0) fail(start, "D_t must precede D_x and U");
        term.alpha.t = order;
        state = 1;
      } else {
        if (state > 1) fail(start, "D_x must precede U");
        term.alpha.x[0] = order;
        state = 2;
      }
      if (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i])))
        fail(i, "expected whitespace after operator");
    } else if (text[i] == 'U') {
      ++i;
      int k = 1;
      if (i < text.size() && text[i] == '^') {
        ++i;
        k = parse_exponent(text, i);
      }
      if (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i])))
        fail(i, "unexpected character after U");
      term.power = k;
      state = 3;
    } else if (text[i] == '1' && state == 0) {
      ++i;
      if (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i])))
        fail(i, "unexpected character after 1");
      term.power = 0;
      state = 3;
    } else {
      fail(start, "expected D_t, D_x, U, or 1");
    }
  }
  if (state != 3) fail(text.size(), "expected U");
  return term;
}

std::string format_term(const LibraryTerm& term) {
  std::string out;
  auto op = [&out](const char* base, int order) {
    if (order == 0) return;
    if (!out.empty()) out += ' ';
    out += base;
    if (order > 1) out += "^" + std::to_string(order);
  };
  op("D_t", term.alpha.t);
  op("D_x", term.alpha.x.empty() ? 0 : term.alpha.x[0]);
  if (term.power == 0 && out.empty()) return "1";
  if (!out.empty()) out += ' ';
  out += 'U';
  if (term.power != 1) out += "^" + std::to_string(term.power);
  return out;
}

std::string format_pde(const LibrarySpec& lib, const CoefficientVector& xi,
                       int digits) {
  std::string out = format_term(lib.lhs) + " = ";
  char buf[64];
  bool first = true;
  for (size_t m = 0; m < lib.rhs.size(); ++m) {
    if (!xi.active[m]) continue;
    const double v = xi.values[static_cast<int>(m)];
    if (first)
      out += (v < 0 ? "-" : "");
    else
      out += (v < 0 ? " - " : " + ");
    std::snprintf(buf, sizeof buf, "%.*f", digits, std::abs(v));
    out += buf;
    out += "(" + format_term(lib.rhs[m]) + ")";
    first = false;
  }
  if (first) out += "0";
  return out;
}

Eigen::ArrayXd monomial_eval(const Eigen::ArrayXd& u, int power) {
  if (power == 0) return Eigen::ArrayXd::Ones(u.size());
  Eigen::ArrayXd out = u;
  for (int i = 1; i < power; ++i) out *= u;
  return out;
}

}  // namespace weakpde
