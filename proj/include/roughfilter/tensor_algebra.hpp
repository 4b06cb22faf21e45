#pragma once

// Truncated tensor algebra T^N(R^d), N <= 3, and its group-like elements.
//
// A GroupIncrement stores the three levels densely as
//   [ level1 (d) | level2 (d*d, row major) | level3 (d*d*d, row major) ]
// with the scalar level fixed to 1. The level N is fixed at construction;
// operations never truncate implicitly and reject mixed levels.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace roughfilter {

class GroupIncrement {
 public:
  /// Identity element of T^level(R^dim).
  GroupIncrement(std::size_t dim, int level) : d_(dim), n_(level) {
    if (dim == 0) throw std::invalid_argument("GroupIncrement: dimension must be positive");
    if (level < 1 || level > 3) throw std::invalid_argument("GroupIncrement: level must be 1, 2 or 3");
    data_.assign(offset(level + 1), 0.0);
  }

  static GroupIncrement identity(std::size_t dim, int level) { return GroupIncrement(dim, level); }

  std::size_t dim() const { return d_; }
  int level() const { return n_; }

  double& l1(std::size_t i) { return data_[i]; }
  double l1(std::size_t i) const { return data_[i]; }
  double& l2(std::size_t i, std::size_t j) { return data_[d_ + i * d_ + j]; }
  double l2(std::size_t i, std::size_t j) const { return data_[d_ + i * d_ + j]; }
  double& l3(std::size_t i, std::size_t j, std::size_t k) {
    return data_[d_ + d_ * d_ + (i * d_ + j) * d_ + k];
  }
  double l3(std::size_t i, std::size_t j, std::size_t k) const {
    return data_[d_ + d_ * d_ + (i * d_ + j) * d_ + k];
  }

  /// Coefficients of level k (1-based) as a flat row-major view.
  std::span<double> level_data(int k) {
    check_level(k);
    return {data_.data() + offset(k), size_of(k)};
  }
  std::span<const double> level_data(int k) const {
    check_level(k);
    return {data_.data() + offset(k), size_of(k)};
  }

  std::span<const double> raw() const { return data_; }
  std::span<double> raw() { return data_; }

  /// Coefficient of a word (0-based letters). The empty word has coefficient 1.
  double coefficient(std::span<const std::size_t> word) const {
    switch (word.size()) {
      case 0: return 1.0;
      case 1: return l1(word[0]);
      case 2: return n_ >= 2 ? l2(word[0], word[1]) : 0.0;
      case 3: return n_ >= 3 ? l3(word[0], word[1], word[2]) : 0.0;
      default: return 0.0;
    }
  }

  bool geometric() const { return geometric_; }
  void set_geometric(bool flag) { geometric_ = flag; }

 private:
  void check_level(int k) const {
    if (k < 1 || k > n_) throw std::out_of_range("GroupIncrement: level " + std::to_string(k) + " not stored");
  }
  std::size_t size_of(int k) const {
    std::size_t s = 1;
    for (int i = 0; i < k; ++i) s *= d_;
    return s;
  }
  std::size_t offset(int k) const {
    std::size_t o = 0;
    for (int i = 1; i < k; ++i) o += size_of(i);
    return o;
  }

  std::size_t d_;
  int n_;
  std::vector<double> data_;
  bool geometric_ = true;
};

namespace detail {

inline void require_compatible(const GroupIncrement& a, const GroupIncrement& b, const char* what) {
  if (a.dim() != b.dim() || a.level() != b.level()) {
    throw std::invalid_argument(std::string(what) + ": dimension/level mismatch (" +
                                std::to_string(a.dim()) + "," + std::to_string(a.level()) + ") vs (" +
                                std::to_string(b.dim()) + "," + std::to_string(b.level()) + ")");
  }
}

}  // namespace detail

/// Chen product a ⊗ b in the truncated tensor algebra.
inline GroupIncrement tensor_mul(const GroupIncrement& a, const GroupIncrement& b) {
  detail::require_compatible(a, b, "tensor_mul");
  const std::size_t d = a.dim();
  const int n = a.level();
  GroupIncrement c(d, n);
  for (std::size_t i = 0; i < d; ++i) c.l1(i) = a.l1(i) + b.l1(i);
  if (n >= 2) {
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j) c.l2(i, j) = a.l2(i, j) + b.l2(i, j) + a.l1(i) * b.l1(j);
  }
  if (n >= 3) {
    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t j = 0; j < d; ++j) {
        const double a2 = a.l2(i, j);
        for (std::size_t k = 0; k < d; ++k) {
          c.l3(i, j, k) = a.l3(i, j, k) + b.l3(i, j, k) + a.l1(i) * b.l2(j, k) + a2 * b.l1(k);
        }
      }
    }
  }
  c.set_geometric(a.geometric() && b.geometric());
  return c;
}

/// Signature of the straight segment with increment `delta`: level k = delta^{⊗k}/k!.
inline GroupIncrement exp_segment(std::span<const double> delta, int level) {
  for (double v : delta) {
    if (!std::isfinite(v)) throw std::invalid_argument("exp_segment: non-finite increment");
  }
  GroupIncrement g(delta.size(), level);
  const std::size_t d = delta.size();
  for (std::size_t i = 0; i < d; ++i) g.l1(i) = delta[i];
  if (level >= 2) {
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j) g.l2(i, j) = 0.5 * delta[i] * delta[j];
  }
  if (level >= 3) {
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j)
        for (std::size_t k = 0; k < d; ++k) g.l3(i, j, k) = delta[i] * delta[j] * delta[k] / 6.0;
  }
  return g;
}

inline GroupIncrement exp_segment(std::initializer_list<double> delta, int level) {
  std::vector<double> v(delta);
  return exp_segment(std::span<const double>(v), level);
}

/// Exponential of a Lie element x + A, with A an antisymmetric level-2 tensor
/// (row major d*d). The result is group-like by construction.
inline GroupIncrement exp_lie(std::span<const double> x, std::span<const double> area, int level) {
  const std::size_t d = x.size();
  if (area.size() != d * d) throw std::invalid_argument("exp_lie: area must be d*d");
  GroupIncrement g = exp_segment(x, level);
  if (level >= 2) {
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j) g.l2(i, j) += area[i * d + j];
  }
  if (level >= 3) {
    // (x ⊗ A + A ⊗ x) / 2
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j)
        for (std::size_t k = 0; k < d; ++k)
          g.l3(i, j, k) += 0.5 * (x[i] * area[j * d + k] + area[i * d + j] * x[k]);
  }
  return g;
}

/// Group inverse. In the nilpotent truncation the Neumann series
/// (1 + a)^{-1} = 1 - a + a^2 - a^3 terminates exactly.
inline GroupIncrement inverse(const GroupIncrement& g) {
  const std::size_t d = g.dim();
  const int n = g.level();
  GroupIncrement r(d, n);
  for (std::size_t i = 0; i < d; ++i) r.l1(i) = -g.l1(i);
  if (n >= 2) {
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j) r.l2(i, j) = -g.l2(i, j) + g.l1(i) * g.l1(j);
  }
  if (n >= 3) {
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j)
        for (std::size_t k = 0; k < d; ++k) {
          r.l3(i, j, k) = -g.l3(i, j, k) + g.l1(i) * g.l2(j, k) + g.l2(i, j) * g.l1(k) -
                          g.l1(i) * g.l1(j) * g.l1(k);
        }
  }
  r.set_geometric(g.geometric());
  return r;
}

/// Dilation δ_λ: level k scaled by λ^k.
inline GroupIncrement dilate(const GroupIncrement& g, double lambda) {
  GroupIncrement r = g;
  double f = 1.0;
  for (int k = 1; k <= g.level(); ++k) {
    f *= lambda;
    for (double& v : r.level_data(k)) v *= f;
  }
  return r;
}

inline double max_abs_difference(const GroupIncrement& a, const GroupIncrement& b) {
  detail::require_compatible(a, b, "max_abs_difference");
  double m = 0.0;
  auto ra = a.raw();
  auto rb = b.raw();
  for (std::size_t i = 0; i < ra.size(); ++i) m = std::max(m, std::abs(ra[i] - rb[i]));
  return m;
}

/// Shuffle product of two words, as a map word -> multiplicity.
inline std::map<std::vector<std::size_t>, int> shuffle(const std::vector<std::size_t>& u,
                                                       const std::vector<std::size_t>& v) {
  std::map<std::vector<std::size_t>, int> out;
  if (u.empty()) {
    out[v] += 1;
    return out;
  }
  if (v.empty()) {
    out[u] += 1;
    return out;
  }
  // u ⧢ v = (u' ⧢ v) a + (u ⧢ v') b, with u = u'a, v = v'b
  std::vector<std::size_t> u_head(u.begin(), u.end() - 1);
  std::vector<std::size_t> v_head(v.begin(), v.end() - 1);
  for (const auto& [w, m] : shuffle(u_head, v)) {
    auto x = w;
    x.push_back(u.back());
    out[x] += m;
  }
  for (const auto& [w, m] : shuffle(u, v_head)) {
    auto x = w;
    x.push_back(v.back());
    out[x] += m;
  }
  return out;
}

namespace detail {

inline void enumerate_words(std::size_t d, std::size_t len, std::vector<std::vector<std::size_t>>& out) {
  std::vector<std::size_t> w(len, 0);
  if (len == 0) return;
  while (true) {
    out.push_back(w);
    std::size_t pos = len;
    while (pos > 0) {
      --pos;
      if (++w[pos] < d) break;
      w[pos] = 0;
      if (pos == 0) return;
    }
  }
}

}  // namespace detail

/// max over word pairs (|u|+|v| <= N, both nonempty) of |<g,u><g,v> - <g,u⧢v>|.
inline double grouplike_residual(const GroupIncrement& g) {
  const std::size_t d = g.dim();
  const int n = g.level();
  double worst = 0.0;
  std::vector<std::vector<std::vector<std::size_t>>> words(static_cast<std::size_t>(n) + 1);
  for (int k = 1; k <= n; ++k) detail::enumerate_words(d, static_cast<std::size_t>(k), words[k]);
  for (int lu = 1; lu <= n; ++lu) {
    for (int lv = lu; lu + lv <= n; ++lv) {
      for (const auto& u : words[lu]) {
        for (const auto& v : words[lv]) {
          double rhs = 0.0;
          for (const auto& [w, m] : shuffle(u, v)) rhs += m * g.coefficient(w);
          worst = std::max(worst, std::abs(g.coefficient(u) * g.coefficient(v) - rhs));
        }
      }
    }
  }
  return worst;
}

/// Homogeneous norm max_k (k! ||level_k||_F)^{1/k}; equivalent to the
/// Carnot-Caratheodory norm on group-like elements and 1-homogeneous under dilation.
inline double homogeneous_norm(const GroupIncrement& g) {
  double best = 0.0;
  double fact = 1.0;
  for (int k = 1; k <= g.level(); ++k) {
    fact *= k;
    double s = 0.0;
    for (double v : g.level_data(k)) s += v * v;
    best = std::max(best, std::pow(fact * std::sqrt(s), 1.0 / k));
  }
  return best;
}

/// Homogeneous distance ||a^{-1} ⊗ b||.
inline double homogeneous_distance(const GroupIncrement& a, const GroupIncrement& b) {
  return homogeneous_norm(tensor_mul(inverse(a), b));
}

/// Truncates a level-3 increment to level 2 (explicit, never implicit).
inline GroupIncrement truncate(const GroupIncrement& g, int level) {
  if (level > g.level()) throw std::invalid_argument("truncate: cannot raise level");
  GroupIncrement r(g.dim(), level);
  for (int k = 1; k <= level; ++k) {
    auto src = g.level_data(k);
    std::copy(src.begin(), src.end(), r.level_data(k).begin());
  }
  r.set_geometric(g.geometric());
  return r;
}

}  // namespace roughfilter
