#pragma once

// Spin lattices and matrix-free Hamiltonians on (C^{2s+1})^{\otimes N}.
//
// Index convention: site 0 is the most significant base-d digit, and the
// system sites occupy the leading digits, so a total-space index factors as
// (system index) * dim_bath + (bath index). Local digit a corresponds to
// magnetic quantum number m = s - a (digit 0 is spin up).
//
// Every unordered bond contributes (J^a_ij / 2) sigma^a_i sigma^a_j and every
// site contributes (h / 2) sigma^z_i, with sigma = 2 S (Pauli for s = 1/2).
// For the nearest-neighbour XX chain this gives single-particle energies
// h - 2 J cos(k pi / (N + 1)).

#include "mforce/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <string_view>
#include <vector>

namespace mforce {

enum class Topology { chain, ladder, power_law_chain, explicit_table };
enum class Role { total, system, bath, interaction };
enum class Axis { x, y, z };

inline std::string_view to_string(Topology t) {
  switch (t) {
    case Topology::chain: return "chain";
    case Topology::ladder: return "ladder";
    case Topology::power_law_chain: return "power_law_chain";
    case Topology::explicit_table: return "explicit";
  }
  return "?";
}

inline Topology topology_from_string(std::string_view name) {
  if (name == "chain") return Topology::chain;
  if (name == "ladder") return Topology::ladder;
  if (name == "power_law_chain") return Topology::power_law_chain;
  if (name == "explicit") return Topology::explicit_table;
  throw std::invalid_argument("unknown topology: " + std::string(name));
}

inline std::string_view to_string(Role r) {
  switch (r) {
    case Role::total: return "total";
    case Role::system: return "system";
    case Role::bath: return "bath";
    case Role::interaction: return "interaction";
  }
  return "?";
}

/// Lattice, couplings, field and system/bath split. Sites are 0-based here;
/// coupling tables are indexed by lattice site.
struct SpinSystemSpec {
  int n_sites = 0;
  int n_system = 0;
  double spin = 0.5;
  Topology topology = Topology::chain;
  RMatrix jx, jy, jz;
  double field = 0.0;
  /// Power-law exponent; +infinity means nearest neighbour.
  double alpha = std::numeric_limits<double>::infinity();
  /// Scales the system-bath interaction only.
  double epsilon = 1.0;
  /// Lattice sites forming the system, in order. Empty means 0..n_system-1.
  std::vector<int> system_sites;

  int n_bath() const { return n_sites - n_system; }
  int local_dim() const { return static_cast<int>(std::lround(2.0 * spin)) + 1; }

  static std::uint64_t checked_power(int base, int exponent) {
    std::uint64_t out = 1;
    for (int i = 0; i < exponent; ++i) {
      out *= static_cast<std::uint64_t>(base);
      if (out > (std::uint64_t{1} << 31)) throw DimensionError("Hilbert space dimension exceeds 2^31");
    }
    return out;
  }

  std::size_t total_dim() const { return checked_power(local_dim(), n_sites); }
  std::size_t system_dim() const { return checked_power(local_dim(), n_system); }
  std::size_t bath_dim() const { return checked_power(local_dim(), n_bath()); }

  /// Lattice sites in Hilbert-space order: system sites first, then the bath
  /// in ascending lattice order.
  std::vector<int> site_order() const {
    std::vector<int> order;
    if (system_sites.empty()) {
      order.resize(static_cast<std::size_t>(n_sites));
      std::iota(order.begin(), order.end(), 0);
      return order;
    }
    order = system_sites;
    for (int s = 0; s < n_sites; ++s)
      if (std::find(system_sites.begin(), system_sites.end(), s) == system_sites.end()) order.push_back(s);
    return order;
  }

  void validate() const {
    if (n_sites < 2) throw std::invalid_argument("SpinSystemSpec: need at least two sites");
    if (n_system < 1 || n_system >= n_sites)
      throw std::invalid_argument("SpinSystemSpec: require 1 <= N_s < N");
    const double twice = 2.0 * spin;
    if (spin < 0.5 || std::abs(twice - std::round(twice)) > 1e-12)
      throw std::invalid_argument("SpinSystemSpec: spin must be a positive half-integer");
    if (alpha < 0.0 || std::isnan(alpha)) throw std::invalid_argument("SpinSystemSpec: alpha must be >= 0");
    if (epsilon < 0.0 || !std::isfinite(epsilon)) throw std::invalid_argument("SpinSystemSpec: epsilon must be >= 0");
    if (!std::isfinite(field)) throw std::invalid_argument("SpinSystemSpec: field must be finite");
    (void)total_dim();
    const auto n = static_cast<Eigen::Index>(n_sites);
    for (const RMatrix* t : {&jx, &jy, &jz}) {
      if (t->rows() != n || t->cols() != n) throw std::invalid_argument("SpinSystemSpec: coupling table must be N x N");
      for (Eigen::Index i = 0; i < n; ++i) {
        if ((*t)(i, i) != 0.0) throw std::invalid_argument("SpinSystemSpec: coupling diagonal must be zero");
        for (Eigen::Index j = 0; j < n; ++j)
          if ((*t)(i, j) != (*t)(j, i)) throw std::invalid_argument("SpinSystemSpec: coupling table not symmetric");
      }
    }
    if (!system_sites.empty()) {
      if (static_cast<int>(system_sites.size()) != n_system)
        throw std::invalid_argument("SpinSystemSpec: system_sites must list N_s sites");
      std::vector<int> sorted = system_sites;
      std::sort(sorted.begin(), sorted.end());
      if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end() || sorted.front() < 0 ||
          sorted.back() >= n_sites)
        throw std::invalid_argument("SpinSystemSpec: system_sites must be distinct lattice sites");
    }
  }
};

/// XY chain with J|i-j|^{-alpha} couplings (alpha = inf: nearest neighbour).
inline SpinSystemSpec make_power_law_chain(int n, int n_system, double coupling, double alpha, double field,
                                           double spin = 0.5) {
  if (alpha < 0.0) throw std::invalid_argument("make_power_law_chain: alpha must be >= 0");
  SpinSystemSpec spec;
  spec.n_sites = n;
  spec.n_system = n_system;
  spec.spin = spin;
  spec.field = field;
  spec.alpha = alpha;
  spec.topology = std::isinf(alpha) ? Topology::chain : Topology::power_law_chain;
  spec.jx = RMatrix::Zero(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      const int dist = std::abs(i - j);
      if (std::isinf(alpha)) {
        if (dist == 1) spec.jx(i, j) = coupling;
      } else {
        spec.jx(i, j) = coupling * std::pow(static_cast<double>(dist), -alpha);
      }
    }
  spec.jy = spec.jx;
  spec.jz = RMatrix::Zero(n, n);
  return spec;
}

inline SpinSystemSpec make_chain(int n, int n_system, double coupling, double field, double spin = 0.5) {
  return make_power_law_chain(n, n_system, coupling, std::numeric_limits<double>::infinity(), field, spin);
}

/// Two-leg XY ladder: sites 0..n/2-1 form one leg, n/2..n-1 the other, and
/// rung r joins r and r + n/2.
inline SpinSystemSpec make_ladder(int n, int n_system, double leg_coupling, double rung_coupling, double field,
                                  double spin = 0.5) {
  if (n % 2 != 0) throw std::invalid_argument("make_ladder: N must be even");
  SpinSystemSpec spec;
  spec.n_sites = n;
  spec.n_system = n_system;
  spec.spin = spin;
  spec.field = field;
  spec.topology = Topology::ladder;
  const int half = n / 2;
  spec.jx = RMatrix::Zero(n, n);
  for (int r = 0; r + 1 < half; ++r) {
    spec.jx(r, r + 1) = spec.jx(r + 1, r) = leg_coupling;
    spec.jx(r + half, r + half + 1) = spec.jx(r + half + 1, r + half) = leg_coupling;
  }
  for (int r = 0; r < half; ++r) spec.jx(r, r + half) = spec.jx(r + half, r) = rung_coupling;
  spec.jy = spec.jx;
  spec.jz = RMatrix::Zero(n, n);
  return spec;
}

/// One term of a Hamiltonian: coefficient * sigma^axis_a sigma^axis_b, or
/// coefficient * sigma^axis_a when site_b < 0. Sites are Hilbert-space
/// positions on the operator's own space.
struct Term {
  int site_a = 0;
  int site_b = -1;
  Axis axis = Axis::z;
  double coefficient = 0.0;
};

/// Sites and terms of one role of the split Hamiltonian.
struct RoleLattice {
  int n_sites = 0;
  std::vector<Term> terms;
};

inline RoleLattice role_lattice(const SpinSystemSpec& spec, Role role) {
  spec.validate();
  const std::vector<int> order = spec.site_order();
  const int ns = spec.n_system;
  const int n = spec.n_sites;

  RoleLattice out;
  int first = 0;
  int last = n;  // Hilbert positions [first, last) belong to this operator
  switch (role) {
    case Role::system: last = ns; break;
    case Role::bath: first = ns; break;
    default: break;
  }
  out.n_sites = last - first;

  auto is_system = [ns](int pos) { return pos < ns; };
  const bool want_field = role != Role::interaction;

  for (int p = first; p < last; ++p) {
    for (int q = p + 1; q < last; ++q) {
      const bool cross = is_system(p) != is_system(q);
      if (role == Role::interaction && !cross) continue;
      double scale = 0.5;
      if (role == Role::total && cross) scale *= spec.epsilon;
      const int a = order[static_cast<std::size_t>(p)];
      const int b = order[static_cast<std::size_t>(q)];
      const double cx = scale * spec.jx(a, b);
      const double cy = scale * spec.jy(a, b);
      const double cz = scale * spec.jz(a, b);
      if (cx != 0.0) out.terms.push_back({p - first, q - first, Axis::x, cx});
      if (cy != 0.0) out.terms.push_back({p - first, q - first, Axis::y, cy});
      if (cz != 0.0) out.terms.push_back({p - first, q - first, Axis::z, cz});
    }
    if (want_field && spec.field != 0.0) out.terms.push_back({p - first, -1, Axis::z, 0.5 * spec.field});
  }
  return out;
}

/// Matrix-free Hermitian operator built from a term list. Immutable after
/// construction; apply/apply_block are reentrant.
class HamiltonianOperator {
 public:
  HamiltonianOperator(RoleLattice lattice, double spin, Role role)
      : role_(role), n_sites_(lattice.n_sites), spin_(spin), terms_(std::move(lattice.terms)) {
    local_dim_ = static_cast<int>(std::lround(2.0 * spin_)) + 1;
    dim_ = SpinSystemSpec::checked_power(local_dim_, n_sites_);
    strides_.assign(static_cast<std::size_t>(n_sites_), 1);
    for (int i = n_sites_ - 2; i >= 0; --i)
      strides_[static_cast<std::size_t>(i)] = strides_[static_cast<std::size_t>(i) + 1] * static_cast<std::size_t>(local_dim_);
    raise_.resize(static_cast<std::size_t>(local_dim_), 0.0);
    for (int a = 1; a < local_dim_; ++a) {
      const double m = spin_ - a;
      raise_[static_cast<std::size_t>(a)] = std::sqrt(spin_ * (spin_ + 1.0) - m * (m + 1.0));
    }
    compile();
  }

  std::size_t dimension() const { return dim_; }
  Role role() const { return role_; }
  int n_sites() const { return n_sites_; }
  int local_dim() const { return local_dim_; }
  double spin() const { return spin_; }
  const std::vector<Term>& terms() const { return terms_; }
  const RVector& diagonal() const { return diagonal_; }

  CVector apply(const CVector& v) const {
    if (static_cast<std::size_t>(v.size()) != dim_) throw DimensionError("apply: vector length mismatch");
    return apply_block(v);
  }

  /// H V for a block V; traverses the term list once per block.
  CMatrix apply_block(const CMatrix& v) const {
    if (static_cast<std::size_t>(v.rows()) != dim_) throw DimensionError("apply_block: block row count mismatch");
    const Eigen::Index w = v.cols();
    CMatrix out(v.rows(), w);
    for (Eigen::Index c = 0; c < w; ++c) out.col(c) = diagonal_.cast<Complex>().cwiseProduct(v.col(c));
    if (local_dim_ == 2) {
      apply_offdiag_qubit(v, out);
    } else {
      apply_offdiag_general(v, out);
    }
    return out;
  }

 private:
  // (flip) (S+_i S-_j + S-_i S+_j) + (pair) (S+_i S+_j + S-_i S-_j), in sigma = 2S units.
  struct Hop {
    int site_a;
    int site_b;
    double flip;
    double pair;
  };

  double m_of(int digit) const { return spin_ - digit; }

  int digit(std::size_t index, int site) const {
    return static_cast<int>((index / strides_[static_cast<std::size_t>(site)]) % static_cast<std::size_t>(local_dim_));
  }

  void compile() {
    diagonal_ = RVector::Zero(static_cast<Eigen::Index>(dim_));
    std::vector<Hop> hops;
    auto find_hop = [&hops](int a, int b) -> Hop& {
      for (auto& h : hops)
        if (h.site_a == a && h.site_b == b) return h;
      hops.push_back({a, b, 0.0, 0.0});
      return hops.back();
    };
    for (const Term& t : terms_) {
      if (t.site_a < 0 || t.site_a >= n_sites_ || t.site_b >= n_sites_ || t.site_a == t.site_b)
        throw std::invalid_argument("HamiltonianOperator: term references invalid site");
      if (t.site_b < 0) {
        if (t.axis != Axis::z) throw std::invalid_argument("HamiltonianOperator: single-site terms must be sigma^z");
        for (std::size_t x = 0; x < dim_; ++x)
          diagonal_(static_cast<Eigen::Index>(x)) += t.coefficient * 2.0 * m_of(digit(x, t.site_a));
        continue;
      }
      const int a = std::min(t.site_a, t.site_b);
      const int b = std::max(t.site_a, t.site_b);
      switch (t.axis) {
        case Axis::z:
          for (std::size_t x = 0; x < dim_; ++x)
            diagonal_(static_cast<Eigen::Index>(x)) += t.coefficient * 4.0 * m_of(digit(x, a)) * m_of(digit(x, b));
          break;
        case Axis::x: {
          Hop& h = find_hop(a, b);
          h.flip += t.coefficient;
          h.pair += t.coefficient;
          break;
        }
        case Axis::y: {
          Hop& h = find_hop(a, b);
          h.flip += t.coefficient;
          h.pair -= t.coefficient;
          break;
        }
      }
    }
    hops_ = std::move(hops);
  }

  void apply_offdiag_qubit(const CMatrix& v, CMatrix& out) const {
    const Eigen::Index w = v.cols();
    for (const Hop& h : hops_) {
      const std::size_t ma = strides_[static_cast<std::size_t>(h.site_a)];
      const std::size_t mb = strides_[static_cast<std::size_t>(h.site_b)];
      const std::size_t mask = ma | mb;
      for (Eigen::Index c = 0; c < w; ++c) {
        const Complex* in = v.col(c).data();
        Complex* o = out.col(c).data();
        for (std::size_t x = 0; x < dim_; ++x) {
          const bool differ = ((x & ma) != 0) != ((x & mb) != 0);
          const double e = differ ? h.flip : h.pair;
          o[x] += e * in[x ^ mask];
        }
      }
    }
  }

  void apply_offdiag_general(const CMatrix& v, CMatrix& out) const {
    const Eigen::Index w = v.cols();
    const int top = local_dim_ - 1;
    for (const Hop& h : hops_) {
      const auto sa = static_cast<std::ptrdiff_t>(strides_[static_cast<std::size_t>(h.site_a)]);
      const auto sb = static_cast<std::ptrdiff_t>(strides_[static_cast<std::size_t>(h.site_b)]);
      for (Eigen::Index c = 0; c < w; ++c) {
        const Complex* in = v.col(c).data();
        Complex* o = out.col(c).data();
        for (std::size_t x = 0; x < dim_; ++x) {
          const int da = digit(x, h.site_a);
          const int db = digit(x, h.site_b);
          const auto xi = static_cast<std::ptrdiff_t>(x);
          Complex acc{0.0, 0.0};
          // Gather form: (Hv)[x] = sum_y <x|hop|y> v[y]. Digit d -> d - 1 raises m
          // with element raise_[d].
          if (h.flip != 0.0) {
            if (da > 0 && db < top)  // x = S-_a S+_b y
              acc += h.flip * raise_[static_cast<std::size_t>(da)] * raise_[static_cast<std::size_t>(db + 1)] * in[xi - sa + sb];
            if (da < top && db > 0)  // x = S+_a S-_b y
              acc += h.flip * raise_[static_cast<std::size_t>(da + 1)] * raise_[static_cast<std::size_t>(db)] * in[xi + sa - sb];
          }
          if (h.pair != 0.0) {
            if (da > 0 && db > 0)  // x = S-_a S-_b y
              acc += h.pair * raise_[static_cast<std::size_t>(da)] * raise_[static_cast<std::size_t>(db)] * in[xi - sa - sb];
            if (da < top && db < top)  // x = S+_a S+_b y
              acc += h.pair * raise_[static_cast<std::size_t>(da + 1)] * raise_[static_cast<std::size_t>(db + 1)] * in[xi + sa + sb];
          }
          o[x] += acc;
        }
      }
    }
  }

  Role role_;
  int n_sites_;
  double spin_;
  int local_dim_ = 2;
  std::size_t dim_ = 0;
  std::vector<Term> terms_;
  std::vector<std::size_t> strides_;
  std::vector<double> raise_;
  RVector diagonal_;
  std::vector<Hop> hops_;
};

inline HamiltonianOperator build(const SpinSystemSpec& spec, Role role) {
  return HamiltonianOperator(role_lattice(spec, role), spec.spin, role);
}

}  // namespace mforce
