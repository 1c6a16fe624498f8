#pragma once

#include "operator_algebra.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <unordered_map>
#include <vector>

namespace uscme {

// Column-stacking convention throughout: vec(rho)[c*dim + r] = rho(r, c),
// so vec(A rho B) = (B^T kron A) vec(rho).

inline Vector vec_density(const Matrix& rho) {
  return Eigen::Map<const Vector>(rho.data(), rho.size());
}

inline Matrix unvec_density(const Vector& v, int dim) {
  if (v.size() != Eigen::Index(dim) * dim)
    throw std::invalid_argument("unvec_density: size mismatch");
  return Eigen::Map<const Matrix>(v.data(), dim, dim);
}

/// Dense superoperator on vectorized density matrices.
class Superoperator {
 public:
  Superoperator() = default;
  explicit Superoperator(int dim)
      : dim_(dim),
        m_(Matrix::Zero(Eigen::Index(dim) * dim, Eigen::Index(dim) * dim)) {}

  static Superoperator from_matrix(int dim, Matrix m) {
    if (m.rows() != Eigen::Index(dim) * dim || m.cols() != m.rows())
      throw std::invalid_argument("Superoperator: entries must be dim^2 square");
    Superoperator s;
    s.dim_ = dim;
    s.m_ = std::move(m);
    return s;
  }

  int dim() const { return dim_; }
  const Matrix& entries() const { return m_; }

  Matrix apply(const Matrix& rho) const {
    if (rho.rows() != dim_ || rho.cols() != dim_)
      throw std::invalid_argument("Superoperator::apply: dimension mismatch");
    return unvec_density(m_ * vec_density(rho), dim_);
  }

  double max_abs_entry() const { return max_abs(m_); }

  Superoperator& operator+=(const Superoperator& o) {
    if (o.dim_ != dim_)
      throw std::invalid_argument("Superoperator: dimension mismatch");
    m_ += o.m_;
    return *this;
  }
  friend Superoperator operator-(Superoperator a, const Superoperator& b) {
    if (a.dim_ != b.dim_)
      throw std::invalid_argument("Superoperator: dimension mismatch");
    a.m_ -= b.m_;
    return a;
  }

  // Builders; zero entries of the factors are skipped.

  /// += w * (a rho)
  void add_left(const Matrix& a, Complex w) {
    const int d = dim_;
    for (int q = 0; q < d; ++q)
      for (int r = 0; r < d; ++r) {
        Complex v = w * a(r, q);
        if (v == Complex{}) continue;
        for (int c = 0; c < d; ++c) m_(c * d + r, c * d + q) += v;
      }
  }

  /// += w * (rho b)
  void add_right(const Matrix& b, Complex w) {
    const int d = dim_;
    for (int c = 0; c < d; ++c)
      for (int q = 0; q < d; ++q) {
        Complex v = w * b(q, c);
        if (v == Complex{}) continue;
        for (int r = 0; r < d; ++r) m_(c * d + r, q * d + r) += v;
      }
  }

  /// += w * (a rho b)
  void add_sandwich(const Matrix& a, const Matrix& b, Complex w) {
    const int d = dim_;
    for (int p = 0; p < d; ++p)
      for (int r = 0; r < d; ++r) {
        Complex va = w * a(r, p);
        if (va == Complex{}) continue;
        for (int c = 0; c < d; ++c)
          for (int q = 0; q < d; ++q) {
            Complex vb = b(q, c);
            if (vb == Complex{}) continue;
            m_(c * d + r, q * d + p) += va * vb;
          }
      }
  }

  /// += w * [h, rho]
  void add_commutator(const Matrix& h, Complex w) {
    add_left(h, w);
    add_right(h, -w);
  }

  /// += rate * D[o],  D[o] rho = o rho o^dag - (o^dag o rho + rho o^dag o)/2
  void add_dissipator(const Matrix& o, double rate) {
    if (rate == 0.0) return;
    Matrix od = o.adjoint();
    Matrix oo = od * o;
    add_sandwich(o, od, rate);
    add_left(oo, -0.5 * rate);
    add_right(oo, -0.5 * rate);
  }

 private:
  int dim_ = 0;
  Matrix m_;
};

/// One scalar entry of a superoperator in coordinate form.
struct SuperEntry {
  int row;
  int col;
  Complex value;
};

/// Sparse superoperator whose entries are grouped by the rotation frequency
/// they acquire in the interaction picture of a diagonal Hamiltonian with
/// level energies `frame`: an entry connecting vec-index m = (r, c) to
/// n = (r', c') rotates at (E_r - E_c) - (E_r' - E_c'). With an empty frame
/// every rotation is zero and the terms are plain lab-frame entries.
class GeneratorTerms {
 public:
  GeneratorTerms() = default;
  explicit GeneratorTerms(int dim) : dim_(dim) {}
  GeneratorTerms(int dim, RealVector frame_energies)
      : dim_(dim), frame_(std::move(frame_energies)) {
    if (frame_.size() != dim_)
      throw std::invalid_argument("GeneratorTerms: frame size mismatch");
    rot_quantum_ = std::max(1e-14, 1e-10 * frame_.cwiseAbs().maxCoeff());
  }

  int dim() const { return dim_; }
  bool has_frame() const { return frame_.size() > 0; }
  const RealVector& frame() const { return frame_; }

  struct Group {
    double rotation = 0.0;
    std::vector<SuperEntry> entries;
  };
  const std::vector<Group>& groups() const { return groups_; }

  std::size_t entry_count() const {
    std::size_t n = 0;
    for (const auto& g : groups_) n += g.entries.size();
    return n;
  }

  // --- rank-1 builders -----------------------------------------------------
  // Component operators are alpha |p><q|; products and sandwiches of those
  // touch single entries or single rows/columns of the superoperator, which
  // keeps the generalized-dissipator pair loop cheap.

  /// += (a |pa><qa|) rho (b |pb><qb|)
  void add_sandwich_rank1(int pa, int qa, Complex a, int pb, int qb, Complex b) {
    Complex v = a * b;
    if (v == Complex{}) return;
    push(pa, qb, qa, pb, v);
  }

  /// += v * (|p><q| rho)
  void add_left_rank1(int p, int q, Complex v) {
    if (v == Complex{}) return;
    for (int c = 0; c < dim_; ++c) push(p, c, q, c, v);
  }

  /// += v * (rho |p><q|)
  void add_right_rank1(int p, int q, Complex v) {
    if (v == Complex{}) return;
    for (int r = 0; r < dim_; ++r) push(r, q, r, p, v);
  }

  // --- dense-matrix builders ----------------------------------------------

  /// += w * (a rho)
  void add_left(const Matrix& a, Complex w) {
    for (int q = 0; q < dim_; ++q)
      for (int r = 0; r < dim_; ++r)
        if (a(r, q) != Complex{}) add_left_rank1(r, q, w * a(r, q));
  }

  /// += w * (rho b)
  void add_right(const Matrix& b, Complex w) {
    for (int c = 0; c < dim_; ++c)
      for (int q = 0; q < dim_; ++q)
        if (b(q, c) != Complex{}) add_right_rank1(q, c, w * b(q, c));
  }

  /// += w * (a rho b)
  void add_sandwich(const Matrix& a, const Matrix& b, Complex w) {
    for (int p = 0; p < dim_; ++p)
      for (int r = 0; r < dim_; ++r) {
        Complex va = a(r, p);
        if (va == Complex{}) continue;
        for (int c = 0; c < dim_; ++c)
          for (int q = 0; q < dim_; ++q)
            if (b(q, c) != Complex{})
              add_sandwich_rank1(r, p, w * va, q, c, b(q, c));
      }
  }

  /// += w * [h, rho]
  void add_commutator(const Matrix& h, Complex w) {
    add_left(h, w);
    add_right(h, -w);
  }

  /// += rate * D[o]
  void add_dissipator(const Matrix& o, double rate) {
    if (rate == 0.0) return;
    Matrix od = o.adjoint();
    Matrix oo = od * o;
    add_sandwich(o, od, rate);
    add_left(oo, -0.5 * rate);
    add_right(oo, -0.5 * rate);
  }

  // --- use ------------------------------------------------------------------

  /// Deduplicate entries and order groups by rotation. Idempotent.
  void finalize() {
    for (auto& g : groups_) {
      auto& e = g.entries;
      std::sort(e.begin(), e.end(), [](const SuperEntry& x, const SuperEntry& y) {
        return x.row != y.row ? x.row < y.row : x.col < y.col;
      });
      std::size_t out = 0;
      for (std::size_t i = 0; i < e.size();) {
        SuperEntry acc = e[i];
        std::size_t j = i + 1;
        while (j < e.size() && e[j].row == acc.row && e[j].col == acc.col)
          acc.value += e[j++].value;
        e[out++] = acc;
        i = j;
      }
      e.resize(out);
    }
    std::sort(groups_.begin(), groups_.end(),
              [](const Group& a, const Group& b) { return a.rotation < b.rotation; });
    index_.clear();
    for (std::size_t i = 0; i < groups_.size(); ++i)
      index_[quantize(groups_[i].rotation)] = i;
  }

  /// out += scale * sum_g e^{i rot_g t} (G_g y).
  void accumulate_rotated(double t, const Vector& y, Vector& out,
                          Complex scale = Complex{1.0, 0.0}) const {
    for (const auto& g : groups_) {
      Complex phase = (g.rotation == 0.0)
                          ? scale
                          : scale * std::exp(imag_unit * (g.rotation * t));
      for (const SuperEntry& e : g.entries)
        out[e.row] += phase * e.value * y[e.col];
    }
  }

  /// out += lab-frame action (all phases at 1).
  void accumulate_static(const Vector& y, Vector& out) const {
    for (const auto& g : groups_)
      for (const SuperEntry& e : g.entries) out[e.row] += e.value * y[e.col];
  }

  /// Dense lab-frame materialization.
  Superoperator to_super() const {
    Matrix m = Matrix::Zero(Eigen::Index(dim_) * dim_, Eigen::Index(dim_) * dim_);
    for (const auto& g : groups_)
      for (const SuperEntry& e : g.entries) m(e.row, e.col) += e.value;
    return Superoperator::from_matrix(dim_, std::move(m));
  }

  GeneratorTerms& operator+=(const GeneratorTerms& o) {
    if (o.dim_ != dim_)
      throw std::invalid_argument("GeneratorTerms: dimension mismatch");
    for (const auto& g : o.groups_)
      for (const SuperEntry& e : g.entries) {
        auto& mine = group_for(g.rotation);
        mine.entries.push_back(e);
      }
    return *this;
  }

  /// Import a dense superoperator, assigning rotations from the frame.
  void add_dense(const Matrix& m, double drop_tol = 0.0) {
    const int d = dim_;
    if (m.rows() != Eigen::Index(d) * d || m.cols() != Eigen::Index(d) * d)
      throw std::invalid_argument("GeneratorTerms::add_dense: size mismatch");
    double cut = drop_tol * max_abs(m);
    for (Eigen::Index col = 0; col < m.cols(); ++col)
      for (Eigen::Index row = 0; row < m.rows(); ++row) {
        Complex v = m(row, col);
        if (v == Complex{} || std::abs(v) <= cut) continue;
        push(int(row % d), int(row / d), int(col % d), int(col / d), v);
      }
  }

 private:
  void push(int row_r, int row_c, int col_r, int col_c, Complex v) {
    double rot = 0.0;
    if (frame_.size() > 0)
      rot = (frame_(row_r) - frame_(row_c)) - (frame_(col_r) - frame_(col_c));
    group_for(rot).entries.push_back(
        SuperEntry{row_c * dim_ + row_r, col_c * dim_ + col_r, v});
  }

  std::int64_t quantize(double rot) const {
    return std::llround(rot / rot_quantum_);
  }

  Group& group_for(double rot) {
    auto key = quantize(rot);
    auto it = index_.find(key);
    if (it != index_.end()) return groups_[it->second];
    index_[key] = groups_.size();
    groups_.push_back(Group{rot, {}});
    return groups_.back();
  }

  int dim_ = 0;
  RealVector frame_;
  double rot_quantum_ = 1e-14;
  std::vector<Group> groups_;
  std::unordered_map<std::int64_t, std::size_t> index_;
};

}  // namespace uscme
