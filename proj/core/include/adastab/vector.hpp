#ifndef ADASTAB_VECTOR_HPP
#define ADASTAB_VECTOR_HPP

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace adastab {

/// Dense real vector with a fixed dimension and finite entries.
///
/// Every constructor and every mutating operation verifies that all entries
/// stay finite; a NaN or infinity raises std::domain_error so a diverging
/// trajectory is detected at the point it happens instead of propagating.
class Vector {
 public:
  Vector() = default;

  explicit Vector(std::size_t dim, double fill = 0.0) : data_(dim, fill) {
    check_finite();
  }

  Vector(std::initializer_list<double> init) : data_(init) { check_finite(); }

  explicit Vector(std::vector<double> entries) : data_(std::move(entries)) {
    check_finite();
  }

  std::size_t dim() const { return data_.size(); }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at_mut(std::size_t i) { return data_[i]; }

  std::span<const double> entries() const { return data_; }

  const std::vector<double>& raw() const { return data_; }

  void check_finite() const {
    for (double x : data_) {
      if (!std::isfinite(x)) {
        throw std::domain_error("Vector: non-finite entry");
      }
    }
  }

  bool all_finite() const {
    for (double x : data_) {
      if (!std::isfinite(x)) return false;
    }
    return true;
  }

  friend bool operator==(const Vector& a, const Vector& b) {
    return a.data_ == b.data_;
  }

 private:
  std::vector<double> data_;
};

inline void require_same_dim(const Vector& a, const Vector& b,
                             const char* what) {
  if (a.dim() != b.dim()) {
    throw std::invalid_argument(std::string(what) + ": dimension mismatch (" +
                                std::to_string(a.dim()) + " vs " +
                                std::to_string(b.dim()) + ")");
  }
}

inline double dot(const Vector& a, const Vector& b) {
  require_same_dim(a, b, "dot");
  double s = 0.0;
  for (std::size_t i = 0; i < a.dim(); ++i) s += a[i] * b[i];
  return s;
}

inline double squared_norm(const Vector& a) { return dot(a, a); }

inline double norm(const Vector& a) { return std::sqrt(squared_norm(a)); }

inline Vector add(const Vector& a, const Vector& b) {
  require_same_dim(a, b, "add");
  std::vector<double> out(a.dim());
  for (std::size_t i = 0; i < a.dim(); ++i) out[i] = a[i] + b[i];
  return Vector(std::move(out));
}

inline Vector sub(const Vector& a, const Vector& b) {
  require_same_dim(a, b, "sub");
  std::vector<double> out(a.dim());
  for (std::size_t i = 0; i < a.dim(); ++i) out[i] = a[i] - b[i];
  return Vector(std::move(out));
}

inline Vector scale(const Vector& a, double c) {
  std::vector<double> out(a.dim());
  for (std::size_t i = 0; i < a.dim(); ++i) out[i] = c * a[i];
  return Vector(std::move(out));
}

/// a + c*b
inline Vector axpy(const Vector& a, double c, const Vector& b) {
  require_same_dim(a, b, "axpy");
  std::vector<double> out(a.dim());
  for (std::size_t i = 0; i < a.dim(); ++i) out[i] = a[i] + c * b[i];
  return Vector(std::move(out));
}

inline Vector hadamard(const Vector& a, const Vector& b) {
  require_same_dim(a, b, "hadamard");
  std::vector<double> out(a.dim());
  for (std::size_t i = 0; i < a.dim(); ++i) out[i] = a[i] * b[i];
  return Vector(std::move(out));
}

}  // namespace adastab

#endif  // ADASTAB_VECTOR_HPP
