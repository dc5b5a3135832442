#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <new>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace dagl {

#ifdef DAGL_FLOAT_REAL
using Real = float;
#else
using Real = double;
#endif

using Shape = std::vector<std::size_t>;

// Shape disagreement between operands, or geometry inconsistent with a map.
struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Caller violated a documented precondition (non-scalar loss, tiny image...).
struct ContractError : std::logic_error {
  using std::logic_error::logic_error;
};

// Bad configuration: unknown keys, empty datasets, zero heads.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A NaN or Inf escaped an operation.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Vectorized kernels pick their code path from the buffer's alignment, so a
// fixed alignment keeps results bitwise reproducible between allocations.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};

  AlignedAllocator() = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) { ::operator delete(p, kAlign); }

  template <class U>
  bool operator==(const AlignedAllocator<U>&) const { return true; }
};

using RealBuffer = std::vector<Real, AlignedAllocator<Real>>;

std::string shape_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

/// Dense row-major array. A default-constructed tensor is "undefined" and
/// holds no storage; every defined tensor has positive extents.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, Real fill = Real(0));
  Tensor(Shape shape, std::vector<Real> data);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor full(Shape shape, Real v) { return Tensor(std::move(shape), v); }
  /// 2-D literal, rows must be equal length.
  static Tensor matrix(std::initializer_list<std::initializer_list<Real>> rows);
  static Tensor vector(std::initializer_list<Real> values);
  static Tensor scalar(Real v) { return Tensor({1}, v); }

  bool defined() const { return !shape_.empty(); }
  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t i) const;
  std::size_t numel() const { return data_.size(); }

  std::span<Real> data() { return data_; }
  std::span<const Real> data() const { return data_; }
  Real* raw() { return data_.data(); }
  const Real* raw() const { return data_.data(); }

  Real& operator[](std::size_t i) { return data_[i]; }
  Real operator[](std::size_t i) const { return data_[i]; }

  Real& at(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
  Real at(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }
  Real& at(std::size_t ch, std::size_t y, std::size_t x) {
    return data_[(ch * shape_[1] + y) * shape_[2] + x];
  }
  Real at(std::size_t ch, std::size_t y, std::size_t x) const {
    return data_[(ch * shape_[1] + y) * shape_[2] + x];
  }

  /// Same data, new shape; numel must agree.
  Tensor reshaped(Shape shape) const;

  bool all_finite() const;
  Real item() const;

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  Shape shape_;
  RealBuffer data_;
};

/// Throws DimensionError with `what` prefixed unless shapes are identical.
void require_same_shape(const Tensor& a, const Tensor& b, const char* what);

Real max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace dagl
