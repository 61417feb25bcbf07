#pragma once

#include <cstddef>
#include <new>
#include <vector>

#include <Eigen/Core>

namespace nmnet {

/// 64-byte aligned storage. Eigen picks its vectorized code path from the
/// address of the data, so a fixed alignment keeps every reduction order, and
/// therefore every result bit, independent of where malloc placed a buffer.
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
  friend bool operator==(const AlignedAllocator&, const AlignedAllocator<U>&) {
    return true;
  }
};

using AlignedVector = std::vector<double, AlignedAllocator<double>>;

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixView = Eigen::Map<RowMatrix>;
using ConstMatrixView = Eigen::Map<const RowMatrix>;

/// N correspondences x W neighbor slots x C channels, channels contiguous.
class FeatureMap {
 public:
  FeatureMap() = default;
  FeatureMap(std::size_t n, std::size_t w, std::size_t c, double fill = 0.0)
      : n_(n), w_(w), c_(c), data_(n * w * c, fill) {}

  std::size_t n() const { return n_; }
  std::size_t w() const { return w_; }
  std::size_t c() const { return c_; }
  std::size_t rows() const { return n_ * w_; }
  std::size_t size() const { return data_.size(); }

  double& operator()(std::size_t i, std::size_t x, std::size_t ch) { return data_[(i * w_ + x) * c_ + ch]; }
  double operator()(std::size_t i, std::size_t x, std::size_t ch) const {
    return data_[(i * w_ + x) * c_ + ch];
  }

  double* row(std::size_t i, std::size_t x) { return data_.data() + (i * w_ + x) * c_; }
  const double* row(std::size_t i, std::size_t x) const { return data_.data() + (i * w_ + x) * c_; }

  /// (N*W) x C view.
  MatrixView matrix() {
    return {data_.data(), static_cast<Eigen::Index>(rows()), static_cast<Eigen::Index>(c_)};
  }
  ConstMatrixView matrix() const {
    return {data_.data(), static_cast<Eigen::Index>(rows()), static_cast<Eigen::Index>(c_)};
  }

  AlignedVector& data() { return data_; }
  const AlignedVector& data() const { return data_; }

  bool same_shape(const FeatureMap& o) const { return n_ == o.n_ && w_ == o.w_ && c_ == o.c_; }

  friend bool operator==(const FeatureMap&, const FeatureMap&) = default;

 private:
  std::size_t n_ = 0;
  std::size_t w_ = 0;
  std::size_t c_ = 0;
  AlignedVector data_;
};

}  // namespace nmnet
