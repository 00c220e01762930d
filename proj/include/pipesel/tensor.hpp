// Copyright 2026 The Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Dense order-N tensors in row-major (last index fastest) layout.
//
// Modes are zero-based throughout the library. The mode-n matricization of
// a tensor with extents (d_0, ..., d_{N-1}) is the d_n x (prod_{i != n} d_i)
// matrix whose column index enumerates the remaining modes in increasing
// order with the *last* remaining mode varying fastest. For mode 0 this is a
// plain reshape of the flat storage, so column j of the mode-0 unfolding of
// a (dataset, component_1, ..., component_k) tensor is the flat index of the
// pipeline (component_1, ..., component_k).

#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pipesel/error.hpp"

namespace pipesel {

inline constexpr std::size_t kMaxOrder = 8;

class Shape {
 public:
  Shape() = default;
  Shape(std::initializer_list<std::size_t> dims) : Shape(std::vector(dims)) {}
  explicit Shape(std::vector<std::size_t> dims) : dims_(std::move(dims)) {
    detail::require(!dims_.empty(), "shape must have at least one mode");
    detail::require(dims_.size() <= kMaxOrder,
                    "tensor order exceeds " + std::to_string(kMaxOrder));
    for (std::size_t d : dims_) {
      detail::require(d >= 1, "every tensor extent must be >= 1");
    }
  }

  std::size_t order() const noexcept { return dims_.size(); }
  std::size_t operator[](std::size_t mode) const { return dims_.at(mode); }
  const std::vector<std::size_t>& dims() const noexcept { return dims_; }

  std::size_t size() const noexcept {
    return std::accumulate(dims_.begin(), dims_.end(), std::size_t{1},
                           std::multiplies<>());
  }

  // Product of extents strictly before / after `mode`.
  std::size_t left_of(std::size_t mode) const {
    std::size_t p = 1;
    for (std::size_t i = 0; i < mode; ++i) p *= dims_[i];
    return p;
  }
  std::size_t right_of(std::size_t mode) const {
    std::size_t p = 1;
    for (std::size_t i = mode + 1; i < dims_.size(); ++i) p *= dims_[i];
    return p;
  }

  Shape with_extent(std::size_t mode, std::size_t extent) const {
    std::vector<std::size_t> d = dims_;
    d.at(mode) = extent;
    return Shape(std::move(d));
  }

  std::size_t flat_index(std::span<const std::size_t> index) const {
    detail::require(index.size() == dims_.size(), "index arity mismatch");
    std::size_t flat = 0;
    for (std::size_t i = 0; i < dims_.size(); ++i) {
      detail::require(index[i] < dims_[i], "index out of range");
      flat = flat * dims_[i] + index[i];
    }
    return flat;
  }

  std::vector<std::size_t> unravel(std::size_t flat) const {
    std::vector<std::size_t> index(dims_.size());
    for (std::size_t i = dims_.size(); i-- > 0;) {
      index[i] = flat % dims_[i];
      flat /= dims_[i];
    }
    return index;
  }

  std::string to_string() const {
    std::string s;
    for (std::size_t i = 0; i < dims_.size(); ++i) {
      if (i) s += 'x';
      s += std::to_string(dims_[i]);
    }
    return s;
  }

  friend bool operator==(const Shape&, const Shape&) = default;

 private:
  std::vector<std::size_t> dims_;
};

class DenseTensor {
 public:
  DenseTensor() = default;
  explicit DenseTensor(Shape shape)
      : shape_(std::move(shape)), values_(shape_.size(), 0.0) {}
  DenseTensor(Shape shape, std::vector<double> values)
      : shape_(std::move(shape)), values_(std::move(values)) {
    detail::require(values_.size() == shape_.size(),
                    "value count does not match shape " + shape_.to_string());
    for (double v : values_) {
      detail::require(std::isfinite(v), "tensor values must be finite");
    }
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t order() const noexcept { return shape_.order(); }
  std::size_t size() const noexcept { return values_.size(); }

  std::span<const double> values() const noexcept { return values_; }
  std::span<double> values() noexcept { return values_; }

  const double& operator[](std::size_t flat) const { return values_[flat]; }
  double& operator[](std::size_t flat) { return values_[flat]; }

  double at(std::span<const std::size_t> index) const {
    return values_[shape_.flat_index(index)];
  }
  double& at(std::span<const std::size_t> index) {
    return values_[shape_.flat_index(index)];
  }
  double at(std::initializer_list<std::size_t> index) const {
    return at(std::span<const std::size_t>(index.begin(), index.size()));
  }
  double& at(std::initializer_list<std::size_t> index) {
    return at(std::span<const std::size_t>(index.begin(), index.size()));
  }

  friend bool operator==(const DenseTensor&, const DenseTensor&) = default;

 private:
  Shape shape_;
  std::vector<double> values_;
};

// Partially observed tensor: `data` holds values, `mask` holds 1 where the
// entry is observed and 0 where it is missing. Missing entries of `data` are
// stored as 0 by convention but carry no meaning.
class ObservedTensor {
 public:
  ObservedTensor() = default;
  ObservedTensor(DenseTensor data, DenseTensor mask)
      : data_(std::move(data)), mask_(std::move(mask)) {
    detail::require(data_.shape() == mask_.shape(),
                    "data and mask shapes differ");
    for (double m : mask_.values()) {
      detail::require(m == 0.0 || m == 1.0, "mask entries must be 0 or 1");
    }
  }

  static ObservedTensor fully_observed(DenseTensor data) {
    DenseTensor mask(data.shape());
    for (double& m : mask.values()) m = 1.0;
    return ObservedTensor(std::move(data), std::move(mask));
  }

  const DenseTensor& data() const noexcept { return data_; }
  const DenseTensor& mask() const noexcept { return mask_; }
  const Shape& shape() const noexcept { return data_.shape(); }

  bool observed(std::size_t flat) const { return mask_[flat] == 1.0; }

  std::size_t observed_count() const {
    std::size_t c = 0;
    for (double m : mask_.values()) c += m == 1.0;
    return c;
  }

  double missing_ratio() const {
    return 1.0 - static_cast<double>(observed_count()) /
                     static_cast<double>(mask_.size());
  }

 private:
  DenseTensor data_;
  DenseTensor mask_;
};

namespace detail {

inline void require_mode(const Shape& shape, std::size_t mode) {
  require(mode < shape.order(),
          "mode " + std::to_string(mode) + " invalid for order-" +
              std::to_string(shape.order()) + " tensor");
}

}  // namespace detail

// Mode-`mode` unfolding; see the file comment for the column ordering.
inline Eigen::MatrixXd matricize(const DenseTensor& t, std::size_t mode) {
  const Shape& s = t.shape();
  detail::require_mode(s, mode);
  const std::size_t n = s[mode];
  const std::size_t left = s.left_of(mode);
  const std::size_t right = s.right_of(mode);
  Eigen::MatrixXd m(static_cast<Eigen::Index>(n),
                    static_cast<Eigen::Index>(left * right));
  for (std::size_t l = 0; l < left; ++l) {
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t base = (l * n + i) * right;
      for (std::size_t r = 0; r < right; ++r) {
        m(static_cast<Eigen::Index>(i),
          static_cast<Eigen::Index>(l * right + r)) = t[base + r];
      }
    }
  }
  return m;
}

inline DenseTensor fold(const Eigen::MatrixXd& m, std::size_t mode,
                        const Shape& shape) {
  detail::require_mode(shape, mode);
  const std::size_t n = shape[mode];
  const std::size_t left = shape.left_of(mode);
  const std::size_t right = shape.right_of(mode);
  if (static_cast<std::size_t>(m.rows()) != n ||
      static_cast<std::size_t>(m.cols()) != left * right) {
    throw ArgumentError("cannot fold " + std::to_string(m.rows()) + "x" +
                        std::to_string(m.cols()) + " matrix into shape " +
                        shape.to_string() + " along mode " +
                        std::to_string(mode));
  }
  std::vector<double> values(shape.size());
  for (std::size_t l = 0; l < left; ++l) {
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t base = (l * n + i) * right;
      for (std::size_t r = 0; r < right; ++r) {
        values[base + r] = m(static_cast<Eigen::Index>(i),
                             static_cast<Eigen::Index>(l * right + r));
      }
    }
  }
  return DenseTensor(shape, std::move(values));
}

// t x_mode u, with u of size J x extent(mode):
//   result[.., j, ..] = sum_i u(j, i) * t[.., i, ..]
inline DenseTensor mode_product(const DenseTensor& t, const Eigen::MatrixXd& u,
                                std::size_t mode) {
  const Shape& s = t.shape();
  detail::require_mode(s, mode);
  const std::size_t n = s[mode];
  if (static_cast<std::size_t>(u.cols()) != n) {
    throw ArgumentError("mode product: matrix has " + std::to_string(u.cols()) +
                        " columns, tensor extent along mode " +
                        std::to_string(mode) + " is " + std::to_string(n));
  }
  const std::size_t j_out = static_cast<std::size_t>(u.rows());
  const std::size_t left = s.left_of(mode);
  const std::size_t right = s.right_of(mode);
  Shape out_shape = s.with_extent(mode, j_out);
  DenseTensor out(out_shape);
  for (std::size_t l = 0; l < left; ++l) {
    for (std::size_t j = 0; j < j_out; ++j) {
      double* dst = &out[(l * j_out + j) * right];
      for (std::size_t i = 0; i < n; ++i) {
        const double w =
            u(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i));
        if (w == 0.0) continue;
        const double* src = &t[(l * n + i) * right];
        for (std::size_t r = 0; r < right; ++r) dst[r] += w * src[r];
      }
    }
  }
  return out;
}

inline double frobenius_norm(const DenseTensor& t) {
  double ss = 0.0;
  for (double v : t.values()) ss += v * v;
  return std::sqrt(ss);
}

// Entry counts needed to pin down an order-n tensor with all extents I and
// all Tucker ranks r, under three models: the Tucker model itself, a rank-r
// matrix after unfolding, and independent rank-r slices.
struct DofCounts {
  std::int64_t tucker = 0;
  std::int64_t unfolded = 0;
  std::int64_t slices = 0;
};

inline DofCounts dof_counts(std::int64_t extent, std::int64_t order,
                            std::int64_t rank) {
  detail::require(order >= 2, "dof_counts needs order >= 2");
  detail::require(rank >= 1, "dof_counts needs rank >= 1");
  detail::require(rank <= extent, "rank exceeds extent");
  auto ipow = [](std::int64_t b, std::int64_t e) {
    std::int64_t p = 1;
    for (std::int64_t i = 0; i < e; ++i) {
      if (p > std::numeric_limits<std::int64_t>::max() / b) {
        throw ArgumentError("dof_counts overflow");
      }
      p *= b;
    }
    return p;
  };
  const std::int64_t I = extent, n = order, r = rank;
  DofCounts c;
  c.tucker = ipow(r, n) + n * (r * I - r * r);
  c.unfolded = (I + ipow(I, n - 1) - r) * r;
  c.slices = ipow(I, n - 2) * (2 * r * I - r * r);
  return c;
}

}  // namespace pipesel
