// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace dda {

/// Dense row-major float32 array. Most of the code base only uses rank 1
/// (vectors) and rank 2 ([rows x cols]) tensors.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape, float fill = 0.0f);
  Tensor(std::vector<std::size_t> shape, std::vector<float> data);

  static Tensor matrix(std::size_t rows, std::size_t cols,
                       std::initializer_list<float> values);
  static Tensor vector(std::initializer_list<float> values);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  /// Leading extent; 0 for a rank-0 tensor.
  std::size_t rows() const { return shape_.empty() ? 0 : shape_[0]; }
  /// Product of the trailing extents (1 for a vector).
  std::size_t cols() const { return cols_; }

  float& operator()(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  float operator()(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }
  float& operator[](std::size_t i) { return data_[i]; }
  float operator[](std::size_t i) const { return data_[i]; }

  std::span<float> data() { return data_; }
  std::span<const float> data() const { return data_; }
  std::span<const float> row(std::size_t r) const;
  std::span<float> row(std::size_t r);

  bool all_finite() const;
  void fill(float value);

  /// Value equality (no NaNs are ever stored, so this is well defined).
  bool operator==(const Tensor& other) const = default;

  std::string shape_string() const;

 private:
  std::vector<std::size_t> shape_;
  std::size_t cols_ = 1;
  std::vector<float> data_;
};

/// Bit-for-bit comparison; distinguishes +0 and -0.
bool bitwise_equal(const Tensor& a, const Tensor& b);
bool bitwise_equal(std::span<const float> a, std::span<const float> b);

/// Gathers rows `indices` of a rank-2 tensor.
Tensor gather_rows(const Tensor& source, std::span<const std::size_t> indices);

}  // namespace dda
