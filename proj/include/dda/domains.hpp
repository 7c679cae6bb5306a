// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "dda/tensor.hpp"

namespace dda {

struct DomainDataset {
  Tensor features;                        // [n x d]
  std::optional<std::vector<int>> labels;  // [n] class indices
  std::uint16_t domain_id = 0;
  double angle_deg = 0.0;

  std::size_t size() const { return features.rows(); }
  std::size_t dim() const { return features.cols(); }
  bool labeled() const { return labels.has_value(); }
  /// 1 + largest label (0 when unlabeled).
  std::size_t num_classes() const;

  DomainDataset subset(std::span<const std::size_t> indices) const;
  /// Same data with labels dropped.
  DomainDataset unlabeled() const;
};

/// Centre of the noise-free two-moons cloud; rotations pivot here.
inline constexpr double kMoonsCentroidX = 0.5;
inline constexpr double kMoonsCentroidY = 0.25;

/// Two interleaved half circles (n/2 per class), Gaussian noise, then a
/// counter-clockwise rotation by `angle_deg` about the cloud centroid.
DomainDataset make_rotated_moons(double angle_deg, std::size_t n, double noise_sd,
                                 std::uint64_t seed, std::uint16_t domain_id = 0);

/// Three isotropic Gaussian blobs on a circle of radius `spread`, rotated
/// about the origin. n must be divisible by 3.
DomainDataset make_rotated_blobs(double angle_deg, std::size_t n, double noise_sd,
                                 std::uint64_t seed, std::uint16_t domain_id = 0,
                                 double spread = 2.0);

/// Rotates 2-D points about (cx, cy).
Tensor rotate_points(const Tensor& points, double angle_deg, double cx, double cy);

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
  std::vector<std::size_t> test;
};

/// Stratified split. `fractions` are (train[, validation[, test]]) and sum
/// to 1. Unlabeled data is treated as a single class.
Split split(const DomainDataset& dataset, std::span<const double> fractions, std::uint64_t seed);

/// Rows for training step `step`: a fresh seeded permutation per epoch,
/// consumed batch_size rows at a time with wraparound into the next epoch.
std::vector<std::size_t> batch_indices(std::size_t n, std::size_t batch_size,
                                       std::uint64_t seed, std::uint64_t step);
Tensor batch_iter(const DomainDataset& dataset, std::size_t batch_size, std::uint64_t seed,
                  std::uint64_t step);

/// batch_indices with the epoch permutations cached.
class BatchSampler {
 public:
  BatchSampler(std::size_t n, std::size_t batch_size, std::uint64_t seed);
  std::vector<std::size_t> indices(std::uint64_t step);
  Tensor batch(const Tensor& features, std::uint64_t step);

 private:
  const std::vector<std::size_t>& epoch(std::uint64_t e);

  std::size_t n_;
  std::size_t batch_size_;
  std::uint64_t seed_;
  std::map<std::uint64_t, std::vector<std::size_t>> epochs_;
};

/// Parse error carrying the 1-based line number.
class CsvError : public std::runtime_error {
 public:
  CsvError(std::size_t line, const std::string& message);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Header `f0,...,f{d-1}[,label]`, one sample per row.
DomainDataset load_csv(const std::filesystem::path& path);
void save_csv(const DomainDataset& dataset, const std::filesystem::path& path);

}  // namespace dda
