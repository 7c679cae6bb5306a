// SPDX-License-Identifier: Apache-2.0
#include "dda/domains.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>

#include "dda/errors.hpp"
#include "dda/rng.hpp"

namespace dda {

std::size_t DomainDataset::num_classes() const {
  if (!labels || labels->empty()) return 0;
  return static_cast<std::size_t>(*std::max_element(labels->begin(), labels->end())) + 1;
}

DomainDataset DomainDataset::subset(std::span<const std::size_t> indices) const {
  DomainDataset out{gather_rows(features, indices), std::nullopt, domain_id, angle_deg};
  if (labels) {
    std::vector<int> picked;
    picked.reserve(indices.size());
    for (std::size_t i : indices) picked.push_back((*labels)[i]);
    out.labels = std::move(picked);
  }
  return out;
}

DomainDataset DomainDataset::unlabeled() const {
  return {features, std::nullopt, domain_id, angle_deg};
}

Tensor rotate_points(const Tensor& points, double angle_deg, double cx, double cy) {
  if (points.rank() != 2 || points.cols() != 2) throw ShapeError("rotate_points needs [n x 2]");
  const double a = angle_deg * std::numbers::pi / 180.0;
  const double c = std::cos(a);
  const double s = std::sin(a);
  Tensor out(points.shape());
  for (std::size_t r = 0; r < points.rows(); ++r) {
    const double x = points(r, 0) - cx;
    const double y = points(r, 1) - cy;
    out(r, 0) = static_cast<float>(cx + c * x - s * y);
    out(r, 1) = static_cast<float>(cy + s * x + c * y);
  }
  return out;
}

DomainDataset make_rotated_moons(double angle_deg, std::size_t n, double noise_sd,
                                 std::uint64_t seed, std::uint16_t domain_id) {
  if (n < 2 || n % 2 != 0) throw InputError("two-moons needs an even n >= 2");
  if (!(noise_sd >= 0.0)) throw InputError("noise_sd must be >= 0");
  const std::size_t half = n / 2;
  Rng rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  Tensor base({n, 2});
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < half; ++i) {
    const double t = half > 1 ? std::numbers::pi * static_cast<double>(i) /
                                    static_cast<double>(half - 1)
                              : 0.0;
    // Outer moon (class 0) then inner moon (class 1).
    base(i, 0) = static_cast<float>(std::cos(t));
    base(i, 1) = static_cast<float>(std::sin(t));
    base(half + i, 0) = static_cast<float>(1.0 - std::cos(t));
    base(half + i, 1) = static_cast<float>(0.5 - std::sin(t));
    labels[i] = 0;
    labels[half + i] = 1;
  }
  for (float& v : base.data()) v = static_cast<float>(v + noise_sd * noise(rng));
  return {rotate_points(base, angle_deg, kMoonsCentroidX, kMoonsCentroidY), std::move(labels),
          domain_id, angle_deg};
}

DomainDataset make_rotated_blobs(double angle_deg, std::size_t n, double noise_sd,
                                 std::uint64_t seed, std::uint16_t domain_id, double spread) {
  if (n < 3 || n % 3 != 0) throw InputError("three-blob mixture needs n divisible by 3");
  if (!(noise_sd >= 0.0)) throw InputError("noise_sd must be >= 0");
  Rng rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  Tensor base({n, 2});
  std::vector<int> labels(n);
  const std::size_t per = n / 3;
  for (std::size_t k = 0; k < 3; ++k) {
    const double phi = 2.0 * std::numbers::pi * static_cast<double>(k) / 3.0;
    for (std::size_t i = 0; i < per; ++i) {
      const std::size_t r = k * per + i;
      base(r, 0) = static_cast<float>(spread * std::cos(phi) + noise_sd * noise(rng));
      base(r, 1) = static_cast<float>(spread * std::sin(phi) + noise_sd * noise(rng));
      labels[r] = static_cast<int>(k);
    }
  }
  return {rotate_points(base, angle_deg, 0.0, 0.0), std::move(labels), domain_id, angle_deg};
}

Split split(const DomainDataset& dataset, std::span<const double> fractions, std::uint64_t seed) {
  if (fractions.empty() || fractions.size() > 3) throw InputError("split takes 1 to 3 fractions");
  double sum = 0.0;
  for (double f : fractions) {
    if (!(f > 0.0)) throw InputError("split fractions must be positive");
    sum += f;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw InputError("split fractions must sum to 1");

  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    by_class[dataset.labels ? (*dataset.labels)[i] : 0].push_back(i);
  }
  Split out;
  std::vector<std::size_t>* parts[3] = {&out.train, &out.validation, &out.test};
  for (auto& [cls, members] : by_class) {
    if (members.size() < fractions.size()) {
      throw InputError("class " + std::to_string(cls) + " has only " +
                       std::to_string(members.size()) + " samples");
    }
    Rng rng(derive_seed(seed, "split", static_cast<std::uint64_t>(cls)));
    std::shuffle(members.begin(), members.end(), rng);
    const std::size_t m = members.size();
    std::vector<std::size_t> counts(fractions.size(), 0);
    std::size_t assigned = 0;
    for (std::size_t p = 0; p + 1 < fractions.size(); ++p) {
      counts[p] = std::max<std::size_t>(
          1, static_cast<std::size_t>(std::llround(fractions[p] * static_cast<double>(m))));
      assigned += counts[p];
    }
    // Every part keeps at least one sample per class.
    while (fractions.size() > 1 && assigned + 1 > m) {
      auto biggest = std::max_element(counts.begin(), counts.end() - 1);
      --*biggest;
      --assigned;
    }
    counts.back() = m - assigned;
    std::size_t offset = 0;
    for (std::size_t p = 0; p < fractions.size(); ++p) {
      parts[p]->insert(parts[p]->end(), members.begin() + static_cast<std::ptrdiff_t>(offset),
                       members.begin() + static_cast<std::ptrdiff_t>(offset + counts[p]));
      offset += counts[p];
    }
  }
  for (auto* part : parts) std::sort(part->begin(), part->end());
  return out;
}

namespace {

std::vector<std::size_t> epoch_permutation(std::size_t n, std::uint64_t seed, std::uint64_t e) {
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng(derive_seed(seed, "epoch", e));
  std::shuffle(perm.begin(), perm.end(), rng);
  return perm;
}

}  // namespace

BatchSampler::BatchSampler(std::size_t n, std::size_t batch_size, std::uint64_t seed)
    : n_(n), batch_size_(batch_size), seed_(seed) {
  if (n == 0 || batch_size == 0 || batch_size > n) {
    throw InputError("batch size must be in [1, n]");
  }
}

const std::vector<std::size_t>& BatchSampler::epoch(std::uint64_t e) {
  auto it = epochs_.find(e);
  if (it == epochs_.end()) {
    if (epochs_.size() > 4) epochs_.erase(epochs_.begin());
    it = epochs_.emplace(e, epoch_permutation(n_, seed_, e)).first;
  }
  return it->second;
}

std::vector<std::size_t> BatchSampler::indices(std::uint64_t step) {
  std::vector<std::size_t> out;
  out.reserve(batch_size_);
  const std::uint64_t start = step * batch_size_;
  for (std::uint64_t k = start; k < start + batch_size_; ++k) {
    out.push_back(epoch(k / n_)[k % n_]);
  }
  return out;
}

Tensor BatchSampler::batch(const Tensor& features, std::uint64_t step) {
  return gather_rows(features, indices(step));
}

std::vector<std::size_t> batch_indices(std::size_t n, std::size_t batch_size, std::uint64_t seed,
                                       std::uint64_t step) {
  return BatchSampler(n, batch_size, seed).indices(step);
}

Tensor batch_iter(const DomainDataset& dataset, std::size_t batch_size, std::uint64_t seed,
                  std::uint64_t step) {
  return gather_rows(dataset.features, batch_indices(dataset.size(), batch_size, seed, step));
}

CsvError::CsvError(std::size_t line, const std::string& message)
    : std::runtime_error("line " + std::to_string(line) + ": " + message), line_(line) {}

namespace {

std::vector<std::string> split_cells(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    const auto first = cell.find_first_not_of(" \t\r");
    const auto last = cell.find_last_not_of(" \t\r");
    cells.push_back(first == std::string::npos ? "" : cell.substr(first, last - first + 1));
  }
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

}  // namespace

DomainDataset load_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw CsvError(1, "missing header");
  const auto header = split_cells(line);
  bool has_label = !header.empty() && header.back() == "label";
  const std::size_t dim = header.size() - (has_label ? 1 : 0);
  if (dim == 0) throw CsvError(1, "no feature columns");
  for (std::size_t c = 0; c < dim; ++c) {
    if (header[c] != "f" + std::to_string(c)) {
      throw CsvError(1, "expected column 'f" + std::to_string(c) + "', found '" + header[c] + "'");
    }
  }

  std::vector<float> values;
  std::vector<int> labels;
  std::size_t line_no = 1;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto cells = split_cells(line);
    if (cells.size() != header.size()) {
      throw CsvError(line_no, "expected " + std::to_string(header.size()) + " cells, found " +
                                  std::to_string(cells.size()));
    }
    for (std::size_t c = 0; c < dim; ++c) {
      float v = 0.0f;
      const auto& s = cells[c];
      auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
      if (ec != std::errc() || ptr != s.data() + s.size()) {
        throw CsvError(line_no, "not a number: '" + s + "'");
      }
      if (!std::isfinite(v)) throw CsvError(line_no, "non-finite value '" + s + "'");
      values.push_back(v);
    }
    if (has_label) {
      int y = 0;
      const auto& s = cells.back();
      auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), y);
      if (ec != std::errc() || ptr != s.data() + s.size() || y < 0) {
        throw CsvError(line_no, "bad label '" + s + "'");
      }
      labels.push_back(y);
    }
    ++rows;
  }

  DomainDataset out{Tensor({rows, dim}, std::move(values)), std::nullopt, 0, 0.0};
  if (has_label) {
    std::vector<bool> seen(rows == 0 ? 0 : static_cast<std::size_t>(
                                               *std::max_element(labels.begin(), labels.end())) + 1);
    for (int y : labels) seen[static_cast<std::size_t>(y)] = true;
    if (std::find(seen.begin(), seen.end(), false) != seen.end()) {
      throw CsvError(line_no, "label set has gaps; every class needs at least one sample");
    }
    out.labels = std::move(labels);
  }
  return out;
}

void save_csv(const DomainDataset& dataset, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (std::size_t c = 0; c < dataset.dim(); ++c) out << (c ? "," : "") << 'f' << c;
  if (dataset.labeled()) out << ",label";
  out << '\n';
  char buf[32];
  for (std::size_t r = 0; r < dataset.size(); ++r) {
    for (std::size_t c = 0; c < dataset.dim(); ++c) {
      auto res = std::to_chars(buf, buf + sizeof(buf), dataset.features(r, c));
      out << (c ? "," : "") << std::string_view(buf, static_cast<std::size_t>(res.ptr - buf));
    }
    if (dataset.labeled()) out << ',' << (*dataset.labels)[r];
    out << '\n';
  }
}

}  // namespace dda
