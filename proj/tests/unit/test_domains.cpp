// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>

#include "dda/domains.hpp"
#include "dda/errors.hpp"

using namespace dda;

namespace {

double arc_distance(double x, double y, bool upper) {
  if ((upper && y >= 0.0) || (!upper && y <= 0.0)) return std::abs(std::hypot(x, y) - 1.0);
  return std::min(std::hypot(x - 1.0, y), std::hypot(x + 1.0, y));
}

// Label of the closer noise-free moon, for points in the unrotated frame.
int nearest_moon(double x, double y) {
  return arc_distance(x, y, true) <= arc_distance(x - 1.0, y - 0.5, false) ? 0 : 1;
}

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("dda_domains_" + name);
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream(path) << text;
}

}  // namespace

TEST_CASE("unrotated moons have balanced classes") {
  const DomainDataset d = make_rotated_moons(0.0, 200, 0.1, 1);
  CHECK(d.size() == 200);
  CHECK(d.dim() == 2);
  CHECK(std::count(d.labels->begin(), d.labels->end(), 0) == 100);
  CHECK(std::count(d.labels->begin(), d.labels->end(), 1) == 100);
}

TEST_CASE("a full turn reproduces the base cloud") {
  const DomainDataset base = make_rotated_moons(0.0, 100, 0.1, 4);
  const DomainDataset turned = make_rotated_moons(360.0, 100, 0.1, 4);
  for (std::size_t i = 0; i < base.features.size(); ++i)
    CHECK(std::abs(base.features[i] - turned.features[i]) <= 1e-5);
}

TEST_CASE("generation is deterministic per seed") {
  const DomainDataset a = make_rotated_moons(45.0, 60, 0.1, 9);
  const DomainDataset b = make_rotated_moons(45.0, 60, 0.1, 9);
  const DomainDataset c = make_rotated_moons(45.0, 60, 0.1, 10);
  CHECK(bitwise_equal(a.features, b.features));
  CHECK_FALSE(bitwise_equal(a.features, c.features));
}

TEST_CASE("rotated domains keep the rotated labeling function") {
  for (double angle : {30.0, 90.0, 200.0}) {
    const DomainDataset exact = make_rotated_moons(angle, 100, 0.0, 2);
    const Tensor back = rotate_points(exact.features, -angle, kMoonsCentroidX, kMoonsCentroidY);
    for (std::size_t r = 0; r < exact.size(); ++r)
      CHECK(nearest_moon(back(r, 0), back(r, 1)) == (*exact.labels)[r]);

    const DomainDataset noisy = make_rotated_moons(angle, 400, 0.05, 3);
    const Tensor nb = rotate_points(noisy.features, -angle, kMoonsCentroidX, kMoonsCentroidY);
    std::size_t agree = 0;
    for (std::size_t r = 0; r < noisy.size(); ++r)
      agree += nearest_moon(nb(r, 0), nb(r, 1)) == (*noisy.labels)[r] ? 1 : 0;
    CHECK(agree >= 396);
  }
}

TEST_CASE("blobs have three balanced classes") {
  const DomainDataset d = make_rotated_blobs(30.0, 90, 0.2, 1);
  CHECK(d.num_classes() == 3);
  for (int k = 0; k < 3; ++k) CHECK(std::count(d.labels->begin(), d.labels->end(), k) == 30);
  CHECK_THROWS_AS(make_rotated_blobs(0.0, 10, 0.2, 1), InputError);
}

TEST_CASE("split with a single fraction keeps everything in train") {
  const DomainDataset d = make_rotated_moons(0.0, 50, 0.1, 1);
  const std::vector<double> all = {1.0};
  const Split s = split(d, all, 1);
  CHECK(s.train.size() == 50);
  CHECK(s.validation.empty());
  CHECK(s.test.empty());
}

TEST_CASE("stratified 80/10/10 split") {
  const DomainDataset d = make_rotated_moons(0.0, 100, 0.1, 1);
  const std::vector<double> fractions = {0.8, 0.1, 0.1};
  const Split s = split(d, fractions, 7);
  CHECK(s.train.size() == 80);
  CHECK(s.validation.size() == 10);
  CHECK(s.test.size() == 10);
  for (const auto* part : {&s.train, &s.validation, &s.test}) {
    const auto ones = std::count_if(part->begin(), part->end(),
                                    [&](std::size_t i) { return (*d.labels)[i] == 1; });
    CHECK(static_cast<std::size_t>(ones) * 2 == part->size());
  }
  std::set<std::size_t> seen(s.train.begin(), s.train.end());
  seen.insert(s.validation.begin(), s.validation.end());
  seen.insert(s.test.begin(), s.test.end());
  CHECK(seen.size() == 100);

  const Split again = split(d, fractions, 7);
  CHECK(again.train == s.train);
  CHECK(again.validation == s.validation);
  CHECK(again.test == s.test);
}

TEST_CASE("split rejects bad fractions") {
  const DomainDataset d = make_rotated_moons(0.0, 50, 0.1, 1);
  const std::vector<double> bad = {0.5, 0.4};
  CHECK_THROWS_AS(split(d, bad, 1), InputError);
}

TEST_CASE("a full-size batch is one epoch permutation") {
  auto idx = batch_indices(30, 30, 5, 0);
  std::sort(idx.begin(), idx.end());
  std::vector<std::size_t> all(30);
  std::iota(all.begin(), all.end(), std::size_t{0});
  CHECK(idx == all);
}

TEST_CASE("batches cover each epoch once and wrap around") {
  BatchSampler sampler(20, 8, 3);
  std::vector<std::size_t> first_epoch;
  for (std::uint64_t step = 0; step < 3; ++step) {
    const auto idx = sampler.indices(step);
    CHECK(idx.size() == 8);
    first_epoch.insert(first_epoch.end(), idx.begin(), idx.end());
  }
  first_epoch.resize(20);
  std::sort(first_epoch.begin(), first_epoch.end());
  CHECK(std::adjacent_find(first_epoch.begin(), first_epoch.end()) == first_epoch.end());
  CHECK(sampler.indices(7) == batch_indices(20, 8, 3, 7));
}

TEST_CASE("batch_iter gathers the sampled rows") {
  const DomainDataset d = make_rotated_moons(0.0, 40, 0.1, 1);
  const Tensor b = batch_iter(d, 4, 11, 2);
  const auto idx = batch_indices(40, 4, 11, 2);
  for (std::size_t r = 0; r < 4; ++r) CHECK(b(r, 1) == d.features(idx[r], 1));
}

TEST_CASE("CSV with labels") {
  const auto path = temp_file("labeled.csv");
  write_text(path, "f0,f1,label\n0.5,1.5,0\n-1,2,1\n");
  const DomainDataset d = load_csv(path);
  CHECK(d.size() == 2);
  CHECK(d.dim() == 2);
  REQUIRE(d.labeled());
  CHECK(*d.labels == std::vector<int>{0, 1});
  CHECK(d.features(1, 0) == -1.0f);
  std::filesystem::remove(path);
}

TEST_CASE("CSV without labels") {
  const auto path = temp_file("unlabeled.csv");
  write_text(path, "f0,f1\n0.5,1.5\n");
  CHECK_FALSE(load_csv(path).labeled());
  std::filesystem::remove(path);
}

TEST_CASE("malformed CSV row reports its line") {
  const auto path = temp_file("bad.csv");
  write_text(path, "f0,f1,label\n0.5,1.5,0\n0.5,oops,1\n");
  try {
    load_csv(path);
    FAIL("expected a parse error");
  } catch (const CsvError& e) {
    CHECK(e.line() == 3);
  }
  std::filesystem::remove(path);
}

TEST_CASE("CSV round trip of generated moons") {
  const auto path = temp_file("roundtrip.csv");
  const DomainDataset d = make_rotated_moons(30.0, 64, 0.1, 8);
  save_csv(d, path);
  const DomainDataset back = load_csv(path);
  CHECK(bitwise_equal(back.features, d.features));
  CHECK(*back.labels == *d.labels);
  std::filesystem::remove(path);
}
