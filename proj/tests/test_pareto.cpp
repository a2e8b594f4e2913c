// Copyright 2026 The SmoothNet Authors.
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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "oracles.hpp"
#include "smoothnet/pareto.hpp"

using namespace smoothnet;

namespace {

bool same_points(const std::vector<ParetoPoint>& a,
                 const std::vector<ParetoPoint>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].epsilon != b[i].epsilon || a[i].accuracy != b[i].accuracy) {
      return false;
    }
  }
  return true;
}

}  // namespace

TEST_CASE("a middling point is dominated") {
  const std::vector<ParetoPoint> pts = {{1, 50}, {2, 60}, {3, 55}};
  const auto front = pareto_front(pts);
  REQUIRE(front.size() == 2);
  CHECK(front[0].epsilon == 1.0);
  CHECK(front[0].accuracy == 50.0);
  CHECK(front[1].epsilon == 2.0);
  CHECK(front[1].accuracy == 60.0);
}

TEST_CASE("degenerate inputs") {
  CHECK(pareto_front({}).empty());
  const auto one = pareto_front({{4.5, 0.8}});
  REQUIRE(one.size() == 1);
  CHECK(one[0].epsilon == 4.5);
  CHECK(one[0].accuracy == 0.8);
}

TEST_CASE("equal epsilon keeps only the best accuracy") {
  const auto front = pareto_front({{2, 70}, {2, 90}, {2, 80}});
  REQUIRE(front.size() == 1);
  CHECK(front[0].epsilon == 2.0);
  CHECK(front[0].accuracy == 90.0);
}

TEST_CASE("exact duplicates collapse to one survivor") {
  const auto front = pareto_front({{1, 60}, {1, 60}, {1, 60}});
  REQUIRE(front.size() == 1);
  CHECK(front[0].epsilon == 1.0);
  CHECK(front[0].accuracy == 60.0);
}

TEST_CASE("equal accuracy keeps only the cheapest epsilon") {
  const auto front = pareto_front({{3, 75}, {1, 75}, {2, 75}});
  REQUIRE(front.size() == 1);
  CHECK(front[0].epsilon == 1.0);
  CHECK(front[0].accuracy == 75.0);
}

TEST_CASE("an all-dominating point clears the field") {
  const auto front = pareto_front({{5, 10}, {4, 20}, {1, 99}, {3, 40}});
  REQUIRE(front.size() == 1);
  CHECK(front[0].epsilon == 1.0);
  CHECK(front[0].accuracy == 99.0);
}

TEST_CASE("a strictly improving staircase survives whole") {
  std::vector<ParetoPoint> pts;
  for (int i = 0; i < 10; ++i) {
    pts.push_back({static_cast<double>(i), static_cast<double>(10 * i)});
  }
  const auto front = pareto_front(pts);
  CHECK(same_points(front, pts));
  // Accuracy strictly increases along the returned front.
  for (std::size_t i = 1; i < front.size(); ++i) {
    CHECK(front[i].epsilon > front[i - 1].epsilon);
    CHECK(front[i].accuracy > front[i - 1].accuracy);
  }
}

TEST_CASE("non-finite coordinates are refused") {
  const double inf = std::numeric_limits<double>::infinity();
  const double nan = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(pareto_front({{inf, 1}}), ConfigError);
  CHECK_THROWS_AS(pareto_front({{1, nan}}), ConfigError);
  CHECK_THROWS_AS(pareto_front({{1, 2}, {-inf, 3}}), ConfigError);
}

TEST_CASE("matches the quadratic oracle on random draws") {
  std::mt19937_64 rng(404);
  std::uniform_real_distribution<double> ed(0.1, 20.0);
  std::uniform_real_distribution<double> ad(0.0, 1.0);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<ParetoPoint> pts;
    for (int i = 0; i < 200; ++i) pts.push_back({ed(rng), ad(rng)});
    const auto want = oracles::naive_pareto(pts);
    const auto got = pareto_front(pts);
    CHECK(same_points(got, want));
  }
}

TEST_CASE("front members dominate every input point") {
  std::mt19937_64 rng(405);
  std::uniform_real_distribution<double> ed(0.5, 10.0);
  std::uniform_real_distribution<double> ad(0.0, 100.0);
  std::vector<ParetoPoint> pts;
  for (int i = 0; i < 300; ++i) pts.push_back({ed(rng), ad(rng)});
  const auto front = pareto_front(pts);
  REQUIRE(!front.empty());
  for (const ParetoPoint& p : pts) {
    bool covered = false;
    for (const ParetoPoint& f : front) {
      if (f.epsilon <= p.epsilon && f.accuracy >= p.accuracy) {
        covered = true;
        break;
      }
    }
    CHECK(covered);
  }
}
