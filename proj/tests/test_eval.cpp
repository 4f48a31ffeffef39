#include "nsgen/data.hpp"
#include "nsgen/evaluation.hpp"

#include <doctest.h>

#include <filesystem>
#include <random>

using namespace nsgen;

namespace {

std::filesystem::path scratch(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("nsgen_unit_" + name);
  std::filesystem::remove_all(p);
  return p;
}

Checkpoint small_checkpoint(int a) {
  ModelConfig c;
  c.input_size = a;
  c.base_width = 4;
  c.seed = 5;
  Checkpoint ck{UNet<float>(c), {}};
  ck.meta.stage = "A0";
  ck.meta.input_recipe = kBcOnly;
  ck.meta.ranges = {{"u0", {0.0, 0.5}}};
  return ck;
}

}  // namespace

TEST_CASE("rmse of identical fields is zero and of an offset is the offset") {
  auto f = FlowField<double>::zeros(GridSpec::square(16));
  f.u.setConstant(0.3);
  auto g = f;
  CHECK(rmse(f, g).u == 0.0);
  g.u.array() += 0.25;
  g.v.array() -= 0.5;
  const ChannelRmse r = rmse(f, g);
  CHECK(r.u == doctest::Approx(0.25).epsilon(1e-14));
  CHECK(r.v == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(r.p == 0.0);
}

TEST_CASE("rmse skips solid nodes") {
  const GridSpec grid = GridSpec::square(16);
  const GeometryMask m = rasterize_obstacles({Rect{5, 5, 4, 4}}, grid);
  auto f = FlowField<double>::zeros(grid);
  auto g = f;
  for (int j = 0; j < 16; ++j)
    for (int i = 0; i < 16; ++i)
      if (m.mask(j, i)) g.u(j, i) = 100.0;
  CHECK(rmse(f, g, &m).u == 0.0);
  CHECK(rmse(f, g).u > 1.0);
}

TEST_CASE("reference cases") {
  CHECK(reference_cases("A0").at(0).bc.lid->velocity == 0.5);
  CHECK(reference_cases("A").at(0).bc.lid->extent_fraction == 0.5);
  const auto b2 = reference_cases("B2").at(0);
  REQUIRE(b2.shapes.size() == 1);
  CHECK(std::holds_alternative<Rect>(b2.shapes[0]));
  const auto b3a = reference_cases("B3"), b3b = reference_cases("B3");
  REQUIRE(b3a.at(0).shapes.size() == 3);
  CHECK(b3a.at(0).shapes == b3b.at(0).shapes);
  CHECK(reference_rmse("A0").u == 0.0381);
  CHECK(reference_rmse("B3").p == 0.2908);
}

TEST_CASE("stage mean is the arithmetic mean over cases") {
  const Checkpoint ck = small_checkpoint(16);
  const std::vector<EvalCase> cases{{"slow", cavity_bc(0.1), {}}, {"fast", cavity_bc(0.4), {}}};
  TruthCache cache;
  const EvalReport r = evaluate_stage(ck, cases, &cache);
  REQUIRE(r.cases.size() == 2);
  CHECK(r.cases_used == 2);
  CHECK(r.cases[0].oracle_converged);
  CHECK(r.mean.u == doctest::Approx((r.cases[0].rmse.u + r.cases[1].rmse.u) / 2).epsilon(1e-15));
  CHECK(r.mean.p == doctest::Approx((r.cases[0].rmse.p + r.cases[1].rmse.p) / 2).epsilon(1e-15));
  const EvalReport again = evaluate_stage(ck, cases, &cache);
  CHECK(cache.hits() == 2);
  CHECK(again.mean.u == r.mean.u);
  const auto j = to_json(r);
  CHECK(j.at("cases").size() == 2);
}

TEST_CASE("truth cache persists to disk") {
  const auto dir = scratch("truth");
  const EvalCase c{"c", cavity_bc(0.3), {}};
  const GridSpec g = GridSpec::square(16);
  TruthCache first(dir);
  const auto a = first.get(c, g);
  TruthCache second(dir);
  const auto b = second.get(c, g);
  CHECK(a.converged == b.converged);
  CHECK(a.steps == b.steps);
  CHECK((a.field.u - b.field.u).abs().maxCoeff() == 0.0);
  CHECK(TruthCache::key(c, g) != TruthCache::key({"c", cavity_bc(0.31), {}}, g));
  std::filesystem::remove_all(dir);
}

TEST_CASE("centerline profile of a mirror-symmetric field") {
  const int n = 64;
  auto f = FlowField<double>::zeros(GridSpec::square(n));
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) {
      const double d = i - (n - 1) / 2.0;
      f.u(j, i) = d * d + j;
      f.v(j, i) = d;
    }
  const ProfileTable t = extract_profile(f, {ProfileKind::centerline, 0});
  REQUIRE(t.u.size() == static_cast<std::size_t>(n));
  for (int j = 0; j < n; ++j) {
    CHECK(t.u[j] == doctest::Approx(0.25 + j));
    CHECK(t.v[j] == 0.0);
    CHECK(t.coordinate[j] == doctest::Approx(j * f.grid.h));
  }
}

TEST_CASE("row and outlet profiles") {
  auto f = FlowField<double>::zeros(GridSpec::square(64));
  for (int j = 0; j < 64; ++j)
    for (int i = 0; i < 64; ++i) f.u(j, i) = 100.0 * j + i;
  const ProfileTable row = extract_profile(f, {ProfileKind::row, 40});
  REQUIRE(row.u.size() == 64);
  CHECK(row.u[5] == 4005.0);
  const ProfileTable out = extract_profile(f, {ProfileKind::outlet, 0});
  CHECK(out.u[7] == 763.0);
  CHECK_THROWS_AS(extract_profile(f, {ProfileKind::row, 64}), std::out_of_range);
  CHECK_THROWS_AS(extract_profile(f, {ProfileKind::row, -1}), std::out_of_range);
  const std::string csv = profiles_csv(f, {{ProfileKind::row, 40}});
  CHECK(csv.rfind("line,coordinate,u,v\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 65);
}

TEST_CASE("latency benchmark needs at least 30 runs") {
  ModelConfig c;
  c.input_size = 16;
  c.base_width = 4;
  const UNet<float> m(c);
  CHECK_THROWS_AS(benchmark_latency(m, 29), std::invalid_argument);
  const LatencyStats s = benchmark_latency(m, 30);
  CHECK(s.runs == 30);
  CHECK(s.min_ms <= s.median_ms);
  CHECK(s.median_ms <= s.p95_ms);
  CHECK(s.p95_ms <= s.max_ms);
  CHECK(s.input_size == 16);
}
