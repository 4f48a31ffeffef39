#include "nsgen/data.hpp"
#include "nsgen/io.hpp"

#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <random>

using namespace nsgen;

namespace {

std::filesystem::path scratch(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("nsgen_unit_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

FlowField<double> noisy(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d(0.0, 1.0);
  auto f = FlowField<double>::zeros(GridSpec::square(n));
  for (auto* g : {&f.u, &f.v, &f.p})
    for (Eigen::Index k = 0; k < g->size(); ++k) g->data()[k] = d(rng);
  return f;
}

bool bit_equal(const Grid2D<double>& a, const Grid2D<double>& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::memcmp(a.data(), b.data(), sizeof(double) * a.size()) == 0;
}

}  // namespace

TEST_CASE("NSF1 f64 round trip is bit-exact") {
  const auto f = noisy(16, 1);
  const std::string bytes = encode_nsf1(to_nsf1(f));
  CHECK(bytes.size() == 17 + 3 * 16 * 16 * 8);
  CHECK(bytes.substr(0, 4) == "NSF1");
  const auto g = field_from_nsf1(decode_nsf1(bytes));
  CHECK(bit_equal(f.u, g.u));
  CHECK(bit_equal(f.v, g.v));
  CHECK(bit_equal(f.p, g.p));
  CHECK(encode_nsf1(to_nsf1(g)) == bytes);
}

TEST_CASE("NSF1 f32 round trip is exact after the first rounding") {
  const auto f = noisy(8, 2);
  const std::string once = encode_nsf1(to_nsf1(f, Dtype::f32));
  CHECK(once.size() == 17 + 3 * 8 * 8 * 4);
  const auto g = field_from_nsf1(decode_nsf1(once));
  CHECK(encode_nsf1(to_nsf1(g, Dtype::f32)) == once);
  CHECK(g.u(3, 4) == static_cast<double>(static_cast<float>(f.u(3, 4))));
}

TEST_CASE("NSF1 header layout") {
  Nsf1 d;
  d.nx = 4;
  d.ny = 2;
  d.dtype = Dtype::f32;
  d.channels.push_back(Grid2D<double>::Constant(2, 4, 1.5));
  const std::string b = encode_nsf1(d);
  std::uint32_t nx, ny, ch;
  std::memcpy(&nx, b.data() + 4, 4);
  std::memcpy(&ny, b.data() + 8, 4);
  std::memcpy(&ch, b.data() + 12, 4);
  CHECK(nx == 4);
  CHECK(ny == 2);
  CHECK(ch == 1);
  CHECK(static_cast<int>(b[16]) == 0);
  float first;
  std::memcpy(&first, b.data() + 17, 4);
  CHECK(first == 1.5f);
}

TEST_CASE("malformed NSF1 input is rejected") {
  const std::string good = encode_nsf1(to_nsf1(noisy(8, 3)));
  std::string bad = good;
  bad[0] = 'X';
  CHECK_THROWS_AS(decode_nsf1(bad), FormatError);
  CHECK_THROWS_AS(decode_nsf1(good.substr(0, good.size() - 1)), FormatError);
  CHECK_THROWS_AS(decode_nsf1("NSF"), FormatError);
  std::string dt = good;
  dt[16] = 7;
  CHECK_THROWS_AS(decode_nsf1(dt), FormatError);
}

TEST_CASE("base64 round trip") {
  CHECK(base64_encode("") == "");
  CHECK(base64_encode("f") == "Zg==");
  CHECK(base64_encode("fo") == "Zm8=");
  CHECK(base64_encode("foobar") == "Zm9vYmFy");
  std::string all;
  for (int c = 0; c < 256; ++c) all.push_back(static_cast<char>(c));
  CHECK(base64_decode(base64_encode(all)) == all);
}

TEST_CASE("field sidecar keeps the boundary spec and shapes") {
  const auto dir = scratch("field");
  const auto f = noisy(16, 4);
  const BoundarySpec bc = internal_bc(0.2, 0.1);
  const std::vector<Shape> shapes{Rect{4, 5, 3, 2}, Circle{10.0, 9.0, 2.5}};
  save_field(dir / "f.nsf1", f, bc, shapes);
  const auto g = load_field(dir / "f.nsf1");
  CHECK(bit_equal(f.p, g.p));
  const auto side = nlohmann::json::parse(read_file(dir / "f.nsf1.json"));
  CHECK(boundary_spec_from_json(side.at("bc")).inlet->v0 == 0.1);
  const auto back = shapes_from_json(side.at("shapes"));
  REQUIRE(back.size() == 2);
  CHECK(back == shapes);
  CHECK(std::get<Rect>(back[0]).width == 3);
  CHECK(std::get<Circle>(back[1]).radius == 2.5);
  std::filesystem::remove_all(dir);
}

TEST_CASE("boundary spec JSON round trip") {
  const BoundarySpec a = cavity_bc(0.4, 0.25, 0.5);
  const BoundarySpec b = boundary_spec_from_json(to_json(a));
  CHECK(b.problem == Problem::cavity);
  CHECK(b.lid->velocity == 0.4);
  CHECK(b.lid->start_fraction == 0.25);
  CHECK(b.lid->extent_fraction == 0.5);
  CHECK(b.pressure_pin == a.pressure_pin);
  CHECK(to_json(b) == to_json(a));
}

TEST_CASE("loss digests are stable and order sensitive") {
  CHECK(digest_series({1.0, 2.0}) == digest_series({1.0, 2.0}));
  CHECK(digest_series({1.0, 2.0}) != digest_series({2.0, 1.0}));
  CHECK(digest_series({}).size() == 16);
}
