#include "nsgen/data.hpp"

#include "nsgen/io.hpp"
#include "nsgen/solver.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

namespace nsgen {

using json = nlohmann::json;

double Rng::uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

int Rng::integer(int lo, int hi) {
  const auto span = static_cast<std::uint64_t>(hi - lo + 1);
  return lo + static_cast<int>(engine_() % span);
}

StageData stage_data(const std::string& stage) {
  if (stage == "A0") return {"A0", "cavity", kPrerun, 32, 3, 0, 0, false, false};
  if (stage == "A") return {"A", "cavity", kBcOnly, 32, 3, 0, 0, false, true};
  if (stage == "B0") return {"B0", "internal", kCoarse, 32, 3, 0, 0, false, false};
  if (stage == "B1") return {"B1", "internal", kCoarse, 32, 4, 1, 1, false, false};
  if (stage == "B2") return {"B2", "internal", kCoarse, 64, 4, 1, 1, false, false};
  if (stage == "B3") return {"B3", "internal", kBcOnly, 64, 4, 1, 3, true, false};
  throw std::invalid_argument("unknown stage '" + stage + "' (expected A0, A, B0, B1, B2 or B3)");
}

InputTensor make_input(const std::string& recipe, const BoundarySpec& bc,
                       const std::vector<Shape>& shapes, int grid_size, int channels) {
  const GridSpec grid = GridSpec::square(grid_size);
  GeometryMask mask;
  const GeometryMask* mp = nullptr;
  if (!shapes.empty() || channels == 4) {
    mask = rasterize_obstacles(shapes, grid);
    mp = &mask;
  }
  FlowField<double> interior;
  if (recipe == kPrerun) {
    interior = prerun(bc, grid, 20, mp);
  } else if (recipe == kCoarse) {
    interior = interpolate_field(coarse_solution(bc, 8), grid);
  } else if (recipe == kBcOnly) {
    interior = FlowField<double>::zeros(grid);
  } else {
    throw std::invalid_argument("unknown input recipe '" + recipe + "'");
  }
  return embed_boundary_conditions(bc, grid, interior, mp, channels == 4);
}

int DatasetManifest::train_count() const {
  return static_cast<int>(
      std::count_if(samples.begin(), samples.end(), [](const auto& s) { return s.split == "train"; }));
}

int train_split_size(int n) { return n * 8 / 10; }

json to_json(const DatasetManifest& m) {
  json samples = json::array();
  for (const auto& s : m.samples)
    samples.push_back({{"id", s.id},
                       {"file", s.file},
                       {"split", s.split},
                       {"bc", to_json(s.bc)},
                       {"shapes", shapes_to_json(s.shapes)}});
  return {{"stage", m.stage},         {"problem", m.problem},   {"recipe", m.recipe},
          {"grid_size", m.grid_size}, {"channels", m.channels}, {"seed", m.seed},
          {"count", m.count()},       {"train_count", m.train_count()},
          {"events", m.events},       {"samples", samples}};
}

DatasetManifest manifest_from_json(const json& j) {
  DatasetManifest m;
  m.stage = j.value("stage", std::string());
  m.problem = j.at("problem").get<std::string>();
  m.recipe = j.at("recipe").get<std::string>();
  m.grid_size = j.at("grid_size").get<int>();
  m.channels = j.at("channels").get<int>();
  m.seed = j.at("seed").get<std::uint64_t>();
  m.events = j.value("events", std::vector<std::string>{});
  for (const auto& s : j.at("samples")) {
    SampleEntry e;
    e.id = s.at("id").get<int>();
    e.file = s.at("file").get<std::string>();
    e.split = s.at("split").get<std::string>();
    e.bc = boundary_spec_from_json(s.at("bc"));
    e.shapes = shapes_from_json(s.at("shapes"));
    m.samples.push_back(std::move(e));
  }
  return m;
}

std::vector<Shape> sample_obstacles(Rng& rng, const GridSpec& grid, int count, bool circles) {
  // Size ranges are set for 64 x 64 and scale with the grid.
  const double scale = (grid.nx - 1) / 63.0;
  std::vector<Shape> out;
  for (int k = 0; k < count; ++k) {
    bool placed = false;
    for (int attempt = 0; attempt < 100 && !placed; ++attempt) {
      Shape s;
      if (circles && rng.uniform() < 0.5) {
        const double r = rng.uniform(3.0, 8.0) * scale;
        s = Circle{rng.uniform(1.0 + r, grid.nx - 2.0 - r), rng.uniform(1.0 + r, grid.ny - 2.0 - r),
                   r};
      } else {
        const int lo = std::max(2, static_cast<int>(std::lround(4 * scale)));
        const int hi = std::max(lo, static_cast<int>(std::lround(12 * scale)));
        const double w = rng.integer(lo, hi) - 1;
        const double h = rng.integer(lo, hi) - 1;
        s = Rect{static_cast<double>(rng.integer(1, std::max(1, grid.nx - 2 - static_cast<int>(w)))),
                 static_cast<double>(rng.integer(1, std::max(1, grid.ny - 2 - static_cast<int>(h)))),
                 w, h};
      }
      try {
        validate_shape(s, grid);
        out.push_back(s);
        placed = true;
      } catch (const ShapeError&) {
      }
    }
    if (!placed) throw ShapeError("could not place an interior obstacle after 100 attempts");
  }
  return out;
}

namespace {

std::string sample_name(int id) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "sample_%05d.nsf1", id);
  return buf;
}

void assign_splits(DatasetManifest& m, Rng& rng) {
  std::vector<int> order(m.samples.size());
  std::iota(order.begin(), order.end(), 0);
  for (int i = static_cast<int>(order.size()) - 1; i > 0; --i)
    std::swap(order[i], order[rng.integer(0, i)]);
  const int n_train = train_split_size(m.count());
  for (int k = 0; k < m.count(); ++k) m.samples[order[k]].split = k < n_train ? "train" : "test";
}

using Draw = std::function<SampleEntry(Rng&)>;

DatasetManifest generate(const StageData& sd, int n, std::uint64_t seed,
                         const std::filesystem::path& out, const Draw& draw,
                         const ProgressCallback& progress) {
  if (n < 1) throw std::invalid_argument("dataset size must be >= 1");
  DatasetManifest m;
  m.stage = sd.stage;
  m.problem = sd.problem;
  m.recipe = sd.recipe;
  m.grid_size = sd.grid_size;
  m.channels = sd.channels;
  m.seed = seed;
  Rng rng(seed);
  std::filesystem::create_directories(out);
  for (int id = 0; id < n; ++id) {
    for (int attempt = 0;; ++attempt) {
      SampleEntry e = draw(rng);
      try {
        const InputTensor in = make_input(sd.recipe, e.bc, e.shapes, sd.grid_size, sd.channels);
        e.id = id;
        e.file = sample_name(id);
        write_file(out / e.file, encode_nsf1({sd.grid_size, sd.grid_size, Dtype::f64, in.channels}));
        m.samples.push_back(std::move(e));
        break;
      } catch (const DivergenceError& err) {
        m.events.push_back("sample " + std::to_string(id) + " resampled: " + err.what());
        if (attempt >= 100) throw;
      }
    }
    if (progress) progress(id + 1, n);
  }
  assign_splits(m, rng);
  write_manifest(out, m);
  return m;
}

}  // namespace

DatasetManifest gen_prerun_dataset(int n, std::uint64_t seed, const std::filesystem::path& out,
                                   int grid_size, const ProgressCallback& progress) {
  StageData sd = stage_data("A0");
  sd.grid_size = grid_size;
  return generate(sd, n, seed, out,
                  [](Rng& r) {
                    SampleEntry e;
                    e.bc = cavity_bc(r.uniform(0.0, 0.5));
                    return e;
                  },
                  progress);
}

DatasetManifest gen_coarse_dataset(int n, int target_size, std::uint64_t seed,
                                   const std::filesystem::path& out, const std::string& stage,
                                   const ProgressCallback& progress) {
  if (target_size != 32 && target_size != 64)
    throw std::invalid_argument("coarse dataset target size must be 32 or 64");
  StageData sd = stage_data(stage);
  if (sd.recipe != kCoarse) throw std::invalid_argument("stage " + stage + " is not a coarse-input stage");
  sd.grid_size = target_size;
  const GridSpec grid = GridSpec::square(target_size);
  return generate(sd, n, seed, out,
                  [&sd, grid](Rng& r) {
                    SampleEntry e;
                    const double u0 = r.uniform(0.0, 0.5);
                    const double v0 = r.uniform(0.0, 0.5);
                    e.bc = internal_bc(u0, v0);
                    const int count = r.integer(sd.min_obstacles, sd.max_obstacles);
                    if (count > 0) e.shapes = sample_obstacles(r, grid, count, sd.circles);
                    return e;
                  },
                  progress);
}

DatasetManifest gen_bc_only_dataset(const std::string& stage, int n, std::uint64_t seed,
                                    const std::filesystem::path& out,
                                    const ProgressCallback& progress) {
  if (stage != "A" && stage != "B3")
    throw std::invalid_argument("boundary-only datasets exist for stages A and B3, not " + stage);
  const StageData sd = stage_data(stage);
  const GridSpec grid = GridSpec::square(sd.grid_size);
  return generate(sd, n, seed, out,
                  [&sd, grid](Rng& r) {
                    SampleEntry e;
                    if (sd.problem == "cavity") {
                      const double u0 = r.uniform(0.0, 0.5);
                      const double start = r.uniform(0.0, 0.5);
                      const double extent = r.uniform(0.25, 1.0 - start);
                      e.bc = cavity_bc(u0, start, extent);
                    } else {
                      const double u0 = r.uniform(0.0, 0.5);
                      const double v0 = r.uniform(0.0, 0.5);
                      e.bc = internal_bc(u0, v0);
                      e.shapes = sample_obstacles(r, grid, r.integer(sd.min_obstacles, sd.max_obstacles),
                                                  sd.circles);
                    }
                    return e;
                  },
                  progress);
}

DatasetManifest gen_stage_dataset(const std::string& stage, int n, std::uint64_t seed,
                                  const std::filesystem::path& out,
                                  const ProgressCallback& progress) {
  const StageData sd = stage_data(stage);
  if (sd.recipe == kPrerun) return gen_prerun_dataset(n, seed, out, sd.grid_size, progress);
  if (sd.recipe == kCoarse) return gen_coarse_dataset(n, sd.grid_size, seed, out, stage, progress);
  return gen_bc_only_dataset(stage, n, seed, out, progress);
}

void write_manifest(const std::filesystem::path& dir, const DatasetManifest& m) {
  write_file(dir / "manifest.json", to_json(m).dump(2));
}

Dataset load_dataset(const std::filesystem::path& dir) {
  Dataset d;
  d.manifest = manifest_from_json(json::parse(read_file(dir / "manifest.json")));
  const GridSpec grid = GridSpec::square(d.manifest.grid_size);
  for (const auto& s : d.manifest.samples) {
    const Nsf1 raw = decode_nsf1(read_file(dir / s.file));
    if (raw.nx != grid.nx || static_cast<int>(raw.channels.size()) != d.manifest.channels)
      throw FormatError(s.file + " does not match the manifest shape");
    InputTensor t;
    t.grid = grid;
    t.channels = raw.channels;
    t.bc = s.bc;
    t.shapes = s.shapes;
    d.inputs.push_back(std::move(t));
  }
  return d;
}

}  // namespace nsgen
