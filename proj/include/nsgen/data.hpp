#pragma once

// Training-input generation: pre-run warm-ups, interpolated coarse solutions
// and boundary-only inputs, persisted as NSF1 files plus a JSON manifest.

#include "nsgen/grid.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

namespace nsgen {

/// Uniform draws from mt19937_64 with a fixed bit-to-double mapping, so
/// datasets do not depend on the library's distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  double uniform();                      // [0, 1)
  double uniform(double lo, double hi);  // [lo, hi)
  int integer(int lo, int hi);           // inclusive

 private:
  std::mt19937_64 engine_;
};

/// Input recipes.
inline constexpr const char* kPrerun = "prerun20";
inline constexpr const char* kCoarse = "coarse8";
inline constexpr const char* kBcOnly = "bc-only";

/// Dataset layout of each curriculum stage.
struct StageData {
  std::string stage;
  std::string problem;  // cavity | internal
  std::string recipe;
  int grid_size = 32;
  int channels = 3;
  int min_obstacles = 0;
  int max_obstacles = 0;
  bool circles = false;     // obstacle shapes may be circles
  bool partial_lid = false; // random lid segment
};

StageData stage_data(const std::string& stage);

/// Model input for a recipe: warm-up interior (or zeros) with boundary values
/// embedded, solid nodes zeroed, and a mask channel when channels == 4.
InputTensor make_input(const std::string& recipe, const BoundarySpec& bc,
                       const std::vector<Shape>& shapes, int grid_size, int channels);

struct SampleEntry {
  int id = 0;
  std::string file;
  std::string split;  // train | test
  BoundarySpec bc;
  std::vector<Shape> shapes;
};

struct DatasetManifest {
  std::string stage;
  std::string problem;
  std::string recipe;
  int grid_size = 0;
  int channels = 0;
  std::uint64_t seed = 0;
  std::vector<SampleEntry> samples;
  std::vector<std::string> events;  // resampling log

  int count() const { return static_cast<int>(samples.size()); }
  int train_count() const;
};

nlohmann::json to_json(const DatasetManifest& m);
DatasetManifest manifest_from_json(const nlohmann::json& j);

/// Number of training samples in an 80/20 split of n.
int train_split_size(int n);

using ProgressCallback = std::function<void(int done, int total)>;

/// n cavity samples, U0 ~ U(0, 0.5), input = 20 solver steps from rest.
DatasetManifest gen_prerun_dataset(int n, std::uint64_t seed, const std::filesystem::path& out,
                                   int grid_size = 32, const ProgressCallback& progress = {});

/// n internal-flow samples, (U0, V0) ~ U(0, 0.5)^2, input = 8x8 steady
/// solution interpolated to target_size. `stage` selects obstacle sampling
/// and the mask channel (B0 none, B1/B2 one square).
DatasetManifest gen_coarse_dataset(int n, int target_size, std::uint64_t seed,
                                   const std::filesystem::path& out,
                                   const std::string& stage = "B0",
                                   const ProgressCallback& progress = {});

/// Boundary-only inputs for stage A (random lid segment) or B3 (1-3 random
/// rectangles or circles with a mask channel).
DatasetManifest gen_bc_only_dataset(const std::string& stage, int n, std::uint64_t seed,
                                    const std::filesystem::path& out,
                                    const ProgressCallback& progress = {});

/// Dispatch on the stage id.
DatasetManifest gen_stage_dataset(const std::string& stage, int n, std::uint64_t seed,
                                  const std::filesystem::path& out,
                                  const ProgressCallback& progress = {});

/// Random obstacles strictly inside the ring. Throws ShapeError after 100
/// failed placements.
std::vector<Shape> sample_obstacles(Rng& rng, const GridSpec& grid, int count, bool circles);

struct Dataset {
  DatasetManifest manifest;
  std::vector<InputTensor> inputs;  // indexed like manifest.samples
};

void write_manifest(const std::filesystem::path& dir, const DatasetManifest& m);
Dataset load_dataset(const std::filesystem::path& dir);

}  // namespace nsgen
