#pragma once

// NSF1 field files, JSON forms of boundary specs and shapes, and model
// checkpoints.
//
// NSF1 layout (little-endian):
//   "NSF1" | u32 nx | u32 ny | u32 channels | u8 dtype (0 f32, 1 f64)
//   | channels x ny x nx values, channel-major, rows along y.

#include "nsgen/grid.hpp"
#include "nsgen/physics_loss.hpp"
#include "nsgen/unet.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace nsgen {

struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class Dtype : std::uint8_t { f32 = 0, f64 = 1 };

struct Nsf1 {
  int nx = 0;
  int ny = 0;
  Dtype dtype = Dtype::f64;
  std::vector<Grid2D<double>> channels;
};

std::string encode_nsf1(const Nsf1& data);
Nsf1 decode_nsf1(std::string_view bytes);

Nsf1 to_nsf1(const FlowField<double>& f, Dtype dtype = Dtype::f64);
FlowField<double> field_from_nsf1(const Nsf1& data, double domain_length = 1.0);

void write_file(const std::filesystem::path& path, std::string_view bytes);
std::string read_file(const std::filesystem::path& path);

/// Field plus a "<path>.json" sidecar holding grid, boundary spec and shapes.
void save_field(const std::filesystem::path& path, const FlowField<double>& f,
                const BoundarySpec& bc, const std::vector<Shape>& shapes = {},
                Dtype dtype = Dtype::f64);
FlowField<double> load_field(const std::filesystem::path& path);

std::string base64_encode(std::string_view bytes);
std::string base64_decode(std::string_view text);

// JSON forms.
nlohmann::json to_json(const EdgeCondition& c);
EdgeCondition edge_condition_from_json(const nlohmann::json& j);
nlohmann::json to_json(const BoundarySpec& bc);
BoundarySpec boundary_spec_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Shape& s);
Shape shape_from_json(const nlohmann::json& j);
nlohmann::json shapes_to_json(const std::vector<Shape>& shapes);
std::vector<Shape> shapes_from_json(const nlohmann::json& j);
nlohmann::json to_json(const LossWeights& w);
LossWeights loss_weights_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const nlohmann::json& j);

// ---------------------------------------------------------------------------
// Checkpoints

/// Boundary-parameter ranges a model was trained on, e.g. {"u0": [0, 0.5]}.
using ParamRanges = std::map<std::string, std::array<double, 2>>;

struct CheckpointMeta {
  std::string stage;              // A0, A, B0, B1, B2, B3 or empty
  std::string problem = "cavity"; // cavity | internal
  std::string input_recipe;       // prerun20 | coarse8 | bc-only
  int epoch = 0;
  std::string loss_digest;        // hex digest of the per-epoch total loss series
  LossWeights lambdas;
  ParamRanges ranges;
  int max_obstacles = 0;
  nlohmann::json extra = nlohmann::json::object();  // surgery records and the like
};

struct Checkpoint {
  static constexpr int kFormatVersion = 1;
  UNet<float> model;
  CheckpointMeta meta;
};

/// Directory with manifest.json and params.bin (little-endian f32 blobs).
void save_checkpoint(const std::filesystem::path& dir, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& dir);

/// FNV-1a 64-bit digest of a double series, as 16 hex digits.
std::string digest_series(const std::vector<double>& values);

}  // namespace nsgen
