#pragma once

// Accuracy reports against the finite-difference oracle, latency benchmarks
// and line-profile exports.

#include "nsgen/io.hpp"
#include "nsgen/solver.hpp"
#include "nsgen/unet.hpp"

#include <filesystem>
#include <map>
#include <mutex>
#include <string>
#include <vector>

namespace nsgen {

struct EvalCase {
  std::string name;
  BoundarySpec bc;
  std::vector<Shape> shapes;
};

nlohmann::json to_json(const EvalCase& c);
EvalCase eval_case_from_json(const nlohmann::json& j);
std::vector<EvalCase> eval_cases_from_json(const nlohmann::json& j);

/// Reference comparison cases of a stage; B3 circles come from a fixed seed.
std::vector<EvalCase> reference_cases(const std::string& stage);

/// Published per-channel RMSE of a stage's reference case (zeros if none).
ChannelRmse reference_rmse(const std::string& stage);

/// Converged oracle fields keyed by a digest of (bc, shapes, grid). With a
/// directory, entries are also persisted as NSF1 files.
class TruthCache {
 public:
  TruthCache() = default;
  explicit TruthCache(std::filesystem::path dir) : dir_(std::move(dir)) {}

  struct Entry {
    FlowField<double> field;
    bool converged = false;
    long steps = 0;
  };

  Entry get(const EvalCase& c, const GridSpec& grid, double steady_tol = 1e-6);
  static std::string key(const EvalCase& c, const GridSpec& grid);
  int hits() const { return hits_; }

 private:
  std::filesystem::path dir_;
  std::map<std::string, Entry> mem_;
  std::mutex mu_;
  int hits_ = 0;
};

struct CaseResult {
  std::string name;
  ChannelRmse rmse;
  bool oracle_converged = false;
  long oracle_steps = 0;
  double prep_seconds = 0.0;   // warm-input preparation
  double infer_ms = 0.0;
  FlowField<double> prediction;
  FlowField<double> truth;
};

struct EvalReport {
  std::string stage;
  std::vector<CaseResult> cases;
  ChannelRmse mean;       // over converged cases only
  int cases_used = 0;
  double mean_prep_seconds = 0.0;
};

nlohmann::json to_json(const EvalReport& r);

/// Builds each case's input with the checkpoint's recipe, predicts, and
/// compares with the oracle on fluid nodes.
EvalReport evaluate_stage(const Checkpoint& ckpt, const std::vector<EvalCase>& cases,
                          TruthCache* cache = nullptr);

struct LatencyStats {
  int runs = 0;
  int warmup = 5;
  double median_ms = 0.0;
  double p95_ms = 0.0;
  double mean_ms = 0.0;
  double min_ms = 0.0;
  double max_ms = 0.0;
  int input_size = 0;
  std::string host;
};

nlohmann::json to_json(const LatencyStats& s);

/// Single-sample forward latency after 5 untimed warm-up calls. n_runs >= 30.
LatencyStats benchmark_latency(const UNet<float>& model, int n_runs = 100);

enum class ProfileKind { centerline, row, outlet };

struct ProfileLine {
  ProfileKind kind = ProfileKind::centerline;
  int index = 0;  // row index for ProfileKind::row
};

struct ProfileTable {
  std::string label;
  std::vector<double> coordinate, u, v;
};

/// Vertical centerline (mean of the two middle columns on even grids),
/// a horizontal row, or the right-edge outlet column. Throws
/// std::out_of_range for a row outside the grid.
ProfileTable extract_profile(const FlowField<double>& f, const ProfileLine& line);

/// CSV blocks "line,coordinate,u,v", one per requested line.
std::string profiles_csv(const FlowField<double>& f, const std::vector<ProfileLine>& lines);

/// Writes `<stem>_profiles.csv` and the field itself as `<stem>.nsf1`.
void export_profiles(const FlowField<double>& f, const std::vector<ProfileLine>& lines,
                     const std::filesystem::path& stem);

}  // namespace nsgen
