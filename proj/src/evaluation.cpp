#include "nsgen/evaluation.hpp"

#include "nsgen/data.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <future>
#include <numeric>
#include <sstream>
#include <thread>

namespace nsgen {

using json = nlohmann::json;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

json rmse_json(const ChannelRmse& r) { return {{"u", r.u}, {"v", r.v}, {"p", r.p}}; }

std::string cpu_model() {
  std::ifstream in("/proc/cpuinfo");
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("model name", 0) == 0) {
      const auto pos = line.find(':');
      if (pos != std::string::npos) return line.substr(pos + 2);
    }
  }
  return "unknown";
}

}  // namespace

json to_json(const EvalCase& c) {
  return {{"name", c.name}, {"bc", to_json(c.bc)}, {"shapes", shapes_to_json(c.shapes)}};
}

EvalCase eval_case_from_json(const json& j) {
  EvalCase c;
  c.name = j.value("name", std::string());
  c.bc = boundary_spec_from_json(j.at("bc"));
  if (j.contains("shapes")) c.shapes = shapes_from_json(j.at("shapes"));
  return c;
}

std::vector<EvalCase> eval_cases_from_json(const json& j) {
  const json& arr = j.is_object() ? j.at("cases") : j;
  std::vector<EvalCase> out;
  for (const auto& e : arr) out.push_back(eval_case_from_json(e));
  return out;
}

std::vector<EvalCase> reference_cases(const std::string& stage) {
  const StageData sd = stage_data(stage);
  if (stage == "A0") return {{"A0 U0=0.5", cavity_bc(0.5), {}}};
  if (stage == "A") return {{"A U0=0.5 half lid", cavity_bc(0.5, 0.25, 0.5), {}}};
  if (stage == "B0") return {{"B0 (0.2,0.5)", internal_bc(0.2, 0.5), {}}};
  const GridSpec grid = GridSpec::square(sd.grid_size);
  const double c = (grid.nx - 1) / 2.0;
  const double half = std::round(3.5 * (grid.nx - 1) / 63.0);
  const Rect square{std::floor(c - half), std::floor(c - half), 2 * half, 2 * half};
  if (stage == "B1") return {{"B1 (0.05,0.5) one square", internal_bc(0.05, 0.5), {square}}};
  if (stage == "B2") return {{"B2 (0.05,0.5) one square", internal_bc(0.05, 0.5), {square}}};
  // Three non-overlapping circles drawn from a fixed seed.
  Rng rng(20240517);
  std::vector<Shape> circles;
  while (circles.size() < 3) {
    const double r = rng.uniform(3.0, 8.0);
    const Circle cand{rng.uniform(1.0 + r, grid.nx - 2.0 - r), rng.uniform(1.0 + r, grid.ny - 2.0 - r), r};
    bool clear = true;
    for (const auto& s : circles) {
      const auto& o = std::get<Circle>(s);
      if (std::hypot(o.cx - cand.cx, o.cy - cand.cy) < o.radius + cand.radius + 2.0) clear = false;
    }
    try {
      validate_shape(cand, grid);
    } catch (const ShapeError&) {
      clear = false;
    }
    if (clear) circles.push_back(cand);
  }
  return {{"B3 (0.2,0.5) three circles", internal_bc(0.2, 0.5), circles}};
}

ChannelRmse reference_rmse(const std::string& stage) {
  if (stage == "A0") return {0.0381, 0.0362, 0.1418};
  if (stage == "A") return {0.0196, 0.0438, 0.2437};
  if (stage == "B2") return {0.0186, 0.0313, 0.0619};
  if (stage == "B3") return {0.0836, 0.0766, 0.2908};
  return {};
}

std::string TruthCache::key(const EvalCase& c, const GridSpec& grid) {
  const json j = {{"bc", to_json(c.bc)}, {"shapes", shapes_to_json(c.shapes)}, {"n", grid.nx}};
  const std::string s = j.dump();
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

TruthCache::Entry TruthCache::get(const EvalCase& c, const GridSpec& grid, double steady_tol) {
  const std::string k = key(c, grid) + (steady_tol == 1e-6 ? "" : "_" + std::to_string(steady_tol));
  {
    std::lock_guard lock(mu_);
    if (auto it = mem_.find(k); it != mem_.end()) {
      ++hits_;
      return it->second;
    }
  }
  const auto file = dir_.empty() ? std::filesystem::path() : dir_ / (k + ".nsf1");
  Entry e;
  if (!file.empty() && std::filesystem::exists(file)) {
    e.field = field_from_nsf1(decode_nsf1(read_file(file)), grid.domain_length);
    const json side = json::parse(read_file(file.string() + ".json"));
    e.converged = side.at("converged").get<bool>();
    e.steps = side.at("steps").get<long>();
  } else {
    GeometryMask mask;
    const GeometryMask* mp = nullptr;
    if (!c.shapes.empty()) {
      mask = rasterize_obstacles(c.shapes, grid);
      mp = &mask;
    }
    SolverParams params = SolverParams::defaults(grid, c.bc.nu);
    params.steady_tol = steady_tol;
    try {
      const SolveResult r = solve_steady(c.bc, mp, grid, params);
      e.field = r.field;
      e.converged = r.converged;
      e.steps = r.steps;
    } catch (const DivergenceError& err) {
      e.field = FlowField<double>::zeros(grid);
      e.converged = false;
      e.steps = err.step;
    }
    if (!file.empty()) {
      std::filesystem::create_directories(dir_);
      write_file(file, encode_nsf1(to_nsf1(e.field)));
      write_file(file.string() + ".json",
                 json{{"converged", e.converged}, {"steps", e.steps}}.dump());
    }
  }
  std::lock_guard lock(mu_);
  mem_.emplace(k, e);
  return e;
}

json to_json(const EvalReport& r) {
  json cases = json::array();
  for (const auto& c : r.cases)
    cases.push_back({{"name", c.name},
                     {"rmse", rmse_json(c.rmse)},
                     {"oracle_converged", c.oracle_converged},
                     {"oracle_steps", c.oracle_steps},
                     {"prep_seconds", c.prep_seconds},
                     {"infer_ms", c.infer_ms}});
  return {{"stage", r.stage},
          {"cases", cases},
          {"mean", rmse_json(r.mean)},
          {"cases_used", r.cases_used},
          {"mean_prep_seconds", r.mean_prep_seconds},
          {"reference", rmse_json(reference_rmse(r.stage))}};
}

EvalReport evaluate_stage(const Checkpoint& ckpt, const std::vector<EvalCase>& cases,
                          TruthCache* cache) {
  const ModelConfig& cfg = ckpt.model.config();
  const GridSpec grid = GridSpec::square(cfg.input_size);
  const std::string recipe = ckpt.meta.input_recipe.empty() ? kBcOnly : ckpt.meta.input_recipe;
  TruthCache local;
  TruthCache& truths = cache ? *cache : local;

  auto run_case = [&](const EvalCase& c) {
    CaseResult res;
    res.name = c.name;
    const auto t0 = Clock::now();
    const InputTensor in = make_input(recipe, c.bc, c.shapes, grid.nx, cfg.in_channels);
    res.prep_seconds = seconds_since(t0);
    const auto t1 = Clock::now();
    res.prediction = predict(ckpt.model, in);
    res.infer_ms = seconds_since(t1) * 1e3;
    const TruthCache::Entry truth = truths.get(c, grid);
    res.truth = truth.field;
    res.oracle_converged = truth.converged;
    res.oracle_steps = truth.steps;
    GeometryMask mask;
    const GeometryMask* mp = nullptr;
    if (!c.shapes.empty()) {
      mask = rasterize_obstacles(c.shapes, grid);
      mp = &mask;
    }
    res.rmse = rmse(res.prediction, res.truth, mp);
    return res;
  };

  std::vector<std::future<CaseResult>> jobs;
  for (const auto& c : cases) jobs.push_back(std::async(std::launch::async, run_case, std::cref(c)));

  EvalReport report;
  report.stage = ckpt.meta.stage;
  double prep = 0.0;
  for (auto& j : jobs) {
    CaseResult r = j.get();
    prep += r.prep_seconds;
    if (r.oracle_converged) {
      report.mean.u += r.rmse.u;
      report.mean.v += r.rmse.v;
      report.mean.p += r.rmse.p;
      ++report.cases_used;
    }
    report.cases.push_back(std::move(r));
  }
  if (report.cases_used > 0) {
    report.mean.u /= report.cases_used;
    report.mean.v /= report.cases_used;
    report.mean.p /= report.cases_used;
  }
  if (!report.cases.empty()) report.mean_prep_seconds = prep / report.cases.size();
  return report;
}

json to_json(const LatencyStats& s) {
  return {{"runs", s.runs},       {"warmup", s.warmup},   {"median_ms", s.median_ms},
          {"p95_ms", s.p95_ms},   {"mean_ms", s.mean_ms}, {"min_ms", s.min_ms},
          {"max_ms", s.max_ms},   {"input_size", s.input_size},
          {"host", s.host},       {"threads", std::thread::hardware_concurrency()}};
}

LatencyStats benchmark_latency(const UNet<float>& model, int n_runs) {
  if (n_runs < 30) throw std::invalid_argument("benchmark needs at least 30 runs");
  const ModelConfig& cfg = model.config();
  const BoundarySpec bc = cfg.in_channels == 4 ? internal_bc(0.2, 0.5) : cavity_bc(0.5);
  const InputTensor in = make_input(kBcOnly, bc, {}, cfg.input_size, cfg.in_channels);
  LatencyStats s;
  s.runs = n_runs;
  s.input_size = cfg.input_size;
  s.host = cpu_model();
  for (int k = 0; k < s.warmup; ++k) (void)predict(model, in);
  std::vector<double> ms(n_runs);
  for (int k = 0; k < n_runs; ++k) {
    const auto t0 = Clock::now();
    const FlowField<double> f = predict(model, in);
    ms[k] = seconds_since(t0) * 1e3;
    if (!f.all_finite()) throw std::runtime_error("non-finite model output during benchmark");
  }
  std::vector<double> sorted = ms;
  std::sort(sorted.begin(), sorted.end());
  auto quantile = [&](double q) {
    const double pos = q * (n_runs - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (pos - lo) * (sorted[hi] - sorted[lo]);
  };
  s.median_ms = quantile(0.5);
  s.p95_ms = quantile(0.95);
  s.mean_ms = std::accumulate(ms.begin(), ms.end(), 0.0) / n_runs;
  s.min_ms = sorted.front();
  s.max_ms = sorted.back();
  return s;
}

ProfileTable extract_profile(const FlowField<double>& f, const ProfileLine& line) {
  const int nx = f.grid.nx;
  const int ny = f.grid.ny;
  const double h = f.grid.h;
  ProfileTable t;
  switch (line.kind) {
    case ProfileKind::centerline: {
      t.label = "centerline";
      const int a = (nx - 1) / 2;
      const int b = nx / 2;
      for (int j = 0; j < ny; ++j) {
        t.coordinate.push_back(j * h);
        t.u.push_back(0.5 * (f.u(j, a) + f.u(j, b)));
        t.v.push_back(0.5 * (f.v(j, a) + f.v(j, b)));
      }
      break;
    }
    case ProfileKind::row: {
      if (line.index < 0 || line.index >= ny)
        throw std::out_of_range("row " + std::to_string(line.index) + " outside 0.." +
                                std::to_string(ny - 1));
      t.label = "row" + std::to_string(line.index);
      for (int i = 0; i < nx; ++i) {
        t.coordinate.push_back(i * h);
        t.u.push_back(f.u(line.index, i));
        t.v.push_back(f.v(line.index, i));
      }
      break;
    }
    case ProfileKind::outlet: {
      t.label = "outlet";
      for (int j = 0; j < ny; ++j) {
        t.coordinate.push_back(j * h);
        t.u.push_back(f.u(j, nx - 1));
        t.v.push_back(f.v(j, nx - 1));
      }
      break;
    }
  }
  return t;
}

std::string profiles_csv(const FlowField<double>& f, const std::vector<ProfileLine>& lines) {
  std::ostringstream out;
  out.precision(17);
  out << "line,coordinate,u,v\n";
  for (const auto& l : lines) {
    const ProfileTable t = extract_profile(f, l);
    for (std::size_t k = 0; k < t.coordinate.size(); ++k)
      out << t.label << ',' << t.coordinate[k] << ',' << t.u[k] << ',' << t.v[k] << '\n';
  }
  return out.str();
}

void export_profiles(const FlowField<double>& f, const std::vector<ProfileLine>& lines,
                     const std::filesystem::path& stem) {
  const std::string csv = profiles_csv(f, lines);
  if (stem.has_parent_path()) std::filesystem::create_directories(stem.parent_path());
  write_file(stem.string() + "_profiles.csv", csv);
  write_file(stem.string() + ".nsf1", encode_nsf1(to_nsf1(f)));
}

}  // namespace nsgen
