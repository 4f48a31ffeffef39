#include "nsgen/service.hpp"

#include "nsgen/data.hpp"
#include "nsgen/solver.hpp"
#include "nsgen/unet.hpp"

#include <httplib.h>

#include <chrono>
#include <cstdlib>
#include <iostream>
#include <sstream>

namespace nsgen {

using json = nlohmann::json;
using Clock = std::chrono::steady_clock;

namespace {

struct RequestError : std::runtime_error {
  int status;
  RequestError(int s, const std::string& what) : std::runtime_error(what), status(s) {}
};

HttpReply error_reply(int status, const std::string& message) {
  return {status, json{{"error", message}, {"status", status}}.dump()};
}

std::string fmt(double x) {
  std::ostringstream s;
  s << x;
  return s.str();
}

void check_range(const ParamRanges& ranges, const std::string& name, double value,
                 double fixed_lo, double fixed_hi) {
  double lo = fixed_lo;
  double hi = fixed_hi;
  if (auto it = ranges.find(name); it != ranges.end()) {
    lo = it->second[0];
    hi = it->second[1];
  }
  if (!std::isfinite(value)) throw RequestError(400, name + " must be a finite number");
  if (value < lo) throw RequestError(400, name + " = " + fmt(value) + " is below the lower bound " + fmt(lo));
  if (value > hi) throw RequestError(400, name + " = " + fmt(value) + " exceeds the upper bound " + fmt(hi));
}

double number(const json& j, const char* key, double fallback) {
  if (!j.contains(key)) return fallback;
  if (!j.at(key).is_number()) throw RequestError(400, std::string(key) + " must be a number");
  return j.at(key).get<double>();
}

struct RequestProblem {
  BoundarySpec bc;
  std::vector<Shape> shapes;
};

// Parses the physical parameters of a request and checks them against the
// ranges a model was trained on.
RequestProblem parse_problem(const json& req, const CheckpointMeta* meta, int grid_size) {
  RequestProblem out;
  const std::string problem = meta ? meta->problem : req.value("problem", std::string());
  const bool cavity = problem == "cavity" || (problem.empty() && req.contains("lid"));
  static const ParamRanges kDefaults{{"u0", {0.0, 0.5}}, {"v0", {0.0, 0.5}},
                                     {"lid_start", {0.0, 0.5}}, {"lid_extent", {0.25, 1.0}}};
  const ParamRanges& ranges = meta ? meta->ranges : kDefaults;
  if (cavity) {
    if (!req.contains("lid") || !req.at("lid").is_object())
      throw RequestError(400, "cavity models need a 'lid' object with 'velocity'");
    if (req.contains("inlet")) throw RequestError(400, "cavity models take 'lid', not 'inlet'");
    const json& lid = req.at("lid");
    if (!lid.contains("velocity")) throw RequestError(400, "lid.velocity is required");
    const double u0 = number(lid, "velocity", 0.0);
    const double start = number(lid, "start", 0.0);
    const double extent = number(lid, "extent", 1.0);
    check_range(ranges, "u0", u0, 0.0, 0.5);
    check_range(ranges, "lid_start", start, 0.0, 0.0);
    check_range(ranges, "lid_extent", extent, 1.0, 1.0);
    if (start + extent > 1.0 + 1e-12)
      throw RequestError(400, "lid_start + lid_extent = " + fmt(start + extent) +
                                  " exceeds the upper bound 1");
    out.bc = cavity_bc(u0, start, extent);
  } else {
    if (!req.contains("inlet") || !req.at("inlet").is_object())
      throw RequestError(400, "internal-flow models need an 'inlet' object with 'u0' and 'v0'");
    const json& inlet = req.at("inlet");
    if (!inlet.contains("u0") || !inlet.contains("v0"))
      throw RequestError(400, "inlet.u0 and inlet.v0 are required");
    const double u0 = number(inlet, "u0", 0.0);
    const double v0 = number(inlet, "v0", 0.0);
    check_range(ranges, "u0", u0, 0.0, 0.5);
    check_range(ranges, "v0", v0, 0.0, 0.5);
    out.bc = internal_bc(u0, v0);
  }
  if (req.contains("shapes")) {
    try {
      out.shapes = shapes_from_json(req.at("shapes"));
    } catch (const ShapeError& e) {
      throw RequestError(422, e.what());
    } catch (const json::exception& e) {
      throw RequestError(422, std::string("malformed shape: ") + e.what());
    }
  }
  const int max_obstacles = meta ? meta->max_obstacles : 3;
  if (static_cast<int>(out.shapes.size()) > max_obstacles)
    throw RequestError(400, "shape count " + std::to_string(out.shapes.size()) +
                                " exceeds the upper bound " + std::to_string(max_obstacles));
  try {
    const GridSpec grid = GridSpec::square(grid_size);
    for (const auto& s : out.shapes) validate_shape(s, grid);
    if (!out.shapes.empty()) (void)rasterize_obstacles(out.shapes, grid);
  } catch (const ShapeError& e) {
    throw RequestError(422, e.what());
  }
  return out;
}

json parse_body(const std::string& body) {
  try {
    json j = json::parse(body);
    if (!j.is_object()) throw RequestError(400, "request body must be a JSON object");
    return j;
  } catch (const json::parse_error& e) {
    throw RequestError(400, std::string("invalid JSON: ") + e.what());
  }
}

json field_payload(const FlowField<double>& f, bool arrays) {
  if (!arrays) return {{"encoding", "nsf1-base64"}, {"data", base64_encode(encode_nsf1(to_nsf1(f)))}};
  json out = {{"encoding", "json"}, {"nx", f.grid.nx}, {"ny", f.grid.ny}};
  for (Var v : kAllVars) {
    const auto& a = f[v];
    json rows = json::array();
    for (Eigen::Index j = 0; j < a.rows(); ++j) {
      std::vector<double> row(a.cols());
      for (Eigen::Index i = 0; i < a.cols(); ++i) row[i] = a(j, i);
      rows.push_back(std::move(row));
    }
    out[to_string(v)] = std::move(rows);
  }
  return out;
}

bool wants_arrays(const std::string& accept) {
  return accept.find("application/json") != std::string::npos &&
         accept.find("nsf1") == std::string::npos;
}

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

json entry_json(const RegistryEntry& e) {
  const auto& m = *e.model;
  json ranges = json::object();
  for (const auto& [k, r] : m.meta.ranges) ranges[k] = {r[0], r[1]};
  return {{"id", e.id},
          {"checkpoint", e.checkpoint.string()},
          {"stage", m.meta.stage},
          {"problem", m.meta.problem},
          {"input_recipe", m.meta.input_recipe},
          {"grid_size", m.model.config().input_size},
          {"channels", m.model.config().in_channels},
          {"ranges", ranges},
          {"max_obstacles", m.meta.max_obstacles},
          {"parameter_count", m.model.parameter_count()}};
}

struct OracleJob {
  RequestProblem problem;
  GridSpec grid;
  double budget_ms = 0.0;
  std::string model_id;
};

OracleJob parse_oracle(const Service& svc, const std::string& body) {
  const json req = parse_body(body);
  OracleJob job;
  const CheckpointMeta* meta = nullptr;
  int n = req.value("grid_size", 0);
  if (req.contains("model_id")) {
    job.model_id = req.at("model_id").get<std::string>();
    const RegistryEntry* e = svc.find(job.model_id);
    if (!e) throw RequestError(404, "unknown model '" + job.model_id + "'");
    meta = &e->model->meta;
    if (n == 0) n = e->model->model.config().input_size;
  }
  if (n == 0) n = 32;
  try {
    job.grid = GridSpec::square(n);
  } catch (const std::exception& e) {
    throw RequestError(400, e.what());
  }
  if (n > 128) throw RequestError(400, "grid_size = " + std::to_string(n) + " exceeds the upper bound 128");
  job.problem = parse_problem(req, meta, n);
  job.budget_ms = number(req, "budget_ms", 60000.0);
  if (job.budget_ms < 0) throw RequestError(400, "budget_ms must be >= 0");
  return job;
}

struct OracleOutcome {
  SolveResult result;
  bool timed_out = false;
};

template <typename OnProgress>
OracleOutcome run_oracle(const OracleJob& job, OnProgress&& on_progress) {
  GeometryMask mask;
  const GeometryMask* mp = nullptr;
  if (!job.problem.shapes.empty()) {
    mask = rasterize_obstacles(job.problem.shapes, job.grid);
    mp = &mask;
  }
  OracleOutcome out;
  if (job.budget_ms <= 0) {
    out.result.field = initial_state(job.problem.bc, job.grid, mp);
    out.timed_out = true;
    return out;
  }
  const auto t0 = Clock::now();
  const SolverParams params = SolverParams::defaults(job.grid, job.problem.bc.nu);
  bool over = false;
  out.result = solve_steady(
      job.problem.bc, mp, job.grid, params,
      [&](const SolveProgress& p) {
        if (!on_progress(p)) return false;
        if (ms_since(t0) > job.budget_ms) {
          over = true;
          return false;
        }
        return true;
      },
      25);
  out.timed_out = over && !out.result.converged;
  return out;
}

json oracle_result_json(const OracleJob& job, const OracleOutcome& o, double elapsed_ms) {
  return {{"fields", field_payload(o.result.field, false)},
          {"steps", o.result.steps},
          {"converged", o.result.converged},
          {"last_change", o.result.last_change},
          {"partial", o.timed_out},
          {"meta", {{"latency_ms", elapsed_ms}, {"model_id", job.model_id}}}};
}

}  // namespace

std::vector<RegistryEntry> load_registry(const std::filesystem::path& file) {
  const json j = json::parse(read_file(file));
  const json& arr = j.is_object() ? j.at("models") : j;
  const auto base = file.parent_path();
  std::vector<RegistryEntry> out;
  for (const auto& m : arr) {
    RegistryEntry e;
    e.id = m.at("id").get<std::string>();
    std::filesystem::path p = m.at("checkpoint").get<std::string>();
    e.checkpoint = p.is_absolute() ? p : base / p;
    e.model = std::make_shared<const Checkpoint>(load_checkpoint(e.checkpoint));
    for (const auto& other : out)
      if (other.id == e.id) throw std::invalid_argument("duplicate model id '" + e.id + "'");
    out.push_back(std::move(e));
  }
  return out;
}

const RegistryEntry* Service::find(const std::string& id) const {
  for (const auto& e : entries_)
    if (e.id == id) return &e;
  return nullptr;
}

json Service::list_models() const {
  json out = json::array();
  for (const auto& e : entries_) out.push_back(entry_json(e));
  return out;
}

HttpReply Service::solve(const std::string& body, const std::string& accept) const {
  const auto t0 = Clock::now();
  try {
    const json req = parse_body(body);
    if (!req.contains("model_id") || !req.at("model_id").is_string())
      throw RequestError(400, "model_id is required");
    const std::string id = req.at("model_id").get<std::string>();
    const RegistryEntry* e = find(id);
    if (!e) throw RequestError(404, "unknown model '" + id + "'");
    const Checkpoint& ck = *e->model;
    const ModelConfig& cfg = ck.model.config();
    const RequestProblem prob = parse_problem(req, &ck.meta, cfg.input_size);
    const std::string recipe = ck.meta.input_recipe.empty() ? kBcOnly : ck.meta.input_recipe;
    const InputTensor in = make_input(recipe, prob.bc, prob.shapes, cfg.input_size, cfg.in_channels);
    const double prep_ms = ms_since(t0);
    const auto t1 = Clock::now();
    const FlowField<double> f = predict(ck.model, in);
    const double forward_ms = ms_since(t1);
    const json out = {{"model_id", id},
                      {"fields", field_payload(f, wants_arrays(accept))},
                      {"meta",
                       {{"latency_ms", ms_since(t0)},
                        {"forward_ms", forward_ms},
                        {"prep_ms", prep_ms},
                        {"model_id", id},
                        {"input_recipe", recipe}}}};
    return {200, out.dump()};
  } catch (const RequestError& err) {
    return error_reply(err.status, err.what());
  } catch (const ShapeError& err) {
    return error_reply(422, err.what());
  } catch (const BoundaryError& err) {
    return error_reply(400, err.what());
  } catch (const json::exception& err) {
    return error_reply(400, err.what());
  } catch (const std::exception& err) {
    return error_reply(500, err.what());
  }
}

HttpReply Service::oracle_solve(const std::string& body) const {
  const auto t0 = Clock::now();
  try {
    const OracleJob job = parse_oracle(*this, body);
    const OracleOutcome o = run_oracle(job, [](const SolveProgress&) { return true; });
    return {o.timed_out ? 408 : 200, oracle_result_json(job, o, ms_since(t0)).dump()};
  } catch (const RequestError& err) {
    return error_reply(err.status, err.what());
  } catch (const DivergenceError& err) {
    return error_reply(422, err.what());
  } catch (const std::exception& err) {
    return error_reply(400, err.what());
  }
}

void Service::install(httplib::Server& server) const {
  auto send = [](httplib::Response& res, const HttpReply& r) {
    res.status = r.status;
    res.set_content(r.body, r.content_type);
  };
  server.Get("/healthz", [this](const httplib::Request&, httplib::Response& res) {
    res.set_content(json{{"status", "ok"}, {"models", entries_.size()}}.dump(), "application/json");
  });
  server.Get("/models", [this](const httplib::Request&, httplib::Response& res) {
    res.set_content(list_models().dump(), "application/json");
  });
  server.Post("/solve", [this, send](const httplib::Request& req, httplib::Response& res) {
    send(res, solve(req.body, req.get_header_value("Accept")));
  });
  server.Post("/oracle-solve", [this, send](const httplib::Request& req, httplib::Response& res) {
    const std::string accept = req.get_header_value("Accept");
    if (accept.find("text/event-stream") == std::string::npos) {
      send(res, oracle_solve(req.body));
      return;
    }
    // Parse up front so request errors keep their status codes; budget 0 is
    // answered before any stream opens.
    OracleJob job;
    try {
      job = parse_oracle(*this, req.body);
    } catch (const RequestError& err) {
      send(res, error_reply(err.status, err.what()));
      return;
    } catch (const std::exception& err) {
      send(res, error_reply(400, err.what()));
      return;
    }
    if (job.budget_ms <= 0) {
      const OracleOutcome o = run_oracle(job, [](const SolveProgress&) { return true; });
      send(res, {408, oracle_result_json(job, o, 0.0).dump()});
      return;
    }
    res.set_header("Cache-Control", "no-cache");
    res.set_chunked_content_provider(
        "text/event-stream", [job](size_t, httplib::DataSink& sink) {
          const auto t0 = Clock::now();
          auto emit = [&sink](const std::string& event, const json& data) {
            const std::string msg = "event: " + event + "\ndata: " + data.dump() + "\n\n";
            return sink.write(msg.data(), msg.size());
          };
          try {
            const OracleOutcome o = run_oracle(job, [&](const SolveProgress& p) {
              return sink.is_writable() &&
                     emit("progress", {{"step", p.step}, {"residual", p.change}});
            });
            json result = oracle_result_json(job, o, ms_since(t0));
            result["status"] = o.timed_out ? 408 : 200;
            emit(o.timed_out ? "timeout" : "result", result);
          } catch (const std::exception& err) {
            emit("error", {{"error", err.what()}, {"status", 422}});
          }
          sink.done();
          return true;
        });
  });
}

ServeOptions resolve_serve_options(const std::string& registry_flag, int port_flag) {
  ServeOptions o;
  if (!registry_flag.empty()) {
    o.registry = registry_flag;
  } else if (const char* env = std::getenv("NSGEN_REGISTRY")) {
    o.registry = env;
  }
  if (port_flag > 0) {
    o.port = port_flag;
  } else if (const char* env = std::getenv("NSGEN_PORT")) {
    o.port = std::stoi(env);
  }
  return o;
}

int serve(const ServeOptions& options) {
  std::vector<RegistryEntry> entries;
  if (!options.registry.empty()) entries = load_registry(options.registry);
  const Service svc(std::move(entries));
  httplib::Server server;
  svc.install(server);
  std::cerr << "nsgen serve: " << svc.entries().size() << " model(s) on " << options.host << ':'
            << options.port << '\n';
  if (!server.listen(options.host, options.port)) {
    std::cerr << "nsgen serve: cannot listen on port " << options.port << '\n';
    return 1;
  }
  return 0;
}

}  // namespace nsgen
