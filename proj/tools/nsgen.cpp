#include "nsgen/data.hpp"
#include "nsgen/evaluation.hpp"
#include "nsgen/io.hpp"
#include "nsgen/service.hpp"
#include "nsgen/solver.hpp"
#include "nsgen/training.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <fstream>
#include <iostream>

using namespace nsgen;
using json = nlohmann::json;

namespace {

struct SolveArgs {
  std::string problem = "cavity";
  int n = 32;
  double u0 = 0.5;
  double v0 = 0.0;
  double lid_start = 0.0;
  double lid_extent = 1.0;
  std::string shapes;
  std::string out;
  double tol = 1e-6;
  long max_steps = 100000;
  std::string profiles;
};

int run_solve(const SolveArgs& a) {
  const BoundarySpec bc = a.problem == "cavity" ? cavity_bc(a.u0, a.lid_start, a.lid_extent)
                                                : internal_bc(a.u0, a.v0);
  const GridSpec grid = GridSpec::square(a.n);
  std::vector<Shape> shapes;
  if (!a.shapes.empty()) shapes = shapes_from_json(json::parse(read_file(a.shapes)));
  GeometryMask mask;
  const GeometryMask* mp = nullptr;
  if (!shapes.empty()) {
    mask = rasterize_obstacles(shapes, grid);
    mp = &mask;
  }
  SolverParams params = SolverParams::defaults(grid, bc.nu);
  params.steady_tol = a.tol;
  params.max_steps = a.max_steps;
  const auto t0 = std::chrono::steady_clock::now();
  const SolveResult r = solve_steady(bc, mp, grid, params, [](const SolveProgress& p) {
    std::cerr << "step " << p.step << " change " << p.change << '\n';
    return true;
  }, 1000);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  save_field(a.out, r.field, bc, shapes);
  if (!a.profiles.empty())
    export_profiles(r.field,
                    {{ProfileKind::centerline, 0},
                     {ProfileKind::row, std::min(40, a.n - 1)},
                     {ProfileKind::outlet, 0}},
                    a.profiles);
  std::cout << json{{"out", a.out},
                    {"steps", r.steps},
                    {"converged", r.converged},
                    {"last_change", r.last_change},
                    {"max_divergence", max_divergence(r.field, mp)},
                    {"seconds", secs}}
                   .dump()
            << '\n';
  return r.converged ? 0 : 2;
}

ResidualMode parse_mode(const std::string& s) {
  if (s == "abs") return ResidualMode::weighted_abs_sum;
  if (s == "squares") return ResidualMode::sum_of_squares;
  throw CLI::ValidationError("--residual", "expected abs or squares");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"nsgen: weakly supervised steady Navier-Stokes surrogates"};
  app.require_subcommand(1);

  SolveArgs sa;
  auto* solve = app.add_subcommand("solve", "Run the finite-difference oracle to steady state");
  solve->add_option("--problem", sa.problem)->check(CLI::IsMember({"cavity", "internal"}));
  solve->add_option("--n", sa.n, "Grid size (power of two)");
  solve->add_option("--u0", sa.u0);
  solve->add_option("--v0", sa.v0);
  solve->add_option("--lid-start", sa.lid_start);
  solve->add_option("--lid-extent", sa.lid_extent);
  solve->add_option("--shapes", sa.shapes, "JSON array of obstacle shapes")->check(CLI::ExistingFile);
  solve->add_option("--out", sa.out)->required();
  solve->add_option("--tol", sa.tol);
  solve->add_option("--max-steps", sa.max_steps);
  solve->add_option("--profiles", sa.profiles, "Write <stem>_profiles.csv and <stem>.nsf1");

  std::string gd_stage = "A0", gd_out;
  int gd_n = 2048;
  std::uint64_t gd_seed = 0;
  bool gd_quiet = false;
  auto* gen = app.add_subcommand("gen-data", "Generate a stage dataset");
  gen->add_option("--stage", gd_stage)->check(CLI::IsMember({"A0", "A", "B0", "B1", "B2", "B3"}));
  gen->add_option("--n", gd_n);
  gen->add_option("--seed", gd_seed);
  gen->add_option("--out", gd_out)->required();
  gen->add_flag("--quiet", gd_quiet);

  StageSpec ts;
  std::string tr_data, tr_out, tr_from, tr_telemetry, tr_residual = "abs";
  bool tr_no_balance = false;
  auto* train = app.add_subcommand("train", "Train one curriculum stage");
  train->add_option("--stage", ts.id)->check(CLI::IsMember({"A0", "A", "B0", "B1", "B2", "B3"}));
  train->add_option("--data", tr_data)->required()->check(CLI::ExistingDirectory);
  train->add_option("--from", tr_from, "Source checkpoint for transfer stages");
  train->add_option("--out", tr_out)->required();
  train->add_option("--epochs", ts.epochs);
  train->add_option("--lr", ts.lr);
  train->add_option("--lr-final", ts.lr_final, "Cosine-decay target learning rate");
  train->add_option("--batch", ts.batch_size);
  train->add_option("--base-width", ts.base_width);
  train->add_option("--seed", ts.seed);
  train->add_option("--surgery", ts.surgery)
      ->check(CLI::IsMember({"none", "expand_channels", "expand_depth"}));
  train->add_option("--checkpoint-every", ts.checkpoint_every);
  train->add_option("--residual", tr_residual, "abs | squares");
  train->add_flag("--no-balance", tr_no_balance);
  train->add_option("--telemetry", tr_telemetry, "JSON-lines file (default stdout)");

  std::string ev_ckpt, ev_cases, ev_out, ev_cache, ev_profiles;
  auto* eval = app.add_subcommand("eval", "RMSE report against the oracle");
  eval->add_option("--checkpoint", ev_ckpt)->required()->check(CLI::ExistingDirectory);
  eval->add_option("--cases", ev_cases, "JSON cases (default: the stage's reference case)");
  eval->add_option("--out", ev_out);
  eval->add_option("--truth-cache", ev_cache);
  eval->add_option("--profiles", ev_profiles, "Directory for profile CSVs");

  std::string be_ckpt;
  int be_runs = 100, be_size = 64, be_width = 64, be_channels = 3;
  auto* bench = app.add_subcommand("bench", "Single-forward latency");
  bench->add_option("--checkpoint", be_ckpt)->check(CLI::ExistingDirectory);
  bench->add_option("--runs", be_runs)->check(CLI::Range(30, 100000));
  bench->add_option("--size", be_size, "Random model size when no checkpoint is given");
  bench->add_option("--base-width", be_width);
  bench->add_option("--channels", be_channels);

  std::string sv_registry, sv_host = "0.0.0.0";
  int sv_port = 0;
  auto* srv = app.add_subcommand("serve", "HTTP inference service");
  srv->add_option("--registry", sv_registry);
  srv->add_option("--port", sv_port);
  srv->add_option("--host", sv_host);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*solve) return run_solve(sa);

    if (*gen) {
      const auto m = gen_stage_dataset(gd_stage, gd_n, gd_seed, gd_out, [&](int done, int total) {
        if (!gd_quiet && (done % 64 == 0 || done == total))
          std::cerr << "generated " << done << '/' << total << '\n';
      });
      std::cout << json{{"out", gd_out}, {"count", m.count()}, {"train", m.train_count()},
                        {"resampled", m.events.size()}}
                       .dump()
                << '\n';
      return 0;
    }

    if (*train) {
      ts.source = tr_from;
      ts.auto_balance = !tr_no_balance;
      ts.mode = parse_mode(tr_residual);
      const Dataset data = load_dataset(tr_data);
      std::ofstream tfile;
      std::ostream* tel = &std::cout;
      if (!tr_telemetry.empty()) {
        tfile.open(tr_telemetry);
        tel = &tfile;
      }
      const TrainReport r = train_stage(ts, data, tr_out, tel);
      std::cerr << "stage " << r.stage << " done in " << r.wall_seconds << " s, best total "
                << r.best_total << '\n';
      return 0;
    }

    if (*eval) {
      const Checkpoint ck = load_checkpoint(ev_ckpt);
      const auto cases = ev_cases.empty() ? reference_cases(ck.meta.stage)
                                          : eval_cases_from_json(json::parse(read_file(ev_cases)));
      TruthCache cache = ev_cache.empty() ? TruthCache() : TruthCache(ev_cache);
      const EvalReport rep = evaluate_stage(ck, cases, &cache);
      const std::string text = to_json(rep).dump(2);
      if (ev_out.empty()) {
        std::cout << text << '\n';
      } else {
        write_file(ev_out, text);
      }
      if (!ev_profiles.empty()) {
        for (std::size_t k = 0; k < rep.cases.size(); ++k) {
          const int n = rep.cases[k].truth.grid.nx;
          const std::vector<ProfileLine> lines{{ProfileKind::centerline, 0},
                                               {ProfileKind::row, std::min(40, n - 1)},
                                               {ProfileKind::outlet, 0}};
          const auto dir = std::filesystem::path(ev_profiles);
          export_profiles(rep.cases[k].prediction, lines, dir / ("case" + std::to_string(k) + "_model"));
          export_profiles(rep.cases[k].truth, lines, dir / ("case" + std::to_string(k) + "_oracle"));
        }
      }
      return 0;
    }

    if (*bench) {
      UNet<float> model;
      if (!be_ckpt.empty()) {
        model = load_checkpoint(be_ckpt).model;
      } else {
        ModelConfig cfg;
        cfg.input_size = be_size;
        cfg.base_width = be_width;
        cfg.in_channels = be_channels;
        model = UNet<float>(cfg);
      }
      std::cout << to_json(benchmark_latency(model, be_runs)).dump(2) << '\n';
      return 0;
    }

    if (*srv) {
      ServeOptions o = resolve_serve_options(sv_registry, sv_port);
      o.host = sv_host;
      return serve(o);
    }
  } catch (const std::exception& e) {
    std::cerr << "nsgen: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
