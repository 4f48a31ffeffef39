#include "nsgen/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>

namespace nsgen {

using json = nlohmann::json;

LossContext make_context(const InputTensor& input, const LossWeights& w, ResidualMode mode) {
  if (input.shapes.empty()) return LossContext::make(input.bc, input.grid, nullptr, w, mode);
  const GeometryMask mask = rasterize_obstacles(input.shapes, input.grid);
  return LossContext::make(input.bc, input.grid, &mask, w, mode);
}

namespace {

void accumulate(ResidualReport& acc, const ResidualReport& r, double k) {
  acc.loss_x += k * r.loss_x;
  acc.loss_y += k * r.loss_y;
  acc.loss_c += k * r.loss_c;
  acc.mean_abs_x += k * r.mean_abs_x;
  acc.mean_abs_y += k * r.mean_abs_y;
  acc.mean_abs_c += k * r.mean_abs_c;
  acc.loss_residual += k * r.loss_residual;
  acc.loss_neumann += k * r.loss_neumann;
  acc.loss_boundary += k * r.loss_boundary;
  acc.total += k * r.total;
  acc.n_interior = r.n_interior;
  acc.n_boundary = r.n_boundary;
  acc.n_neumann = r.n_neumann;
  acc.neumann_empty = r.neumann_empty;
}

}  // namespace

template <typename S>
BatchLoss batch_objective(UNet<S>& model, const std::vector<const InputTensor*>& inputs,
                          const std::vector<const LossContext*>& contexts, Mode mode,
                          bool accumulate_grad) {
  if (inputs.size() != contexts.size() || inputs.empty())
    throw std::invalid_argument("batch_objective needs one context per input");
  const int n = static_cast<int>(inputs.size());
  const GridSpec grid = inputs.front()->grid;
  const Eigen::Index area = static_cast<Eigen::Index>(grid.nx) * grid.ny;
  const Mat<S> x = pack_inputs<S>(inputs);
  ForwardCache<S> cache;
  const Mat<S> out = model.forward(x, n, mode, accumulate_grad ? &cache : nullptr);
  Mat<S> grad;
  if (accumulate_grad) grad = Mat<S>::Zero(3, out.cols());

  BatchLoss bl;
  const double inv_n = 1.0 / n;
  for (int s = 0; s < n; ++s) {
    const LossContext& ctx = *contexts[s];
    const FlowField<S> raw = unpack_output(out, s, grid);
    FlowField<S> phys = raw;
    overwrite_dirichlet(ctx.layout, phys);
    FlowField<S> gp, gb;
    if (accumulate_grad) {
      gp = FlowField<S>::zeros(grid);
      gb = FlowField<S>::zeros(grid);
    }
    const ResidualReport rep = evaluate_loss(ctx, phys, raw, accumulate_grad ? &gp : nullptr,
                                             accumulate_grad ? &gb : nullptr);
    accumulate(bl.mean, rep, inv_n);
    if (!accumulate_grad) continue;
    const S k = static_cast<S>(inv_n);
    for (Var v : kAllVars) {
      const int c = static_cast<int>(v);
      // Overwritten nodes are constants in the physics field.
      const Grid2D<S> g =
          k * (gb[v] + (ctx.layout.dirichlet[c] != 0).select(Grid2D<S>::Zero(grid.ny, grid.nx), gp[v]));
      for (int j = 0; j < grid.ny; ++j)
        for (int i = 0; i < grid.nx; ++i) grad(c, s * area + j * grid.nx + i) = g(j, i);
    }
  }
  bl.total = bl.mean.total;
  if (accumulate_grad) model.backward(cache, grad);
  return bl;
}

template BatchLoss batch_objective<float>(UNet<float>&, const std::vector<const InputTensor*>&,
                                          const std::vector<const LossContext*>&, Mode, bool);
template BatchLoss batch_objective<double>(UNet<double>&, const std::vector<const InputTensor*>&,
                                           const std::vector<const LossContext*>&, Mode, bool);

void Adam::step(UNet<float>& model) {
  auto params = model.params();
  std::vector<ParamRef<float>*> trainable;
  for (auto& p : params)
    if (p.trainable()) trainable.push_back(&p);
  if (m.empty()) {
    for (auto* p : trainable) {
      m.push_back(Vec<double>::Zero(p->size()));
      v.push_back(Vec<double>::Zero(p->size()));
    }
  }
  if (m.size() != trainable.size()) throw std::logic_error("optimizer state does not match model");
  ++t;
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  for (std::size_t k = 0; k < trainable.size(); ++k) {
    ParamRef<float>& p = *trainable[k];
    Eigen::Map<Eigen::VectorXf> w(p.data, p.size());
    Eigen::Map<const Eigen::VectorXf> g(p.grad, p.size());
    const Vec<double> gd = g.cast<double>();
    m[k] = beta1 * m[k] + (1.0 - beta1) * gd;
    v[k] = beta2 * v[k] + (1.0 - beta2) * gd.cwiseProduct(gd);
    const Vec<double> upd =
        (lr / c1) * m[k].array() / ((v[k].array() / c2).sqrt() + eps);
    w -= upd.cast<float>();
  }
}

// ---------------------------------------------------------------------------

namespace {

std::string default_surgery(const std::string& id) {
  if (id == "B1") return "expand_channels";
  if (id == "B2") return "expand_depth";
  return "none";
}

}  // namespace

StageSpec StageSpec::resolved() const {
  StageSpec s = *this;
  const StageData sd = stage_data(id);
  if (s.recipe.empty()) s.recipe = sd.recipe;
  if (s.grid_size == 0) s.grid_size = sd.grid_size;
  if (s.in_channels == 0) s.in_channels = sd.channels;
  if (s.surgery.empty()) s.surgery = s.source.empty() ? "none" : default_surgery(id);
  if (s.epochs < 1) throw std::invalid_argument("epochs must be >= 1");
  if (!(s.lr > 0.0)) throw std::invalid_argument("learning rate must be positive");
  if (s.batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
  s.weights.validate();
  return s;
}

std::string stage_predecessor(const std::string& id) {
  static const std::map<std::string, std::string> pred = {
      {"A0", ""}, {"A", "A0"}, {"B0", "A"}, {"B1", "B0"}, {"B2", "B1"}, {"B3", "B2"}};
  const auto it = pred.find(id);
  if (it == pred.end()) throw std::invalid_argument("unknown stage '" + id + "'");
  return it->second;
}

void validate_curriculum_order(const std::vector<std::string>& ids) {
  std::map<std::string, std::size_t> pos;
  for (std::size_t k = 0; k < ids.size(); ++k) {
    stage_predecessor(ids[k]);
    if (!pos.emplace(ids[k], k).second)
      throw std::invalid_argument("stage " + ids[k] + " appears twice in the curriculum");
  }
  for (std::size_t k = 0; k < ids.size(); ++k) {
    const std::string pred = stage_predecessor(ids[k]);
    const auto it = pos.find(pred);
    if (it != pos.end() && it->second > k)
      throw std::invalid_argument("stage " + ids[k] + " must come after " + pred);
  }
}

ParamRanges stage_ranges(const std::string& stage) {
  const StageData sd = stage_data(stage);
  if (sd.problem == "cavity") {
    ParamRanges r{{"u0", {0.0, 0.5}}};
    if (sd.partial_lid) {
      r["lid_start"] = {0.0, 0.5};
      r["lid_extent"] = {0.25, 1.0};
    }
    return r;
  }
  return {{"u0", {0.0, 0.5}}, {"v0", {0.0, 0.5}}};
}

namespace {

bool blocks_equal(const Block<float>& a, const Block<float>& b) {
  if (a.conv.weight != b.conv.weight || a.conv.bias != b.conv.bias) return false;
  if (a.norm.has_value() != b.norm.has_value()) return false;
  if (!a.norm) return true;
  return a.norm->gamma == b.norm->gamma && a.norm->beta == b.norm->beta &&
         a.norm->running_mean == b.norm->running_mean && a.norm->running_var == b.norm->running_var;
}

}  // namespace

UNet<float> initial_model(const StageSpec& spec, const std::vector<const InputTensor*>& probe,
                          json* record) {
  const StageSpec s = spec.resolved();
  json rec = json::object();
  if (s.source.empty()) {
    if (s.surgery != "none") throw std::invalid_argument("a surgery needs a source checkpoint");
    ModelConfig cfg;
    cfg.input_size = s.grid_size;
    cfg.in_channels = s.in_channels;
    cfg.base_width = s.base_width;
    cfg.seed = s.seed;
    if (record) *record = {{"source", nullptr}, {"surgery", "none"}};
    return UNet<float>(cfg);
  }
  if (!std::filesystem::exists(s.source / "manifest.json"))
    throw std::runtime_error("source checkpoint not found: " + s.source.string());
  const Checkpoint src = load_checkpoint(s.source);
  rec["source"] = s.source.string();
  rec["source_stage"] = src.meta.stage;
  rec["surgery"] = s.surgery;
  UNet<float> model;
  if (s.surgery == "none") {
    model = src.model;
  } else if (s.surgery == "expand_channels") {
    model = transfer_expand_channels(src.model, src.model.config().in_channels + 1);
    // Zero-mask equivalence on the probe inputs.
    for (const InputTensor* in : probe) {
      if (in->channel_count() != model.config().in_channels || in->grid.nx != model.config().input_size)
        continue;
      InputTensor zeroed = *in;
      zeroed.channels.back().setZero();
      InputTensor reduced = *in;
      reduced.channels.pop_back();
      const Mat<float> a = model.infer(pack_inputs<float>({&zeroed}), 1);
      const Mat<float> b = src.model.infer(pack_inputs<float>({&reduced}), 1);
      if (a != b)
        throw TrainingAborted("expand_channels equivalence check failed: zero-mask output differs");
    }
    rec["equivalence_checked"] = probe.size();
  } else if (s.surgery == "expand_depth") {
    DepthTransfer info;
    model = transfer_expand_depth(src.model, 2 * src.model.config().input_size, -1, &info);
    json mapping = json::array();
    for (const auto& [dst, from] : info.mapping) {
      const bool enc = dst.rfind("enc", 0) == 0;
      const int di = std::stoi(dst.substr(3));
      const int si = std::stoi(from.substr(3));
      const auto& nb = enc ? model.encoder()[di] : model.decoder()[di];
      const auto& sb = enc ? src.model.encoder()[si] : src.model.decoder()[si];
      if (!blocks_equal(nb, sb))
        throw TrainingAborted("expand_depth copy check failed for block " + dst);
      mapping.push_back({dst, from});
    }
    rec["copied_blocks"] = info.copied_blocks;
    rec["mapping"] = mapping;
  } else {
    throw std::invalid_argument("unknown surgery '" + s.surgery + "'");
  }
  if (model.config().input_size != s.grid_size || model.config().in_channels != s.in_channels)
    throw std::invalid_argument("source model (" + std::to_string(model.config().input_size) + ", " +
                                std::to_string(model.config().in_channels) +
                                " channels) does not fit stage " + s.id + " after surgery '" +
                                s.surgery + "'");
  if (record) *record = rec;
  return model;
}

namespace {

Checkpoint make_checkpoint(const UNet<float>& model, const StageSpec& s, const StageData& sd,
                           int epoch, const std::vector<double>& totals, const LossWeights& w,
                           const json& surgery) {
  Checkpoint c;
  c.model = model;
  c.meta.stage = s.id;
  c.meta.problem = sd.problem;
  c.meta.input_recipe = s.recipe;
  c.meta.epoch = epoch;
  c.meta.loss_digest = digest_series(totals);
  c.meta.lambdas = w;
  c.meta.ranges = stage_ranges(s.id);
  c.meta.max_obstacles = sd.max_obstacles;
  c.meta.extra = {{"transfer", surgery},
                  {"train_seed", s.seed},
                  {"batch_size", s.batch_size},
                  {"lr", s.lr},
                  {"lr_final", s.lr_final},
                  {"residual_mode", s.mode == ResidualMode::weighted_abs_sum ? "weighted_abs_sum"
                                                                            : "sum_of_squares"}};
  return c;
}

}  // namespace

TrainReport train_stage(const StageSpec& spec_in, const Dataset& data,
                        const std::filesystem::path& out_dir, std::ostream* telemetry) {
  const StageSpec spec = spec_in.resolved();
  const StageData sd = stage_data(spec.id);
  const auto& man = data.manifest;
  if (man.recipe != spec.recipe || man.grid_size != spec.grid_size || man.channels != spec.in_channels)
    throw std::invalid_argument("dataset (" + man.recipe + ", " + std::to_string(man.grid_size) +
                                ", " + std::to_string(man.channels) + " channels) does not match stage " +
                                spec.id);
  const auto t0 = std::chrono::steady_clock::now();

  std::vector<int> train_ids;
  for (int k = 0; k < man.count(); ++k)
    if (man.samples[k].split == "train") train_ids.push_back(k);
  if (train_ids.empty()) throw std::invalid_argument("dataset has no training samples");

  std::vector<const InputTensor*> probe;
  for (int k = 0; k < std::min<int>(4, static_cast<int>(train_ids.size())); ++k)
    probe.push_back(&data.inputs[train_ids[k]]);
  json surgery;
  UNet<float> model = initial_model(spec, probe, &surgery);

  std::vector<LossContext> ctx;
  ctx.reserve(data.inputs.size());
  for (const auto& in : data.inputs) ctx.push_back(make_context(in, spec.weights, spec.mode));

  auto gather = [&](const std::vector<int>& ids, std::size_t from, std::size_t to) {
    std::pair<std::vector<const InputTensor*>, std::vector<const LossContext*>> b;
    for (std::size_t k = from; k < to; ++k) {
      b.first.push_back(&data.inputs[ids[k]]);
      b.second.push_back(&ctx[ids[k]]);
    }
    return b;
  };

  TrainReport rep;
  rep.stage = spec.id;
  rep.seed = spec.seed;
  LossWeights w = spec.weights;
  if (spec.auto_balance) {
    // Balance on the untouched model with unit weights; a copy keeps the
    // running statistics of the trained model clean.
    UNet<float> scratch = model;
    const std::size_t m = std::min<std::size_t>(train_ids.size(), 64);
    ResidualReport acc;
    for (std::size_t k = 0; k < m; k += spec.batch_size) {
      const auto [in, cx] = gather(train_ids, k, std::min(m, k + spec.batch_size));
      const BatchLoss bl = batch_objective(scratch, in, cx, Mode::train, false);
      accumulate(acc, bl.mean, static_cast<double>(in.size()) / m);
    }
    w = balance_weights(acc);
    if (telemetry)
      *telemetry << json{{"epoch", 0}, {"event", "balance"}, {"lambdas", to_json(w)}}.dump() << "\n";
  }
  for (auto& c : ctx) c.weights = w;
  rep.weights = w;

  Adam opt;
  opt.lr = spec.lr;
  Rng rng(spec.seed ^ 0x5eed5eedULL);
  std::vector<double> totals;
  UNet<float> last_good = model;
  rep.best_total = std::numeric_limits<double>::infinity();
  rep.final_checkpoint = out_dir;
  rep.best_checkpoint = out_dir / "best";

  for (int epoch = 1; epoch <= spec.epochs; ++epoch) {
    std::vector<int> order = train_ids;
    for (int i = static_cast<int>(order.size()) - 1; i > 0; --i)
      std::swap(order[i], order[rng.integer(0, i)]);
    if (spec.lr_final > 0.0 && spec.epochs > 1) {
      const double t = static_cast<double>(epoch - 1) / (spec.epochs - 1);
      opt.lr = spec.lr_final + 0.5 * (spec.lr - spec.lr_final) * (1.0 + std::cos(M_PI * t));
    }
    ResidualReport acc;
    try {
      for (std::size_t k = 0; k < order.size(); k += spec.batch_size) {
        const std::size_t end = std::min(order.size(), k + spec.batch_size);
        const auto [in, cx] = gather(order, k, end);
        model.zero_grad();
        const BatchLoss bl = batch_objective(model, in, cx, Mode::train, true);
        accumulate(acc, bl.mean, static_cast<double>(end - k) / order.size());
        opt.step(model);
      }
      for (auto& p : model.params())
        if (!Eigen::Map<Eigen::VectorXf>(p.data, p.size()).allFinite())
          throw NonFiniteLoss("non-finite parameter " + p.name);
    } catch (const NonFiniteLoss& e) {
      save_checkpoint(out_dir, make_checkpoint(last_good, spec, sd, epoch - 1, totals, w, surgery));
      throw TrainingAborted(std::string("stage ") + spec.id + " aborted at epoch " +
                            std::to_string(epoch) + ": " + e.what() +
                            "; last good checkpoint written to " + out_dir.string());
    }
    EpochRecord r{epoch,           acc.loss_x,       acc.loss_y,        acc.loss_c,
                  acc.loss_residual, acc.loss_neumann, acc.loss_boundary, acc.total};
    rep.epochs.push_back(r);
    totals.push_back(r.total);
    last_good = model;
    if (telemetry)
      *telemetry << json{{"epoch", epoch},           {"loss_x", r.loss_x},
                         {"loss_y", r.loss_y},       {"loss_c", r.loss_c},
                         {"loss_neumann", r.loss_neumann}, {"loss_boundary", r.loss_boundary},
                         {"total", r.total},         {"lr", opt.lr}}
                        .dump()
                 << std::endl;
    if (r.total < rep.best_total) {
      rep.best_total = r.total;
      save_checkpoint(rep.best_checkpoint, make_checkpoint(model, spec, sd, epoch, totals, w, surgery));
    }
    if (epoch % spec.checkpoint_every == 0 || epoch == spec.epochs)
      save_checkpoint(out_dir, make_checkpoint(model, spec, sd, epoch, totals, w, surgery));
  }
  rep.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

std::vector<TrainReport> run_curriculum(std::vector<CurriculumStage> stages, std::ostream* telemetry) {
  std::vector<std::string> ids;
  for (const auto& s : stages) ids.push_back(s.spec.id);
  validate_curriculum_order(ids);
  std::map<std::string, std::filesystem::path> produced;
  std::vector<TrainReport> reports;
  for (auto& st : stages) {
    const std::string pred = stage_predecessor(st.spec.id);
    if (!pred.empty() && st.spec.source.empty()) {
      const auto it = produced.find(pred);
      if (it == produced.end())
        throw std::invalid_argument("stage " + st.spec.id + " needs a source checkpoint from " + pred);
      st.spec.source = it->second;
    }
    const Dataset data = load_dataset(st.data_dir);
    reports.push_back(train_stage(st.spec, data, st.out_dir, telemetry));
    produced[st.spec.id] = st.out_dir;
  }
  return reports;
}

}  // namespace nsgen
