#include "nsgen/unet.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace nsgen {

int ModelConfig::depth() const {
  int d = 0;
  for (int n = input_size; n > 1; n >>= 1) ++d;
  return d;
}

int ModelConfig::encoder_width(int k) const {
  long w = base_width;
  for (int i = 0; i < k && w < max_width; ++i) w *= 2;
  return static_cast<int>(std::min<long>(w, max_width));
}

void ModelConfig::validate() const {
  if (!is_power_of_two(input_size) || input_size < 8)
    throw ShapeError("input_size must be a power of two >= 8, got " +
                     std::to_string(input_size));
  if (in_channels != 3 && in_channels != 4)
    throw std::invalid_argument("in_channels must be 3 or 4");
  if (base_width < 1 || max_width < base_width)
    throw std::invalid_argument("invalid base_width / max_width");
  for (double s : channel_scales)
    if (!(s > 0.0)) throw std::invalid_argument("channel scales must be positive");
}

namespace {

constexpr int kTaps = 16;
constexpr int kThinInput = 4;

// 4x4 / stride 2 / pad 1 geometry between a (hb, wb) image and its (hb/2, wb/2)
// downsampled grid. Row (ch, ky, kx) of column (n, ys, xs) of `col` gathers
// channel ch of node (2ys - 1 + ky, 2xs - 1 + kx).
template <typename S>
void im2col(const Mat<S>& x, int batch, int hb, int wb, Mat<S>& col) {
  const int c = static_cast<int>(x.rows());
  const int hs = hb / 2;
  const int ws = wb / 2;
  col.setZero(static_cast<Eigen::Index>(kTaps) * c, static_cast<Eigen::Index>(batch) * hs * ws);
  for (int n = 0; n < batch; ++n) {
    for (int ys = 0; ys < hs; ++ys) {
      for (int xs = 0; xs < ws; ++xs) {
        S* dst = col.data() + (static_cast<Eigen::Index>(n) * hs * ws + ys * ws + xs) * col.rows();
        for (int ky = 0; ky < 4; ++ky) {
          const int yb = 2 * ys - 1 + ky;
          if (yb < 0 || yb >= hb) continue;
          for (int kx = 0; kx < 4; ++kx) {
            const int xb = 2 * xs - 1 + kx;
            if (xb < 0 || xb >= wb) continue;
            const S* src = x.data() + (static_cast<Eigen::Index>(n) * hb * wb + yb * wb + xb) * c;
            for (int k = 0; k < c; ++k) dst[k * kTaps + ky * 4 + kx] = src[k];
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatter-add columns back onto a (c, batch*hb*wb) image.
template <typename S>
void col2im(const Mat<S>& col, int c, int batch, int hb, int wb, Mat<S>& x) {
  const int hs = hb / 2;
  const int ws = wb / 2;
  x.setZero(c, static_cast<Eigen::Index>(batch) * hb * wb);
  for (int n = 0; n < batch; ++n) {
    for (int ys = 0; ys < hs; ++ys) {
      for (int xs = 0; xs < ws; ++xs) {
        const S* src =
            col.data() + (static_cast<Eigen::Index>(n) * hs * ws + ys * ws + xs) * col.rows();
        for (int ky = 0; ky < 4; ++ky) {
          const int yb = 2 * ys - 1 + ky;
          if (yb < 0 || yb >= hb) continue;
          for (int kx = 0; kx < 4; ++kx) {
            const int xb = 2 * xs - 1 + kx;
            if (xb < 0 || xb >= wb) continue;
            S* dst = x.data() + (static_cast<Eigen::Index>(n) * hb * wb + yb * wb + xb) * c;
            for (int k = 0; k < c; ++k) dst[k] += src[k * kTaps + ky * 4 + kx];
          }
        }
      }
    }
  }
}

template <typename S>
ConvLayer<S> make_conv(bool transposed, int cin, int cout, std::mt19937_64& rng) {
  ConvLayer<S> L;
  L.transposed = transposed;
  L.cin = cin;
  L.cout = cout;
  // Kaiming normal for leaky rectifiers. A stride-2 transposed conv feeds
  // each output node from 2x2 taps per input channel.
  const double fan_in = transposed ? 4.0 * cin : 16.0 * cin;
  const double gain = std::sqrt(2.0 / (1.0 + kLeakySlope * kLeakySlope));
  std::normal_distribution<double> dist(0.0, gain / std::sqrt(fan_in));
  if (transposed)
    L.weight.resize(static_cast<Eigen::Index>(kTaps) * cout, cin);
  else
    L.weight.resize(cout, static_cast<Eigen::Index>(kTaps) * cin);
  for (Eigen::Index k = 0; k < L.weight.size(); ++k) L.weight.data()[k] = static_cast<S>(dist(rng));
  std::uniform_real_distribution<double> bias_dist(-1.0 / std::sqrt(fan_in), 1.0 / std::sqrt(fan_in));
  L.bias.resize(cout);
  for (Eigen::Index k = 0; k < cout; ++k) L.bias[k] = static_cast<S>(bias_dist(rng));
  L.grad_weight = Mat<S>::Zero(L.weight.rows(), L.weight.cols());
  L.grad_bias = Vec<S>::Zero(cout);
  return L;
}

template <typename S>
NormLayer<S> make_norm(int c) {
  NormLayer<S> N;
  N.gamma = Vec<S>::Ones(c);
  N.beta = Vec<S>::Zero(c);
  N.running_mean = Vec<S>::Zero(c);
  N.running_var = Vec<S>::Ones(c);
  N.grad_gamma = Vec<S>::Zero(c);
  N.grad_beta = Vec<S>::Zero(c);
  return N;
}

template <typename S>
Mat<S> block_forward(const Block<S>& b, const Mat<S>& x, int batch, int side, Mode mode,
                     BlockCache<S>* cache, std::pair<Vec<S>, Vec<S>>* stats) {
  const ConvLayer<S>& L = b.conv;
  Mat<S> y;
  if (!L.transposed) {
    Mat<S> col;
    im2col(x, batch, side, side, col);
    if (L.cin <= kThinInput) {
      // One product per input channel, summed in channel order, so a trailing
      // zero-weight channel adds exact zeros.
      y.noalias() = L.weight.leftCols(kTaps) * col.topRows(kTaps);
      for (int c = 1; c < L.cin; ++c)
        y.noalias() += L.weight.middleCols(c * kTaps, kTaps) * col.middleRows(c * kTaps, kTaps);
    } else {
      y.noalias() = L.weight * col;
    }
    if (cache) cache->input = std::move(col);
  } else {
    Mat<S> col;
    col.noalias() = L.weight * x;
    col2im(col, L.cout, batch, 2 * side, 2 * side, y);
    if (cache) cache->input = x;
  }
  y.colwise() += L.bias;

  if (b.norm) {
    const NormLayer<S>& N = *b.norm;
    Vec<S> mean, var;
    if (mode == Mode::train) {
      mean = y.rowwise().mean();
      y.colwise() -= mean;
      var = y.array().square().rowwise().mean().matrix();
    } else {
      mean = N.running_mean;
      var = N.running_var;
      y.colwise() -= mean;
    }
    const Vec<S> inv_std = (var.array() + static_cast<S>(kNormEps)).rsqrt().matrix();
    y = inv_std.asDiagonal() * y;
    if (cache) {
      cache->xhat = y;
      cache->inv_std = inv_std;
    }
    y = N.gamma.asDiagonal() * y;
    y.colwise() += N.beta;
    if (stats) *stats = {mean, var};
  }

  if (b.act == Activation::leaky_relu) {
    const S slope = static_cast<S>(kLeakySlope);
    y = y.unaryExpr([slope](S v) { return v > S(0) ? v : slope * v; });
  } else {
    y = y.array().tanh().matrix();
  }
  if (cache) cache->out = y;
  return y;
}

// Returns d(loss)/d(block input); skipped (empty) when `need_input_grad` is false.
template <typename S>
Mat<S> block_backward(Block<S>& b, const BlockCache<S>& cache, Mat<S> g, int batch, int side,
                      Mode mode, bool need_input_grad) {
  if (b.act == Activation::leaky_relu) {
    const S slope = static_cast<S>(kLeakySlope);
    g.array() *= cache.out.array().unaryExpr([slope](S v) { return v > S(0) ? S(1) : slope; });
  } else {
    g.array() *= S(1) - cache.out.array().square();
  }

  if (b.norm) {
    NormLayer<S>& N = *b.norm;
    N.grad_beta += g.rowwise().sum();
    N.grad_gamma += (g.array() * cache.xhat.array()).rowwise().sum().matrix();
    Mat<S> dxhat = N.gamma.asDiagonal() * g;
    if (mode == Mode::train) {
      const S P = static_cast<S>(g.cols());
      const Vec<S> sum_d = dxhat.rowwise().sum();
      const Vec<S> sum_dx = (dxhat.array() * cache.xhat.array()).rowwise().sum().matrix();
      dxhat.colwise() -= sum_d / P;
      dxhat -= (sum_dx / P).asDiagonal() * cache.xhat;
    }
    g = cache.inv_std.asDiagonal() * dxhat;
  }

  ConvLayer<S>& L = b.conv;
  L.grad_bias += g.rowwise().sum();
  if (!L.transposed) {
    L.grad_weight.noalias() += g * cache.input.transpose();
    if (!need_input_grad) return {};
    Mat<S> dcol;
    dcol.noalias() = L.weight.transpose() * g;
    Mat<S> dx;
    col2im(dcol, L.cin, batch, side, side, dx);
    return dx;
  }
  Mat<S> dcol;
  im2col(g, batch, 2 * side, 2 * side, dcol);
  L.grad_weight.noalias() += dcol * cache.input.transpose();
  if (!need_input_grad) return {};
  Mat<S> dx;
  dx.noalias() = L.weight.transpose() * dcol;
  return dx;
}

template <typename S, typename T>
Block<T> cast_block(const Block<S>& b) {
  Block<T> o;
  o.act = b.act;
  o.conv.transposed = b.conv.transposed;
  o.conv.cin = b.conv.cin;
  o.conv.cout = b.conv.cout;
  o.conv.weight = b.conv.weight.template cast<T>();
  o.conv.bias = b.conv.bias.template cast<T>();
  o.conv.grad_weight = Mat<T>::Zero(b.conv.weight.rows(), b.conv.weight.cols());
  o.conv.grad_bias = Vec<T>::Zero(b.conv.bias.size());
  if (b.norm) {
    NormLayer<T> n;
    n.gamma = b.norm->gamma.template cast<T>();
    n.beta = b.norm->beta.template cast<T>();
    n.running_mean = b.norm->running_mean.template cast<T>();
    n.running_var = b.norm->running_var.template cast<T>();
    n.grad_gamma = Vec<T>::Zero(n.gamma.size());
    n.grad_beta = Vec<T>::Zero(n.beta.size());
    o.norm = std::move(n);
  }
  return o;
}

}  // namespace

template <typename S>
UNet<S>::UNet(const ModelConfig& config) : config_(config) {
  config_.validate();
  const int D = config_.depth();
  std::mt19937_64 rng(config_.seed);
  for (int k = 0; k < D; ++k) {
    Block<S> b;
    const int cin = k == 0 ? config_.in_channels : config_.encoder_width(k - 1);
    b.conv = make_conv<S>(false, cin, config_.encoder_width(k), rng);
    if (k > 0) b.norm = make_norm<S>(config_.encoder_width(k));
    enc_.push_back(std::move(b));
  }
  for (int j = 0; j < D; ++j) {
    Block<S> b;
    const int skip = config_.encoder_width(D - 1 - j);
    const int cin = j == 0 ? skip : 2 * skip;
    const bool last = j == D - 1;
    const int cout = last ? 3 : config_.encoder_width(D - 2 - j);
    b.conv = make_conv<S>(true, cin, cout, rng);
    if (!last) b.norm = make_norm<S>(cout);
    b.act = last ? Activation::tanh : Activation::leaky_relu;
    dec_.push_back(std::move(b));
  }
}

template <typename S>
Mat<S> UNet<S>::run(const Mat<S>& x, int batch, Mode mode, ForwardCache<S>* cache,
                    std::vector<std::pair<Vec<S>, Vec<S>>>* batch_stats) const {
  const int a = config_.input_size;
  const int D = depth();
  if (x.rows() != config_.in_channels)
    throw ShapeError("expected " + std::to_string(config_.in_channels) + " input channels, got " +
                     std::to_string(x.rows()));
  if (batch < 1 || x.cols() != static_cast<Eigen::Index>(batch) * a * a)
    throw ShapeError("input does not match a batch of " + std::to_string(a) + "x" +
                     std::to_string(a) + " fields");
  if (cache) {
    cache->batch = batch;
    cache->mode = mode;
    cache->enc.assign(D, {});
    cache->dec.assign(D, {});
  }
  if (batch_stats) batch_stats->assign(2 * D, {});

  std::vector<Mat<S>> skips(D);
  const Mat<S>* h = &x;
  for (int k = 0; k < D; ++k) {
    skips[k] = block_forward(enc_[k], *h, batch, a >> k, mode, cache ? &cache->enc[k] : nullptr,
                             batch_stats ? &(*batch_stats)[k] : nullptr);
    h = &skips[k];
  }
  Mat<S> cur = skips[D - 1];
  for (int j = 0; j < D; ++j) {
    Mat<S> in;
    if (j == 0) {
      in = std::move(cur);
    } else {
      const Mat<S>& skip = skips[D - 1 - j];
      in.resize(cur.rows() + skip.rows(), cur.cols());
      in.topRows(cur.rows()) = cur;
      in.bottomRows(skip.rows()) = skip;
    }
    cur = block_forward(dec_[j], in, batch, 1 << j, mode, cache ? &cache->dec[j] : nullptr,
                        batch_stats ? &(*batch_stats)[D + j] : nullptr);
  }
  for (int c = 0; c < 3; ++c) cur.row(c) *= static_cast<S>(config_.channel_scales[c]);
  return cur;
}

template <typename S>
Mat<S> UNet<S>::forward(const Mat<S>& x, int batch, Mode mode, ForwardCache<S>* cache) {
  if (mode == Mode::inference) return run(x, batch, mode, cache, nullptr);
  std::vector<std::pair<Vec<S>, Vec<S>>> stats;
  Mat<S> out = run(x, batch, mode, cache, &stats);
  const S m = static_cast<S>(kNormMomentum);
  const int D = depth();
  for (int b = 0; b < 2 * D; ++b) {
    Block<S>& blk = b < D ? enc_[b] : dec_[b - D];
    if (!blk.norm) continue;
    const auto& [mean, var] = stats[b];
    const long side = b < D ? (config_.input_size >> (b + 1)) : (2L << (b - D));
    const S count = static_cast<S>(static_cast<long>(batch) * side * side);
    const S unbias = count > S(1) ? count / (count - S(1)) : S(1);
    blk.norm->running_mean = (S(1) - m) * blk.norm->running_mean + m * mean;
    blk.norm->running_var = (S(1) - m) * blk.norm->running_var + m * unbias * var;
  }
  return out;
}

template <typename S>
Mat<S> UNet<S>::infer(const Mat<S>& x, int batch) const {
  return run(x, batch, Mode::inference, nullptr, nullptr);
}

template <typename S>
void UNet<S>::backward(const ForwardCache<S>& cache, const Mat<S>& grad_out) {
  const int D = depth();
  const int batch = cache.batch;
  if (static_cast<int>(cache.enc.size()) != D || static_cast<int>(cache.dec.size()) != D)
    throw std::logic_error("backward needs a cache from forward");
  Mat<S> g = grad_out;
  for (int c = 0; c < 3; ++c) g.row(c) *= static_cast<S>(config_.channel_scales[c]);

  std::vector<Mat<S>> skip_grad(D);
  for (int j = D - 1; j >= 0; --j) {
    Mat<S> gin = block_backward(dec_[j], cache.dec[j], std::move(g), batch, 1 << j, cache.mode,
                                true);
    if (j == 0) {
      skip_grad[D - 1] = std::move(gin);
    } else {
      const Eigen::Index prev = dec_[j - 1].conv.cout;
      skip_grad[D - 1 - j] = gin.bottomRows(gin.rows() - prev);
      g = gin.topRows(prev);
    }
  }
  Mat<S> ge = std::move(skip_grad[D - 1]);
  for (int k = D - 1; k >= 0; --k) {
    if (k < D - 1) ge += skip_grad[k];
    ge = block_backward(enc_[k], cache.enc[k], std::move(ge), batch, config_.input_size >> k,
                        cache.mode, k > 0);
  }
}

template <typename S>
void UNet<S>::zero_grad() {
  for (auto* blocks : {&enc_, &dec_}) {
    for (auto& b : *blocks) {
      b.conv.grad_weight.setZero();
      b.conv.grad_bias.setZero();
      if (b.norm) {
        b.norm->grad_gamma.setZero();
        b.norm->grad_beta.setZero();
      }
    }
  }
}

template <typename S>
std::vector<ParamRef<S>> UNet<S>::params() {
  std::vector<ParamRef<S>> out;
  auto add_block = [&out](const std::string& prefix, Block<S>& b) {
    out.push_back({prefix + ".conv.weight", b.conv.weight.data(), b.conv.grad_weight.data(),
                   b.conv.weight.rows(), b.conv.weight.cols()});
    out.push_back({prefix + ".conv.bias", b.conv.bias.data(), b.conv.grad_bias.data(),
                   b.conv.bias.size(), 1});
    if (b.norm) {
      auto& n = *b.norm;
      out.push_back({prefix + ".norm.weight", n.gamma.data(), n.grad_gamma.data(), n.gamma.size(), 1});
      out.push_back({prefix + ".norm.bias", n.beta.data(), n.grad_beta.data(), n.beta.size(), 1});
      out.push_back({prefix + ".norm.running_mean", n.running_mean.data(), nullptr,
                     n.running_mean.size(), 1});
      out.push_back({prefix + ".norm.running_var", n.running_var.data(), nullptr,
                     n.running_var.size(), 1});
    }
  };
  for (std::size_t k = 0; k < enc_.size(); ++k) add_block("enc" + std::to_string(k), enc_[k]);
  for (std::size_t j = 0; j < dec_.size(); ++j) add_block("dec" + std::to_string(j), dec_[j]);
  return out;
}

template <typename S>
long UNet<S>::parameter_count() const {
  long n = 0;
  for (const auto* blocks : {&enc_, &dec_}) {
    for (const auto& b : *blocks) {
      n += b.conv.weight.size() + b.conv.bias.size();
      if (b.norm) n += b.norm->gamma.size() + b.norm->beta.size();
    }
  }
  return n;
}

template <typename S>
template <typename T>
UNet<T> UNet<S>::cast() const {
  UNet<T> o;
  o.config_ = config_;
  for (const auto& b : enc_) o.enc_.push_back(cast_block<S, T>(b));
  for (const auto& b : dec_) o.dec_.push_back(cast_block<S, T>(b));
  return o;
}

template class UNet<float>;
template class UNet<double>;
template UNet<double> UNet<float>::cast<double>() const;
template UNet<float> UNet<double>::cast<float>() const;
template UNet<float> UNet<float>::cast<float>() const;
template UNet<double> UNet<double>::cast<double>() const;

// ---------------------------------------------------------------------------

template <typename S>
Mat<S> pack_inputs(const std::vector<const InputTensor*>& inputs) {
  if (inputs.empty()) throw ShapeError("empty batch");
  const int c = inputs.front()->channel_count();
  const int ny = inputs.front()->grid.ny;
  const int nx = inputs.front()->grid.nx;
  const Eigen::Index area = static_cast<Eigen::Index>(ny) * nx;
  Mat<S> x(c, area * static_cast<Eigen::Index>(inputs.size()));
  for (std::size_t s = 0; s < inputs.size(); ++s) {
    const InputTensor& t = *inputs[s];
    if (t.channel_count() != c || t.grid.ny != ny || t.grid.nx != nx)
      throw ShapeError("inconsistent input shapes in batch");
    for (int ch = 0; ch < c; ++ch) {
      const auto& a = t.channels[ch];
      if (a.rows() != ny || a.cols() != nx) throw ShapeError("channel shape mismatch");
      for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i)
          x(ch, static_cast<Eigen::Index>(s) * area + j * nx + i) = static_cast<S>(a(j, i));
    }
  }
  return x;
}

template <typename S>
FlowField<S> unpack_output(const Mat<S>& out, int index, const GridSpec& grid) {
  FlowField<S> f = FlowField<S>::zeros(grid);
  const Eigen::Index area = static_cast<Eigen::Index>(grid.ny) * grid.nx;
  for (Var v : kAllVars) {
    auto& a = f[v];
    const int c = static_cast<int>(v);
    for (int j = 0; j < grid.ny; ++j)
      for (int i = 0; i < grid.nx; ++i) a(j, i) = out(c, index * area + j * grid.nx + i);
  }
  return f;
}

template <typename S>
void overwrite_dirichlet(const BoundaryLayout& layout, FlowField<S>& f) {
  for (Var v : kAllVars) {
    const int c = static_cast<int>(v);
    f[v] = (layout.dirichlet[c] != 0).select(layout.values[c].template cast<S>(), f[v]);
  }
}

template Mat<float> pack_inputs<float>(const std::vector<const InputTensor*>&);
template Mat<double> pack_inputs<double>(const std::vector<const InputTensor*>&);
template FlowField<float> unpack_output<float>(const Mat<float>&, int, const GridSpec&);
template FlowField<double> unpack_output<double>(const Mat<double>&, int, const GridSpec&);
template void overwrite_dirichlet<float>(const BoundaryLayout&, FlowField<float>&);
template void overwrite_dirichlet<double>(const BoundaryLayout&, FlowField<double>&);

FlowField<double> predict(const UNet<float>& model, const InputTensor& input) {
  const auto& cfg = model.config();
  if (input.grid.nx != cfg.input_size || input.grid.ny != cfg.input_size)
    throw ShapeError("input size " + std::to_string(input.grid.nx) + " does not match model size " +
                     std::to_string(cfg.input_size));
  const Mat<float> out = model.infer(pack_inputs<float>({&input}), 1);
  FlowField<double> f = unpack_output(out, 0, input.grid).cast<double>();
  GeometryMask mask;
  const GeometryMask* mp = nullptr;
  if (!input.shapes.empty()) {
    mask = rasterize_obstacles(input.shapes, input.grid);
    mp = &mask;
  }
  overwrite_dirichlet(make_layout(input.bc, input.grid, mp), f);
  return f;
}

// ---------------------------------------------------------------------------

UNet<float> transfer_expand_channels(const UNet<float>& src, int new_in_channels) {
  const int cin = src.config().in_channels;
  if (new_in_channels != cin + 1)
    throw std::invalid_argument("expand_channels supports exactly one added channel (" +
                                std::to_string(cin) + " -> " + std::to_string(cin + 1) +
                                "), got " + std::to_string(new_in_channels));
  UNet<float> out = src.cast<float>();
  out.config_.in_channels = new_in_channels;
  ConvLayer<float>& L = out.enc_.front().conv;
  Mat<float> w = Mat<float>::Zero(L.cout, static_cast<Eigen::Index>(kTaps) * new_in_channels);
  w.leftCols(static_cast<Eigen::Index>(kTaps) * cin) = L.weight;
  L.weight = std::move(w);
  L.cin = new_in_channels;
  L.grad_weight = Mat<float>::Zero(L.weight.rows(), L.weight.cols());
  return out;
}

UNet<float> transfer_expand_depth(const UNet<float>& src, int new_size, int copy_blocks,
                                  DepthTransfer* info) {
  const int a = src.config().input_size;
  if (new_size != 2 * a)
    throw std::invalid_argument("expand_depth requires new_size = 2 x " + std::to_string(a) +
                                ", got " + std::to_string(new_size));
  const int D = src.depth();
  const int k = copy_blocks < 0 ? D - 1 : copy_blocks;
  if (k > D) throw std::invalid_argument("copy_blocks exceeds source depth");
  ModelConfig cfg = src.config();
  cfg.input_size = new_size;
  UNet<float> out(cfg);
  auto& enc = out.encoder();
  auto& dec = out.decoder();
  const int D2 = out.depth();
  DepthTransfer t;
  t.copied_blocks = k;
  auto same_shape = [](const Block<float>& x, const Block<float>& y) {
    return x.conv.weight.rows() == y.conv.weight.rows() &&
           x.conv.weight.cols() == y.conv.weight.cols() && x.norm.has_value() == y.norm.has_value();
  };
  for (int i = 0; i < k; ++i) {
    if (same_shape(enc[i], src.encoder()[i])) {
      enc[i] = src.encoder()[i];
      t.mapping.emplace_back("enc" + std::to_string(i), "enc" + std::to_string(i));
    }
    const int jn = D2 - 1 - i;
    const int js = D - 1 - i;
    if (same_shape(dec[jn], src.decoder()[js])) {
      dec[jn] = src.decoder()[js];
      t.mapping.emplace_back("dec" + std::to_string(jn), "dec" + std::to_string(js));
    }
  }
  out.zero_grad();
  if (info) *info = std::move(t);
  return out;
}

}  // namespace nsgen
