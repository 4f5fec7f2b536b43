#include "mmsense/transdope.hpp"

#include <cmath>
#include <sstream>

#include "mmsense/rng.hpp"

namespace mmsense::transdope {

namespace {

constexpr double kLayerNormEps = 1e-5;

using FloatMap = Eigen::Map<const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

void require_finite(const Matrix& m, const char* stage) {
  if (!m.allFinite()) throw Error(std::string("non-finite values after ") + stage);
}

void require_size(std::size_t got, std::size_t want, const char* what) {
  if (got != want) {
    std::ostringstream os;
    os << what << " has " << got << " values, model expects " << want;
    throw Error(os.str());
  }
}

// --- 2-D convolution -------------------------------------------------------

Matrix frame_input(std::span<const float> frame, const TransDopeConfig& cfg) {
  require_size(frame.size(), cfg.frame_size(), "frame");
  FloatMap raw(frame.data(), static_cast<Eigen::Index>(cfg.range_bins) * cfg.doppler_bins, cfg.channels);
  if (!raw.allFinite()) throw Error("non-finite values in the input frame");
  return raw.cast<double>() * cfg.effective_input_scale();
}

// in is (H*W) x C; returns (H*W) x (9*C).
Matrix im2col(const Matrix& in, int H, int W) {
  const auto C = in.cols();
  Matrix cols = Matrix::Zero(static_cast<Eigen::Index>(H) * W, kConvKernel * kConvKernel * C);
  for (int h = 0; h < H; ++h) {
    for (int w = 0; w < W; ++w) {
      const Eigen::Index row = static_cast<Eigen::Index>(h) * W + w;
      for (int kh = 0; kh < kConvKernel; ++kh) {
        const int hh = h + kh - 1;
        if (hh < 0 || hh >= H) continue;
        for (int kw = 0; kw < kConvKernel; ++kw) {
          const int ww = w + kw - 1;
          if (ww < 0 || ww >= W) continue;
          cols.block(row, (kh * kConvKernel + kw) * C, 1, C) =
              in.row(static_cast<Eigen::Index>(hh) * W + ww);
        }
      }
    }
  }
  return cols;
}

void col2im_add(const Matrix& dcols, int H, int W, Matrix& din) {
  const auto C = din.cols();
  for (int h = 0; h < H; ++h) {
    for (int w = 0; w < W; ++w) {
      const Eigen::Index row = static_cast<Eigen::Index>(h) * W + w;
      for (int kh = 0; kh < kConvKernel; ++kh) {
        const int hh = h + kh - 1;
        if (hh < 0 || hh >= H) continue;
        for (int kw = 0; kw < kConvKernel; ++kw) {
          const int ww = w + kw - 1;
          if (ww < 0 || ww >= W) continue;
          din.row(static_cast<Eigen::Index>(hh) * W + ww) +=
              dcols.block(row, (kh * kConvKernel + kw) * C, 1, C);
        }
      }
    }
  }
}

struct ConvCache {
  Matrix cols;
  Matrix pre;
};

Matrix conv_forward(const Matrix& in, int H, int W, const Conv2d& conv, ConvCache* cache) {
  Matrix cols = im2col(in, H, W);
  Matrix pre = cols * conv.weight;
  pre.rowwise() += conv.bias;
  Matrix out = pre.cwiseMax(0.0);
  if (cache != nullptr) {
    cache->cols = std::move(cols);
    cache->pre = std::move(pre);
  }
  return out;
}

Matrix relu_backward(const Matrix& dout, const Matrix& pre) {
  return (dout.array() * (pre.array() > 0.0).cast<double>()).matrix();
}

Matrix conv_backward(const Matrix& dout, int H, int W, const Conv2d& conv, const ConvCache& cache,
                     Conv2d& grad, bool want_input_grad) {
  const Matrix dpre = relu_backward(dout, cache.pre);
  grad.weight.noalias() += cache.cols.transpose() * dpre;
  grad.bias += dpre.colwise().sum();
  if (!want_input_grad) return {};
  const Matrix dcols = dpre * conv.weight.transpose();
  Matrix din = Matrix::Zero(static_cast<Eigen::Index>(H) * W, conv.weight.rows() / (kConvKernel * kConvKernel));
  col2im_add(dcols, H, W, din);
  return din;
}

// --- 2x2 max pooling -------------------------------------------------------

struct PoolCache {
  std::vector<Eigen::Index> argmax;  // input row per output element
};

Matrix maxpool_forward(const Matrix& in, int H, int W, PoolCache* cache) {
  const int Ho = H / 2, Wo = W / 2;
  const auto C = in.cols();
  Matrix out(static_cast<Eigen::Index>(Ho) * Wo, C);
  if (cache != nullptr) cache->argmax.resize(static_cast<std::size_t>(out.size()));
  for (int ho = 0; ho < Ho; ++ho) {
    for (int wo = 0; wo < Wo; ++wo) {
      const Eigen::Index orow = static_cast<Eigen::Index>(ho) * Wo + wo;
      const Eigen::Index r00 = static_cast<Eigen::Index>(2 * ho) * W + 2 * wo;
      const Eigen::Index rows[4] = {r00, r00 + 1, r00 + W, r00 + W + 1};
      for (Eigen::Index c = 0; c < C; ++c) {
        Eigen::Index best = rows[0];
        for (int k = 1; k < 4; ++k) {
          if (in(rows[k], c) > in(best, c)) best = rows[k];
        }
        out(orow, c) = in(best, c);
        if (cache != nullptr) cache->argmax[static_cast<std::size_t>(orow * C + c)] = best;
      }
    }
  }
  return out;
}

Matrix maxpool_backward(const Matrix& dout, int H, int W, const PoolCache& cache) {
  const auto C = dout.cols();
  Matrix din = Matrix::Zero(static_cast<Eigen::Index>(H) * W, C);
  for (Eigen::Index r = 0; r < dout.rows(); ++r) {
    for (Eigen::Index c = 0; c < C; ++c) {
      din(cache.argmax[static_cast<std::size_t>(r * C + c)], c) += dout(r, c);
    }
  }
  return din;
}

// --- time convolution stack ------------------------------------------------

struct FrameCache {
  ConvCache conv1, conv2;
  PoolCache pool1, pool2;
};

Matrix frame_stack(std::span<const float> frame, const TransDopeConfig& cfg, const Conv2d& conv1,
                   const Conv2d& conv2, FrameCache* cache) {
  const int H = cfg.range_bins, W = cfg.doppler_bins;
  const Matrix x = frame_input(frame, cfg);
  const Matrix a1 = conv_forward(x, H, W, conv1, cache ? &cache->conv1 : nullptr);
  const Matrix p1 = maxpool_forward(a1, H, W, cache ? &cache->pool1 : nullptr);
  const Matrix a2 = conv_forward(p1, H / 2, W / 2, conv2, cache ? &cache->conv2 : nullptr);
  return maxpool_forward(a2, H / 2, W / 2, cache ? &cache->pool2 : nullptr);
}

void frame_stack_backward(const Matrix& dpooled, const TransDopeConfig& cfg, const Conv2d& conv1,
                          const Conv2d& conv2, const FrameCache& cache, Conv2d& grad1, Conv2d& grad2) {
  const int H = cfg.range_bins, W = cfg.doppler_bins;
  const Matrix da2 = maxpool_backward(dpooled, H / 2, W / 2, cache.pool2);
  const Matrix dp1 = conv_backward(da2, H / 2, W / 2, conv2, cache.conv2, grad2, true);
  const Matrix da1 = maxpool_backward(dp1, H, W, cache.pool1);
  conv_backward(da1, H, W, conv1, cache.conv1, grad1, false);
}

RowVector flatten(const Matrix& m) {
  return Eigen::Map<const RowVector>(m.data(), m.size());
}

Matrix unflatten(const RowVector& v, Eigen::Index rows, Eigen::Index cols) {
  return Eigen::Map<const Matrix>(v.data(), rows, cols);
}

// --- dense pieces ----------------------------------------------------------

Matrix linear(const Matrix& x, const Linear& l) {
  Matrix y = x * l.weight;
  y.rowwise() += l.bias;
  return y;
}

Matrix linear_backward(const Matrix& dy, const Matrix& x, const Linear& l, Linear& g) {
  g.weight.noalias() += x.transpose() * dy;
  g.bias += dy.colwise().sum();
  return dy * l.weight.transpose();
}

struct NormCache {
  Matrix xhat;
  Eigen::VectorXd inv_std;
};

Matrix layer_norm(const Matrix& x, const LayerNorm& ln, NormCache* cache) {
  const Eigen::VectorXd mean = x.rowwise().mean();
  const Matrix centered = x.colwise() - mean;
  const Eigen::VectorXd var = centered.array().square().rowwise().mean().matrix();
  const Eigen::VectorXd inv = (var.array() + kLayerNormEps).rsqrt().matrix();
  Matrix xhat = (centered.array().colwise() * inv.array()).matrix();
  Matrix y = (xhat.array().rowwise() * ln.gamma.array()).matrix();
  y.rowwise() += ln.beta;
  if (cache != nullptr) {
    cache->xhat = std::move(xhat);
    cache->inv_std = inv;
  }
  return y;
}

Matrix layer_norm_backward(const Matrix& dy, const LayerNorm& ln, const NormCache& c, LayerNorm& g) {
  g.gamma += (dy.array() * c.xhat.array()).colwise().sum().matrix();
  g.beta += dy.colwise().sum();
  const Matrix dxhat = (dy.array().rowwise() * ln.gamma.array()).matrix();
  const Eigen::VectorXd m1 = dxhat.rowwise().mean();
  const Eigen::VectorXd m2 = (dxhat.array() * c.xhat.array()).rowwise().mean().matrix();
  Matrix dx = dxhat.colwise() - m1;
  dx -= (c.xhat.array().colwise() * m2.array()).matrix();
  return (dx.array().colwise() * c.inv_std.array()).matrix();
}

void softmax_rows(Matrix& s) {
  const Eigen::VectorXd row_max = s.rowwise().maxCoeff();
  s.colwise() -= row_max;
  s = s.array().exp().matrix();
  const Eigen::VectorXd row_sum = s.rowwise().sum();
  s = (s.array().colwise() / row_sum.array()).matrix();
}

struct AttentionCache {
  Matrix q, k, v;
  std::vector<Matrix> weights;
  Matrix context;
};

Matrix attention_forward(const Matrix& h, const EncoderLayer& layer, int heads, AttentionCache* cache,
                         std::vector<Matrix>* attention) {
  const Matrix q = linear(h, layer.query);
  const Matrix k = linear(h, layer.key);
  const Matrix v = linear(h, layer.value);
  const auto T = h.rows();
  const auto dh = h.cols() / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  Matrix context(T, h.cols());
  if (attention != nullptr) attention->clear();
  if (cache != nullptr) cache->weights.clear();
  for (int head = 0; head < heads; ++head) {
    const auto off = head * dh;
    Matrix scores = (q.middleCols(off, dh) * k.middleCols(off, dh).transpose()) * scale;
    softmax_rows(scores);
    context.middleCols(off, dh) = scores * v.middleCols(off, dh);
    if (attention != nullptr) attention->push_back(scores);
    if (cache != nullptr) cache->weights.push_back(std::move(scores));
  }
  Matrix out = linear(context, layer.output);
  if (cache != nullptr) {
    cache->q = q;
    cache->k = k;
    cache->v = v;
    cache->context = std::move(context);
  }
  return out;
}

Matrix attention_backward(const Matrix& dout, const Matrix& h, const EncoderLayer& layer,
                          const AttentionCache& c, EncoderLayer& g, int heads) {
  const Matrix dcontext = linear_backward(dout, c.context, layer.output, g.output);
  const auto dh = h.cols() / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  Matrix dq(h.rows(), h.cols()), dk(h.rows(), h.cols()), dv(h.rows(), h.cols());
  for (int head = 0; head < heads; ++head) {
    const auto off = head * dh;
    const Matrix& a = c.weights[static_cast<std::size_t>(head)];
    const auto dctx = dcontext.middleCols(off, dh);
    const Matrix da = dctx * c.v.middleCols(off, dh).transpose();
    dv.middleCols(off, dh) = a.transpose() * dctx;
    const Eigen::VectorXd row_dot = (da.array() * a.array()).rowwise().sum().matrix();
    const Matrix ds = ((da.colwise() - row_dot).array() * a.array()).matrix() * scale;
    dq.middleCols(off, dh) = ds * c.k.middleCols(off, dh);
    dk.middleCols(off, dh) = ds.transpose() * c.q.middleCols(off, dh);
  }
  Matrix dh_total = linear_backward(dq, h, layer.query, g.query);
  dh_total += linear_backward(dk, h, layer.key, g.key);
  dh_total += linear_backward(dv, h, layer.value, g.value);
  return dh_total;
}

// Rows of the result are [x[t-half] .. x[t+half]], zero outside the sequence.
Matrix token_im2col(const Matrix& x, int kernel) {
  const auto T = x.rows(), d = x.cols();
  const int half = kernel / 2;
  Matrix cols = Matrix::Zero(T, kernel * d);
  for (Eigen::Index t = 0; t < T; ++t) {
    for (int k = 0; k < kernel; ++k) {
      const auto src = t + k - half;
      if (src < 0 || src >= T) continue;
      cols.block(t, k * d, 1, d) = x.row(src);
    }
  }
  return cols;
}

void token_col2im_add(const Matrix& dcols, int kernel, Matrix& dx) {
  const auto T = dx.rows(), d = dx.cols();
  const int half = kernel / 2;
  for (Eigen::Index t = 0; t < T; ++t) {
    for (int k = 0; k < kernel; ++k) {
      const auto src = t + k - half;
      if (src < 0 || src >= T) continue;
      dx.row(src) += dcols.block(t, k * d, 1, d);
    }
  }
}

struct EncoderCache {
  NormCache norm1, norm2;
  Matrix h1;
  AttentionCache attention;
  Matrix cols, pre;
};

Matrix encoder_forward(const Matrix& x, const EncoderLayer& layer, const TransDopeConfig& cfg,
                       EncoderCache* cache, std::vector<Matrix>* attention) {
  Matrix h1 = layer_norm(x, layer.norm1, cache ? &cache->norm1 : nullptr);
  const Matrix y = x + attention_forward(h1, layer, cfg.heads, cache ? &cache->attention : nullptr, attention);
  const Matrix h2 = layer_norm(y, layer.norm2, cache ? &cache->norm2 : nullptr);
  Matrix cols = token_im2col(h2, cfg.ffn_kernel);
  Matrix pre = linear(cols, layer.token_conv);
  Matrix out = y + pre.cwiseMax(0.0);
  if (cache != nullptr) {
    cache->h1 = std::move(h1);
    cache->cols = std::move(cols);
    cache->pre = std::move(pre);
  }
  return out;
}

Matrix encoder_backward(const Matrix& dout, const EncoderLayer& layer, const TransDopeConfig& cfg,
                        const EncoderCache& c, EncoderLayer& g) {
  const Matrix dpre = relu_backward(dout, c.pre);
  const Matrix dcols = linear_backward(dpre, c.cols, layer.token_conv, g.token_conv);
  Matrix dh2 = Matrix::Zero(dout.rows(), dout.cols());
  token_col2im_add(dcols, cfg.ffn_kernel, dh2);
  const Matrix dy = dout + layer_norm_backward(dh2, layer.norm2, c.norm2, g.norm2);
  const Matrix dh1 = attention_backward(dy, c.h1, layer, c.attention, g, cfg.heads);
  return dy + layer_norm_backward(dh1, layer.norm1, c.norm1, g.norm1);
}

struct ModelCache {
  std::vector<FrameCache> frames;
  Matrix features;
  std::vector<EncoderCache> layers;
  RowVector pooled;
};

double logit_from_features(const Matrix& features, const TransDopeModel& model, ModelCache* cache) {
  Matrix x = embed_tokens(features, model);
  require_finite(x, "token embedding");
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    x = encoder_forward(x, model.layers[i], model.config, cache ? &cache->layers[i] : nullptr, nullptr);
    require_finite(x, "encoder layer");
  }
  const RowVector pooled = x.colwise().mean();
  const double logit = (pooled * model.head.weight)(0, 0) + model.head.bias(0);
  if (!std::isfinite(logit)) throw Error("non-finite output logit");
  if (cache != nullptr) cache->pooled = pooled;
  return logit;
}

// --- initialization --------------------------------------------------------

void init_weight(Matrix& w, Eigen::Index fan_in, Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  w.resize(rows, cols);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = rng.uniform(-bound, bound);
}

Conv2d make_conv(int in, int out, Rng& rng) {
  Conv2d c;
  const int fan_in = kConvKernel * kConvKernel * in;
  init_weight(c.weight, fan_in, fan_in, out, rng);
  c.bias = RowVector::Zero(out);
  return c;
}

Linear make_linear(int in, int out, Rng& rng) {
  Linear l;
  init_weight(l.weight, in, in, out, rng);
  l.bias = RowVector::Zero(out);
  return l;
}

LayerNorm make_norm(int d) { return {RowVector::Ones(d), RowVector::Zero(d)}; }

void zero(Matrix& m) { m.setZero(); }
void zero(RowVector& v) { v.setZero(); }
void zero(Conv2d& c) { zero(c.weight); zero(c.bias); }
void zero(Linear& l) { zero(l.weight); zero(l.bias); }

template <typename M>
void add_ref(std::vector<ParamRef>& out, std::string name, M& m) {
  out.push_back({std::move(name), m.data(), static_cast<std::size_t>(m.size())});
}

void add_conv(std::vector<ParamRef>& out, const std::string& name, Conv2d& c) {
  add_ref(out, name + ".weight", c.weight);
  add_ref(out, name + ".bias", c.bias);
}

void add_linear(std::vector<ParamRef>& out, const std::string& name, Linear& l) {
  add_ref(out, name + ".weight", l.weight);
  add_ref(out, name + ".bias", l.bias);
}

}  // namespace

void TransDopeConfig::validate() const {
  std::ostringstream why;
  if (seq_len < 1) why << "seq_len must be >= 1";
  else if (range_bins < 4 || range_bins % 4 != 0) why << "range_bins must be a positive multiple of 4";
  else if (doppler_bins < 4 || doppler_bins % 4 != 0) why << "doppler_bins must be a positive multiple of 4";
  else if (channels < 1) why << "channels must be >= 1";
  else if (conv_filters < 1) why << "conv_filters must be >= 1";
  else if (embed_dim < 1 || heads < 1 || embed_dim % heads != 0) why << "embed_dim must be divisible by heads";
  else if (encoder_layers < 0) why << "encoder_layers must be >= 0";
  else if (ffn_kernel < 1 || ffn_kernel % 2 == 0) why << "ffn_kernel must be odd";
  else if (!(input_scale >= 0.0) || !std::isfinite(input_scale)) why << "input_scale must be finite and >= 0";
  if (!why.str().empty()) throw Error("invalid TransDopeConfig: " + why.str());
}

TransDopeConfig TransDopeConfig::for_radar(const RadarConfig& radar) {
  TransDopeConfig cfg;
  cfg.range_bins = radar.samples();
  cfg.doppler_bins = radar.chirps();
  cfg.channels = radar.channels();
  return cfg;
}

std::size_t encoder_layer_param_count(int d, int kernel) {
  const auto D = static_cast<std::size_t>(d);
  return 4 * (D * D + D) + (static_cast<std::size_t>(kernel) * D * D + D) + 2 * (2 * D);
}

std::size_t param_count(const TransDopeConfig& c) {
  const auto F = static_cast<std::size_t>(c.conv_filters);
  const auto K = static_cast<std::size_t>(kConvKernel * kConvKernel);
  const auto D = static_cast<std::size_t>(c.embed_dim);
  const std::size_t conv1 = K * static_cast<std::size_t>(c.channels) * F + F;
  const std::size_t conv2 = K * F * F + F;
  const std::size_t embed = static_cast<std::size_t>(c.flat_features()) * D + D;
  const std::size_t head = D + 1;
  return conv1 + conv2 + embed + static_cast<std::size_t>(c.encoder_layers) * encoder_layer_param_count(c.embed_dim, c.ffn_kernel) + head;
}

std::vector<ParamRef> parameters(TransDopeModel& m) {
  std::vector<ParamRef> out;
  add_conv(out, "conv1", m.conv1);
  add_conv(out, "conv2", m.conv2);
  add_linear(out, "embedding", m.embedding);
  for (std::size_t i = 0; i < m.layers.size(); ++i) {
    auto& l = m.layers[i];
    const std::string p = "layers." + std::to_string(i) + ".";
    add_linear(out, p + "query", l.query);
    add_linear(out, p + "key", l.key);
    add_linear(out, p + "value", l.value);
    add_linear(out, p + "output", l.output);
    add_linear(out, p + "token_conv", l.token_conv);
    add_ref(out, p + "norm1.gamma", l.norm1.gamma);
    add_ref(out, p + "norm1.beta", l.norm1.beta);
    add_ref(out, p + "norm2.gamma", l.norm2.gamma);
    add_ref(out, p + "norm2.beta", l.norm2.beta);
  }
  add_linear(out, "head", m.head);
  return out;
}

std::size_t param_count(const TransDopeModel& model) {
  std::size_t n = 0;
  for (const auto& p : parameters(const_cast<TransDopeModel&>(model))) n += p.size;
  return n;
}

Matrix positional_table(int seq_len, int embed_dim) {
  Matrix table(seq_len, embed_dim);
  for (int t = 0; t < seq_len; ++t) {
    for (int i = 0; i < embed_dim; ++i) {
      const int pair = i - (i % 2);
      const double angle = t / std::pow(10000.0, static_cast<double>(pair) / embed_dim);
      table(t, i) = i % 2 == 0 ? std::sin(angle) : std::cos(angle);
    }
  }
  return table;
}

TransDopeModel make_model(const TransDopeConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(derive_seed({seed, 0x7d0e}));
  const int d = config.embed_dim;
  TransDopeModel m;
  m.config = config;
  m.conv1 = make_conv(config.channels, config.conv_filters, rng);
  m.conv2 = make_conv(config.conv_filters, config.conv_filters, rng);
  m.embedding = make_linear(config.flat_features(), d, rng);
  for (int i = 0; i < config.encoder_layers; ++i) {
    EncoderLayer l;
    l.query = make_linear(d, d, rng);
    l.key = make_linear(d, d, rng);
    l.value = make_linear(d, d, rng);
    l.output = make_linear(d, d, rng);
    l.token_conv = make_linear(config.ffn_kernel * d, d, rng);
    l.norm1 = make_norm(d);
    l.norm2 = make_norm(d);
    m.layers.push_back(std::move(l));
  }
  m.head = make_linear(d, 1, rng);
  m.positional = positional_table(config.seq_len, d);
  return m;
}

TransDopeModel zeros_like(const TransDopeModel& model) {
  TransDopeModel g = model;
  for (auto& p : parameters(g)) std::fill(p.data, p.data + p.size, 0.0);
  return g;
}

Matrix frame_features(std::span<const float> frame, const TransDopeModel& model) {
  return frame_stack(frame, model.config, model.conv1, model.conv2, nullptr);
}

std::vector<Matrix> time_conv_forward(std::span<const float> sequence, const TransDopeModel& model) {
  const auto& cfg = model.config;
  require_size(sequence.size(), cfg.sequence_size(), "sequence");
  std::vector<Matrix> maps;
  maps.reserve(static_cast<std::size_t>(cfg.seq_len));
  for (int t = 0; t < cfg.seq_len; ++t) {
    maps.push_back(frame_features(sequence.subspan(t * cfg.frame_size(), cfg.frame_size()), model));
  }
  return maps;
}

Matrix embed_tokens(const Matrix& features, const TransDopeModel& model) {
  const auto& cfg = model.config;
  if (features.rows() != cfg.seq_len || features.cols() != cfg.flat_features()) {
    std::ostringstream os;
    os << "features are " << features.rows() << "x" << features.cols() << ", expected " << cfg.seq_len
       << "x" << cfg.flat_features();
    throw Error(os.str());
  }
  Matrix tokens = linear(features, model.embedding);
  if (cfg.positional_encoding) tokens += model.positional;
  return tokens;
}

Matrix encoder_layer_forward(const Matrix& tokens, const EncoderLayer& layer, const TransDopeConfig& config,
                             std::vector<Matrix>* attention) {
  if (tokens.cols() != config.embed_dim) throw Error("token width does not match embed_dim");
  return encoder_forward(tokens, layer, config, nullptr, attention);
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double bce_with_logit(double logit, bool label) {
  // log(1 + e^z) - y z, written to avoid overflow.
  return std::max(logit, 0.0) - (label ? logit : 0.0) + std::log1p(std::exp(-std::abs(logit)));
}

double forward_from_features(const Matrix& features, const TransDopeModel& model) {
  return sigmoid(logit_from_features(features, model, nullptr));
}

double forward_logit(std::span<const float> sequence, const TransDopeModel& model) {
  const auto& cfg = model.config;
  require_size(sequence.size(), cfg.sequence_size(), "sequence");
  Matrix features(cfg.seq_len, cfg.flat_features());
  for (int t = 0; t < cfg.seq_len; ++t) {
    const Matrix map = frame_features(sequence.subspan(t * cfg.frame_size(), cfg.frame_size()), model);
    features.row(t) = flatten(map);
  }
  require_finite(features, "time convolutions");
  return logit_from_features(features, model, nullptr);
}

double forward(std::span<const float> sequence, const TransDopeModel& model) {
  return sigmoid(forward_logit(sequence, model));
}

double forward(const ArdSequence& sequence, const TransDopeModel& model) {
  const auto& cfg = model.config;
  if (sequence.frames != cfg.seq_len || sequence.range_bins != cfg.range_bins ||
      sequence.doppler_bins != cfg.doppler_bins || sequence.channels != cfg.channels) {
    std::ostringstream os;
    os << "sequence is " << sequence.frames << "x" << sequence.range_bins << "x" << sequence.doppler_bins << "x"
       << sequence.channels << ", model expects " << cfg.seq_len << "x" << cfg.range_bins << "x"
       << cfg.doppler_bins << "x" << cfg.channels;
    throw Error(os.str());
  }
  return forward(std::span<const float>(sequence.values), model);
}

double accumulate_gradient(std::span<const float> sequence, bool label, const TransDopeModel& model,
                           TransDopeModel& grad, double weight, double* probability) {
  const auto& cfg = model.config;
  require_size(sequence.size(), cfg.sequence_size(), "sequence");
  const int T = cfg.seq_len;

  ModelCache cache;
  cache.frames.resize(static_cast<std::size_t>(T));
  cache.layers.resize(model.layers.size());
  Matrix features(T, cfg.flat_features());
  for (int t = 0; t < T; ++t) {
    const Matrix map = frame_stack(sequence.subspan(t * cfg.frame_size(), cfg.frame_size()), cfg, model.conv1,
                                   model.conv2, &cache.frames[static_cast<std::size_t>(t)]);
    features.row(t) = flatten(map);
  }
  require_finite(features, "time convolutions");
  const double logit = logit_from_features(features, model, &cache);
  const double p = sigmoid(logit);
  if (probability != nullptr) *probability = p;

  const double dlogit = weight * (p - (label ? 1.0 : 0.0));
  grad.head.weight.noalias() += cache.pooled.transpose() * dlogit;
  grad.head.bias(0) += dlogit;
  const RowVector dpooled = (model.head.weight.transpose() * dlogit);
  Matrix dx = dpooled.replicate(T, 1) / static_cast<double>(T);
  for (std::size_t i = model.layers.size(); i-- > 0;) {
    dx = encoder_backward(dx, model.layers[i], cfg, cache.layers[i], grad.layers[i]);
  }
  const Matrix dfeatures = linear_backward(dx, features, model.embedding, grad.embedding);
  const Eigen::Index map_rows = static_cast<Eigen::Index>(cfg.pooled_range()) * cfg.pooled_doppler();
  for (int t = 0; t < T; ++t) {
    const Matrix dmap = unflatten(dfeatures.row(t), map_rows, cfg.conv_filters);
    frame_stack_backward(dmap, cfg, model.conv1, model.conv2, cache.frames[static_cast<std::size_t>(t)], grad.conv1, grad.conv2);
  }
  return bce_with_logit(logit, label);
}

FrameClassifier make_frame_classifier(const TransDopeConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(derive_seed({seed, 0xf4a3e}));
  FrameClassifier net;
  net.config = config;
  net.conv1 = make_conv(config.channels, config.conv_filters, rng);
  net.conv2 = make_conv(config.conv_filters, config.conv_filters, rng);
  net.head = make_linear(config.flat_features(), 1, rng);
  return net;
}

FrameClassifier zeros_like(const FrameClassifier& net) {
  FrameClassifier g = net;
  zero(g.conv1);
  zero(g.conv2);
  zero(g.head);
  return g;
}

std::vector<ParamRef> parameters(FrameClassifier& net) {
  std::vector<ParamRef> out;
  add_conv(out, "conv1", net.conv1);
  add_conv(out, "conv2", net.conv2);
  add_linear(out, "head", net.head);
  return out;
}

double forward(std::span<const float> frame, const FrameClassifier& net) {
  const Matrix map = frame_stack(frame, net.config, net.conv1, net.conv2, nullptr);
  const double logit = (flatten(map) * net.head.weight)(0, 0) + net.head.bias(0);
  if (!std::isfinite(logit)) throw Error("non-finite output logit");
  return sigmoid(logit);
}

double accumulate_gradient(std::span<const float> frame, bool label, const FrameClassifier& net,
                           FrameClassifier& grad, double weight, double* probability) {
  FrameCache cache;
  const Matrix map = frame_stack(frame, net.config, net.conv1, net.conv2, &cache);
  const Matrix flat = flatten(map);
  const double logit = (flat * net.head.weight)(0, 0) + net.head.bias(0);
  if (!std::isfinite(logit)) throw Error("non-finite output logit");
  const double p = sigmoid(logit);
  if (probability != nullptr) *probability = p;
  const Matrix dlogit = Matrix::Constant(1, 1, weight * (p - (label ? 1.0 : 0.0)));
  const Matrix dflat = linear_backward(dlogit, flat, net.head, grad.head);
  const Matrix dmap = unflatten(dflat.row(0), map.rows(), map.cols());
  frame_stack_backward(dmap, net.config, net.conv1, net.conv2, cache, grad.conv1, grad.conv2);
  return bce_with_logit(logit, label);
}

std::optional<double> StreamingClassifier::push(std::span<const float> frame) {
  const auto& cfg = model_->config;
  window_.push_back(flatten(frame_features(frame, *model_)));
  while (window_.size() > static_cast<std::size_t>(cfg.seq_len)) window_.pop_front();
  if (window_.size() < static_cast<std::size_t>(cfg.seq_len)) return std::nullopt;
  Matrix features(cfg.seq_len, cfg.flat_features());
  for (int t = 0; t < cfg.seq_len; ++t) features.row(t) = window_[static_cast<std::size_t>(t)];
  require_finite(features, "time convolutions");
  return forward_from_features(features, *model_);
}

}  // namespace mmsense::transdope
