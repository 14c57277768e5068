#include "pvcd/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <random>

#include "pvcd/binary_io.hpp"
#include "pvcd/errors.hpp"

namespace pvcd {
namespace {

using Vector = Eigen::VectorXd;

void require_shape(const Matrix& m, Eigen::Index rows, Eigen::Index cols, const char* what) {
  if (m.rows() != rows || m.cols() != cols) {
    throw ShapeError(std::string(what) + " is " + std::to_string(m.rows()) + "x" +
                     std::to_string(m.cols()) + ", expected " + std::to_string(rows) + "x" +
                     std::to_string(cols));
  }
}

void softmax_rows_in_place(Matrix& s) {
  for (Eigen::Index r = 0; r < s.rows(); ++r) {
    const double mx = s.row(r).maxCoeff();
    s.row(r) = (s.row(r).array() - mx).exp().matrix();
    s.row(r) /= s.row(r).sum();
  }
}

Matrix layer_norm(const Matrix& y, const RowVector& gain, const RowVector& bias, double eps,
                  Matrix& xhat, Vector& inv_std) {
  const auto d = static_cast<double>(y.cols());
  xhat.resize(y.rows(), y.cols());
  inv_std.resize(y.rows());
  for (Eigen::Index r = 0; r < y.rows(); ++r) {
    const double mean = y.row(r).sum() / d;
    const RowVector centered = y.row(r).array() - mean;
    const double var = centered.squaredNorm() / d;
    inv_std(r) = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = centered * inv_std(r);
  }
  Matrix z = xhat.array().rowwise() * gain.array();
  z.rowwise() += bias;
  return z;
}

// Returns dL/dy and accumulates the gain/bias gradients.
Matrix layer_norm_backward(const Matrix& dz, const Matrix& xhat, const Vector& inv_std,
                           const RowVector& gain, RowVector& dgain, RowVector& dbias) {
  dgain += (dz.array() * xhat.array()).colwise().sum().matrix();
  dbias += dz.colwise().sum();
  const Matrix dxhat = dz.array().rowwise() * gain.array();
  const auto d = static_cast<double>(dz.cols());
  Matrix dy(dz.rows(), dz.cols());
  for (Eigen::Index r = 0; r < dz.rows(); ++r) {
    const double mean_dxhat = dxhat.row(r).sum() / d;
    const double mean_dxhat_xhat = dxhat.row(r).dot(xhat.row(r)) / d;
    dy.row(r) = inv_std(r) * (dxhat.row(r).array() - mean_dxhat -
                              xhat.row(r).array() * mean_dxhat_xhat)
                                 .matrix();
  }
  return dy;
}

struct ForwardCache {
  Matrix x;
  std::vector<Matrix> q, k, v, attn;
  Matrix concat;
  Matrix xhat1;
  Vector inv_std1;
  Matrix z1;
  Matrix h1;  // FFN pre-activation
  Matrix a1;
  Matrix xhat2;
  Vector inv_std2;
  Vector norms;
  Matrix out;
};

void check_input(const Matrix& x, const EncoderWeights& w, const EncoderConfig& cfg) {
  cfg.validate();
  if (!w.shape_matches(cfg)) throw ShapeError("encoder weights do not match the configuration");
  if (x.rows() == 0) throw ShapeError("encoder input has no frames");
  if (static_cast<std::size_t>(x.cols()) != cfg.d) {
    throw ShapeError("encoder input has d=" + std::to_string(x.cols()) + ", weights expect d=" +
                     std::to_string(cfg.d));
  }
}

ForwardCache forward(const Matrix& input, const EncoderWeights& w, const EncoderConfig& cfg) {
  check_input(input, w, cfg);
  ForwardCache c;
  c.x = input;
  if (cfg.positional_encoding) {
    c.x += sinusoidal_positions(static_cast<std::size_t>(input.rows()), cfg.d);
  }
  const auto m = c.x.rows();
  const auto dk = static_cast<Eigen::Index>(cfg.d_k());
  const double scale = 1.0 / std::sqrt(static_cast<double>(dk));

  c.concat.resize(m, dk * static_cast<Eigen::Index>(cfg.n_heads));
  for (std::size_t h = 0; h < cfg.n_heads; ++h) {
    const auto& hw = w.heads[h];
    c.q.push_back(c.x * hw.w_q);
    c.k.push_back(c.x * hw.w_k);
    c.v.push_back(c.x * hw.w_v);
    Matrix s = (c.q.back() * c.k.back().transpose()) * scale;
    softmax_rows_in_place(s);
    c.concat.middleCols(static_cast<Eigen::Index>(h) * dk, dk) = s * c.v.back();
    c.attn.push_back(std::move(s));
  }

  const Matrix y1 = c.x + c.concat * w.w_o;
  c.z1 = layer_norm(y1, w.ln1_gain, w.ln1_bias, cfg.layernorm_eps, c.xhat1, c.inv_std1);

  c.h1 = c.z1 * w.w_ff1;
  c.h1.rowwise() += w.b_ff1;
  c.a1 = c.h1.cwiseMax(0.0);
  Matrix y2 = c.z1 + c.a1 * w.w_ff2;
  y2.rowwise() += w.b_ff2;
  const Matrix z2 = layer_norm(y2, w.ln2_gain, w.ln2_bias, cfg.layernorm_eps, c.xhat2, c.inv_std2);

  c.norms = z2.rowwise().norm();
  for (Eigen::Index r = 0; r < m; ++r) {
    if (!(c.norms(r) > 0.0) || !std::isfinite(c.norms(r))) {
      throw DegenerateInputError("encoder produced a degenerate row " + std::to_string(r));
    }
  }
  c.out = z2.array().colwise() / c.norms.array();
  return c;
}

void backward(const ForwardCache& c, const Matrix& dout, const EncoderWeights& w,
              const EncoderConfig& cfg, EncoderWeights& g) {
  // Row normalization: out = z / |z|.
  Matrix dz2(dout.rows(), dout.cols());
  for (Eigen::Index r = 0; r < dout.rows(); ++r) {
    dz2.row(r) = (dout.row(r) - c.out.row(r) * c.out.row(r).dot(dout.row(r))) / c.norms(r);
  }
  const Matrix dy2 =
      layer_norm_backward(dz2, c.xhat2, c.inv_std2, w.ln2_gain, g.ln2_gain, g.ln2_bias);

  // Feed-forward with residual.
  g.w_ff2 += c.a1.transpose() * dy2;
  g.b_ff2 += dy2.colwise().sum();
  const Matrix dh1 = ((dy2 * w.w_ff2.transpose()).array() * (c.h1.array() > 0.0).cast<double>())
                         .matrix();
  g.w_ff1 += c.z1.transpose() * dh1;
  g.b_ff1 += dh1.colwise().sum();
  const Matrix dz1 = dy2 + dh1 * w.w_ff1.transpose();

  const Matrix dy1 =
      layer_norm_backward(dz1, c.xhat1, c.inv_std1, w.ln1_gain, g.ln1_gain, g.ln1_bias);

  // Attention (input gradient is not needed: the input is data).
  g.w_o += c.concat.transpose() * dy1;
  const Matrix dconcat = dy1 * w.w_o.transpose();
  const auto dk = static_cast<Eigen::Index>(cfg.d_k());
  const double scale = 1.0 / std::sqrt(static_cast<double>(dk));
  for (std::size_t h = 0; h < cfg.n_heads; ++h) {
    const Matrix dhead = dconcat.middleCols(static_cast<Eigen::Index>(h) * dk, dk);
    const Matrix& a = c.attn[h];
    const Matrix dattn = dhead * c.v[h].transpose();
    const Matrix dv = a.transpose() * dhead;
    const Vector row_dot = (dattn.array() * a.array()).rowwise().sum();
    const Matrix ds = (a.array() * (dattn.colwise() - row_dot).array()).matrix() * scale;
    const Matrix dq = ds * c.k[h];
    const Matrix dkm = ds.transpose() * c.q[h];
    g.heads[h].w_q += c.x.transpose() * dq;
    g.heads[h].w_k += c.x.transpose() * dkm;
    g.heads[h].w_v += c.x.transpose() * dv;
  }
}

Matrix loss_weight_matrix(const Matrix& p_gt, const LossWeights& lw) {
  return (p_gt.array() == 1.0).select(Matrix::Constant(p_gt.rows(), p_gt.cols(), lw.w_one),
                                      Matrix::Constant(p_gt.rows(), p_gt.cols(), lw.w_zero));
}

}  // namespace

void EncoderConfig::validate() const {
  if (d == 0 || n_heads == 0 || ffn_dim == 0) {
    throw ShapeError("encoder dimensions must be >= 1");
  }
  if (d % n_heads != 0) {
    throw ShapeError("feature dimension " + std::to_string(d) + " is not divisible by " +
                     std::to_string(n_heads) + " heads");
  }
  if (!(layernorm_eps > 0.0)) throw ShapeError("layernorm_eps must be positive");
}

std::size_t EncoderWeights::parameter_count() const {
  std::size_t n = 0;
  for (const auto& t : tensor_views(const_cast<EncoderWeights&>(*this))) {
    n += static_cast<std::size_t>(t.rows * t.cols);
  }
  return n;
}

bool EncoderWeights::shape_matches(const EncoderConfig& cfg) const {
  const auto d = static_cast<Eigen::Index>(cfg.d);
  const auto dk = static_cast<Eigen::Index>(cfg.d_k());
  const auto f = static_cast<Eigen::Index>(cfg.ffn_dim);
  if (heads.size() != cfg.n_heads) return false;
  for (const auto& h : heads) {
    for (const Matrix* m : {&h.w_q, &h.w_k, &h.w_v}) {
      if (m->rows() != d || m->cols() != dk) return false;
    }
  }
  return w_o.rows() == dk * static_cast<Eigen::Index>(cfg.n_heads) && w_o.cols() == d &&
         ln1_gain.size() == d && ln1_bias.size() == d && w_ff1.rows() == d &&
         w_ff1.cols() == f && b_ff1.size() == f && w_ff2.rows() == f && w_ff2.cols() == d &&
         b_ff2.size() == d && ln2_gain.size() == d && ln2_bias.size() == d;
}

std::vector<TensorView> tensor_views(EncoderWeights& w) {
  std::vector<TensorView> views;
  auto add = [&views](std::string name, auto& m) {
    views.push_back({std::move(name), m.data(), m.rows(), m.cols()});
  };
  for (std::size_t h = 0; h < w.heads.size(); ++h) {
    const auto p = "head" + std::to_string(h) + ".";
    add(p + "w_q", w.heads[h].w_q);
    add(p + "w_k", w.heads[h].w_k);
    add(p + "w_v", w.heads[h].w_v);
  }
  add("w_o", w.w_o);
  add("ln1_gain", w.ln1_gain);
  add("ln1_bias", w.ln1_bias);
  add("w_ff1", w.w_ff1);
  add("b_ff1", w.b_ff1);
  add("w_ff2", w.w_ff2);
  add("b_ff2", w.b_ff2);
  add("ln2_gain", w.ln2_gain);
  add("ln2_bias", w.ln2_bias);
  return views;
}

EncoderWeights zero_weights(const EncoderConfig& cfg) {
  cfg.validate();
  const auto d = static_cast<Eigen::Index>(cfg.d);
  const auto dk = static_cast<Eigen::Index>(cfg.d_k());
  const auto f = static_cast<Eigen::Index>(cfg.ffn_dim);
  EncoderWeights w;
  for (std::size_t h = 0; h < cfg.n_heads; ++h) {
    w.heads.push_back({Matrix::Zero(d, dk), Matrix::Zero(d, dk), Matrix::Zero(d, dk)});
  }
  w.w_o = Matrix::Zero(dk * static_cast<Eigen::Index>(cfg.n_heads), d);
  w.ln1_gain = RowVector::Zero(d);
  w.ln1_bias = RowVector::Zero(d);
  w.w_ff1 = Matrix::Zero(d, f);
  w.b_ff1 = RowVector::Zero(f);
  w.w_ff2 = Matrix::Zero(f, d);
  w.b_ff2 = RowVector::Zero(d);
  w.ln2_gain = RowVector::Zero(d);
  w.ln2_bias = RowVector::Zero(d);
  return w;
}

EncoderWeights init_weights(const EncoderConfig& cfg) {
  EncoderWeights w = zero_weights(cfg);
  std::mt19937_64 rng(cfg.seed);
  const double bound = 1.0 / std::sqrt(static_cast<double>(cfg.d));
  std::uniform_real_distribution<double> uniform(-bound, bound);
  auto fill = [&](Matrix& m) {
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = uniform(rng);
  };
  for (auto& h : w.heads) {
    fill(h.w_q);
    fill(h.w_k);
    fill(h.w_v);
  }
  fill(w.w_o);
  fill(w.w_ff1);
  fill(w.w_ff2);
  w.ln1_gain.setOnes();
  w.ln2_gain.setOnes();
  return w;
}

Matrix attention_head(const Matrix& x, const Matrix& w_q, const Matrix& w_k, const Matrix& w_v,
                      Matrix* softmax_out) {
  if (x.rows() == 0) throw ShapeError("attention input has no frames");
  require_shape(w_q, x.cols(), w_q.cols(), "W_Q");
  require_shape(w_k, x.cols(), w_q.cols(), "W_K");
  require_shape(w_v, x.cols(), w_q.cols(), "W_V");
  const Matrix q = x * w_q;
  const Matrix k = x * w_k;
  Matrix s = (q * k.transpose()) / std::sqrt(static_cast<double>(w_q.cols()));
  softmax_rows_in_place(s);
  Matrix out = s * (x * w_v);
  if (softmax_out) *softmax_out = std::move(s);
  return out;
}

Matrix sinusoidal_positions(std::size_t frames, std::size_t d) {
  Matrix pe(static_cast<Eigen::Index>(frames), static_cast<Eigen::Index>(d));
  for (std::size_t pos = 0; pos < frames; ++pos) {
    for (std::size_t i = 0; i < d; ++i) {
      const double rate = std::pow(10000.0, static_cast<double>(i - i % 2) / static_cast<double>(d));
      const double angle = static_cast<double>(pos) / rate;
      pe(static_cast<Eigen::Index>(pos), static_cast<Eigen::Index>(i)) =
          (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  }
  return pe;
}

Matrix encode(const Matrix& x, const EncoderWeights& w, const EncoderConfig& cfg) {
  return forward(x, w, cfg).out;
}

FeatureMatrix encode_features(const FeatureMatrix& x, const EncoderWeights& w,
                              const EncoderConfig& cfg) {
  FeatureMatrix out = encode(x.cast<double>(), w, cfg).cast<float>();
  normalize_rows_in_place(out, "encoded features");
  return out;
}

Matrix gt_matrix(std::size_t t, std::size_t m, std::size_t s_q, std::size_t s_r,
                 std::size_t length) {
  if (t == 0 || m == 0) throw ShapeError("ground-truth matrix needs T, M >= 1");
  if (length == 0 || s_q + length > t || s_r + length > m) {
    throw ShapeError("copy segment (s_q=" + std::to_string(s_q) + ", s_r=" + std::to_string(s_r) +
                     ", L=" + std::to_string(length) + ") does not fit a " + std::to_string(t) +
                     "x" + std::to_string(m) + " matrix");
  }
  Matrix g = Matrix::Zero(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(m));
  for (std::size_t i = 0; i < length; ++i) {
    g(static_cast<Eigen::Index>(s_q + i), static_cast<Eigen::Index>(s_r + i)) = 1.0;
  }
  return g;
}

double weighted_mse_loss(const Matrix& p, const Matrix& p_gt, const LossWeights& weights) {
  require_shape(p_gt, p.rows(), p.cols(), "ground-truth matrix");
  if (p.size() == 0) throw ShapeError("empty similarity matrix");
  const Matrix w = loss_weight_matrix(p_gt, weights);
  return ((p - p_gt).array() * w.array()).square().sum() / static_cast<double>(p.size());
}

Matrix TrainingSample::ground_truth() const {
  if (copy) return gt_matrix(static_cast<std::size_t>(query.rows()),
                             static_cast<std::size_t>(reference.rows()), copy->s_q, copy->s_r,
                             copy->length);
  return Matrix::Zero(query.rows(), reference.rows());
}

void TrainingSample::validate() const {
  if (query.rows() == 0 || reference.rows() == 0) throw ShapeError("training sample has no frames");
  if (query.cols() != reference.cols()) throw ShapeError("training sample dimension mismatch");
  if (copy) (void)ground_truth();
}

Matrix encoded_similarity(const TrainingSample& sample, const EncoderWeights& w,
                          const EncoderConfig& cfg) {
  return encode(sample.query, w, cfg) * encode(sample.reference, w, cfg).transpose();
}

double sample_loss(const TrainingSample& sample, const EncoderWeights& w, const EncoderConfig& cfg,
                   const LossWeights& loss) {
  return weighted_mse_loss(encoded_similarity(sample, w, cfg), sample.ground_truth(), loss);
}

LossGradient loss_gradient(const TrainingSample& sample, const EncoderWeights& w,
                           const EncoderConfig& cfg, const LossWeights& loss) {
  sample.validate();
  const auto cq = forward(sample.query, w, cfg);
  const auto cr = forward(sample.reference, w, cfg);
  const Matrix p = cq.out * cr.out.transpose();
  const Matrix gt = sample.ground_truth();
  const Matrix wm = loss_weight_matrix(gt, loss);
  const Matrix weighted = (p - gt).array() * wm.array();
  const auto n = static_cast<double>(p.size());

  LossGradient result;
  result.loss = weighted.array().square().sum() / n;
  const Matrix dp = (2.0 / n) * (weighted.array() * wm.array()).matrix();
  result.grad = zero_weights(cfg);
  backward(cq, dp * cr.out, w, cfg, result.grad);
  backward(cr, dp.transpose() * cq.out, w, cfg, result.grad);
  return result;
}

TrainResult train_encoder(const std::vector<TrainingSample>& samples, const EncoderConfig& cfg,
                          const TrainOptions& options,
                          const std::optional<EncoderWeights>& initial) {
  if (samples.empty()) throw Error("train_encoder needs at least one sample");
  cfg.validate();
  std::vector<std::size_t> positives, negatives;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    samples[i].validate();
    if (static_cast<std::size_t>(samples[i].query.cols()) != cfg.d) {
      throw ShapeError("sample " + std::to_string(i) + " has d=" +
                       std::to_string(samples[i].query.cols()) + ", config has d=" +
                       std::to_string(cfg.d));
    }
    (samples[i].positive() ? positives : negatives).push_back(i);
  }

  TrainResult result;
  result.weights = initial ? *initial : init_weights(cfg);
  if (!result.weights.shape_matches(cfg)) {
    throw ShapeError("initial weights do not match the configuration");
  }
  EncoderWeights m1 = zero_weights(cfg);
  EncoderWeights m2 = zero_weights(cfg);
  auto params = tensor_views(result.weights);
  auto first = tensor_views(m1);
  auto second = tensor_views(m2);

  std::mt19937_64 rng(options.seed);
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    std::vector<std::size_t> order = positives;
    std::vector<std::size_t> pool = negatives;
    std::shuffle(pool.begin(), pool.end(), rng);
    const std::size_t n_neg = positives.empty() ? pool.size() : std::min(pool.size(), positives.size());
    order.insert(order.end(), pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(n_neg));
    std::shuffle(order.begin(), order.end(), rng);

    double total = 0.0;
    for (auto idx : order) {
      auto lg = loss_gradient(samples[idx], result.weights, cfg, options.loss);
      total += lg.loss;
      ++step;
      const double c1 = 1.0 - std::pow(options.beta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(options.beta2, static_cast<double>(step));
      const auto grads = tensor_views(lg.grad);
      for (std::size_t t = 0; t < params.size(); ++t) {
        auto p = params[t].values();
        auto g = grads[t].values();
        auto a = first[t].values();
        auto b = second[t].values();
        for (std::size_t i = 0; i < p.size(); ++i) {
          a[i] = options.beta1 * a[i] + (1.0 - options.beta1) * g[i];
          b[i] = options.beta2 * b[i] + (1.0 - options.beta2) * g[i] * g[i];
          p[i] -= options.learning_rate * (a[i] / c1) / (std::sqrt(b[i] / c2) + options.adam_eps);
        }
      }
    }
    result.epoch_loss.push_back(total / static_cast<double>(order.size()));
  }
  return result;
}

std::vector<std::uint8_t> encode_weights(const EncoderWeights& w, const EncoderConfig& cfg) {
  cfg.validate();
  if (!w.shape_matches(cfg)) throw ShapeError("encoder weights do not match the configuration");
  ByteWriter out;
  out.put_bytes(std::string_view(kWeightMagic, 4));
  out.put_u16(kWeightVersion);
  out.put_u32(static_cast<std::uint32_t>(cfg.d));
  out.put_u32(static_cast<std::uint32_t>(cfg.n_heads));
  out.put_u32(static_cast<std::uint32_t>(cfg.d_k()));
  out.put_u32(static_cast<std::uint32_t>(cfg.ffn_dim));
  EncoderWeights copy = w;
  for (const auto& t : tensor_views(copy)) {
    for (Eigen::Index r = 0; r < t.rows; ++r) {
      for (Eigen::Index c = 0; c < t.cols; ++c) {
        out.put_f32(static_cast<float>(t.data[c * t.rows + r]));
      }
    }
  }
  return out.buffer();
}

std::pair<EncoderWeights, EncoderConfig> decode_weights(std::span<const std::uint8_t> bytes,
                                                        const std::string& context) {
  ByteReader in(bytes, context);
  if (in.get_bytes(4) != std::string_view(kWeightMagic, 4)) in.fail_at(0, "bad magic (expected PVCW)");
  const auto version_at = in.offset();
  if (const auto version = in.get_u16(); version != kWeightVersion) {
    in.fail_at(version_at, "unsupported version " + std::to_string(version));
  }
  EncoderConfig cfg;
  cfg.d = in.get_u32();
  cfg.n_heads = in.get_u32();
  const auto dk = in.get_u32();
  cfg.ffn_dim = in.get_u32();
  try {
    cfg.validate();
  } catch (const ShapeError& e) {
    in.fail_at(6, e.what());
  }
  if (dk != cfg.d_k()) in.fail_at(14, "d_k disagrees with d / H");

  EncoderWeights w = zero_weights(cfg);
  for (const auto& t : tensor_views(w)) {
    for (Eigen::Index r = 0; r < t.rows; ++r) {
      for (Eigen::Index c = 0; c < t.cols; ++c) {
        const auto at = in.offset();
        const float v = in.get_f32();
        if (!std::isfinite(v)) in.fail_at(at, "non-finite value in " + t.name);
        t.data[c * t.rows + r] = v;
      }
    }
  }
  if (in.remaining() != 0) in.fail("trailing bytes after weights");
  return {std::move(w), cfg};
}

void save_weights(const EncoderWeights& w, const EncoderConfig& cfg,
                  const std::filesystem::path& path) {
  write_file_bytes(path, encode_weights(w, cfg));
}

std::pair<EncoderWeights, EncoderConfig> load_weights(const std::filesystem::path& path) {
  return decode_weights(read_file_bytes(path), path.string());
}

void save_history_csv(const std::vector<double>& epoch_loss, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "epoch,mean_loss\n" << std::setprecision(10);
  for (std::size_t e = 0; e < epoch_loss.size(); ++e) out << e + 1 << ',' << epoch_loss[e] << '\n';
}

}  // namespace pvcd
