#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pvcd/feature_io.hpp"

namespace pvcd {

using Matrix = Eigen::MatrixXd;
using RowVector = Eigen::RowVectorXd;

struct EncoderConfig {
  std::size_t d = 0;
  std::size_t n_heads = 2;
  std::size_t ffn_dim = 128;
  double layernorm_eps = 1e-5;
  bool positional_encoding = false;  // add sinusoidal positions before attention
  std::uint64_t seed = 0;

  std::size_t d_k() const { return n_heads == 0 ? 0 : d / n_heads; }
  void validate() const;
};

struct HeadWeights {
  Matrix w_q;  // d x d_k
  Matrix w_k;
  Matrix w_v;
};

// One post-norm transformer encoder block:
//   Y1 = X + concat_h(Att_h(X)) W_O;  Z1 = LN1(Y1)
//   Y2 = Z1 + relu(Z1 W_1 + b_1) W_2 + b_2;  Z2 = LN2(Y2)
//   out = Z2 with every row scaled to unit L2 norm.
struct EncoderWeights {
  std::vector<HeadWeights> heads;
  Matrix w_o;  // (H * d_k) x d
  RowVector ln1_gain, ln1_bias;
  Matrix w_ff1;  // d x ffn_dim
  RowVector b_ff1;
  Matrix w_ff2;  // ffn_dim x d
  RowVector b_ff2;
  RowVector ln2_gain, ln2_bias;

  std::size_t parameter_count() const;
  bool shape_matches(const EncoderConfig& cfg) const;
};

// Non-owning view of one parameter tensor (column-major storage).
struct TensorView {
  std::string name;
  double* data;
  Eigen::Index rows;
  Eigen::Index cols;

  std::span<double> values() const {
    return {data, static_cast<std::size_t>(rows * cols)};
  }
};

// Tensors in the fixed serialization order: per head W_Q, W_K, W_V; then
// W_O, LN1 gain, LN1 bias, W_1, b_1, W_2, b_2, LN2 gain, LN2 bias.
std::vector<TensorView> tensor_views(EncoderWeights& w);

EncoderWeights zero_weights(const EncoderConfig& cfg);

// Seeded uniform(-1/sqrt(d), 1/sqrt(d)) matrices, LayerNorm gain 1 and
// bias 0, FFN biases 0.
EncoderWeights init_weights(const EncoderConfig& cfg);

// softmax(X W_Q (X W_K)^T / sqrt(d_k)) X W_V. If softmax_out is given it
// receives the M x M attention matrix.
Matrix attention_head(const Matrix& x, const Matrix& w_q, const Matrix& w_k, const Matrix& w_v,
                      Matrix* softmax_out = nullptr);

Matrix sinusoidal_positions(std::size_t frames, std::size_t d);

// M x d in, M x d out with unit rows.
Matrix encode(const Matrix& x, const EncoderWeights& w, const EncoderConfig& cfg);
FeatureMatrix encode_features(const FeatureMatrix& x, const EncoderWeights& w,
                              const EncoderConfig& cfg);

// Ground-truth similarity: ones at (s_q + i, s_r + i) for i < length.
Matrix gt_matrix(std::size_t t, std::size_t m, std::size_t s_q, std::size_t s_r,
                 std::size_t length);

struct LossWeights {
  double w_zero = 0.1;
  double w_one = 1.1;
};

// (1 / MT) * sum(((P - P_GT) * w)^2) with w = w_one on GT ones, w_zero elsewhere.
double weighted_mse_loss(const Matrix& p, const Matrix& p_gt, const LossWeights& weights = {});

struct CopyLabel {
  std::size_t s_q = 0;
  std::size_t s_r = 0;
  std::size_t length = 0;
};

struct TrainingSample {
  Matrix query;      // T x d
  Matrix reference;  // M x d
  std::optional<CopyLabel> copy;  // nullopt for negatives (all-zero GT)

  bool positive() const { return copy.has_value(); }
  Matrix ground_truth() const;
  void validate() const;
};

// P = encode(Q) encode(R)^T.
Matrix encoded_similarity(const TrainingSample& sample, const EncoderWeights& w,
                          const EncoderConfig& cfg);
double sample_loss(const TrainingSample& sample, const EncoderWeights& w, const EncoderConfig& cfg,
                   const LossWeights& loss = {});

struct LossGradient {
  double loss = 0.0;
  EncoderWeights grad;
};

// Analytic gradient of sample_loss with respect to every weight.
LossGradient loss_gradient(const TrainingSample& sample, const EncoderWeights& w,
                           const EncoderConfig& cfg, const LossWeights& loss = {});

struct TrainOptions {
  std::size_t epochs = 30;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  LossWeights loss;
  std::uint64_t seed = 0;
};

struct TrainResult {
  EncoderWeights weights;
  std::vector<double> epoch_loss;  // mean per-sample loss of each epoch
};

// Adam, one update per sample. Every epoch uses all positives and an equal
// number of negatives drawn from the negative pool (all of them if there are
// fewer), in a seeded shuffled order.
TrainResult train_encoder(const std::vector<TrainingSample>& samples, const EncoderConfig& cfg,
                          const TrainOptions& options,
                          const std::optional<EncoderWeights>& initial = std::nullopt);

// Weight file: "PVCW", u16 version, u32 d, u32 H, u32 d_k, u32 ffn_dim, then
// every tensor of tensor_views() as row-major float32, little-endian.
inline constexpr char kWeightMagic[4] = {'P', 'V', 'C', 'W'};
inline constexpr std::uint16_t kWeightVersion = 1;

std::vector<std::uint8_t> encode_weights(const EncoderWeights& w, const EncoderConfig& cfg);
std::pair<EncoderWeights, EncoderConfig> decode_weights(std::span<const std::uint8_t> bytes,
                                                        const std::string& context);
void save_weights(const EncoderWeights& w, const EncoderConfig& cfg,
                  const std::filesystem::path& path);
std::pair<EncoderWeights, EncoderConfig> load_weights(const std::filesystem::path& path);

void save_history_csv(const std::vector<double>& epoch_loss, const std::filesystem::path& path);

}  // namespace pvcd
