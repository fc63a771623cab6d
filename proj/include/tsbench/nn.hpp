#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tsbench/common.hpp"

namespace tsbench {

enum class Activation { kRelu, kIdentity, kSoftplus };

struct ParamSlice {
  std::string name;
  std::size_t offset = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t size() const { return rows * cols; }
  bool operator==(const ParamSlice&) const = default;
};

using MatrixMap = Eigen::Map<Matrix>;
using ConstMatrixMap = Eigen::Map<const Matrix>;

/// Flat storage for every trainable weight of a model, plus a registry that
/// maps named tensors onto slices. The layout never changes after the model
/// is built, so vectors of the same layout can be averaged elementwise.
class ParamVector {
 public:
  /// Appends a zero-filled rows x cols tensor and returns its slice.
  const ParamSlice& add(std::string name, std::size_t rows, std::size_t cols);

  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }
  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }
  const std::vector<ParamSlice>& layout() const { return layout_; }
  const ParamSlice& slice(std::string_view name) const;

  MatrixMap map(const ParamSlice& s);
  ConstMatrixMap map(const ParamSlice& s) const;

  ParamVector zeros_like() const;
  bool same_layout(const ParamVector& other) const { return layout_ == other.layout_; }
  bool all_finite() const;

  nlohmann::json layout_json() const;

 private:
  std::vector<double> values_;
  std::vector<ParamSlice> layout_;
};

/// Checkpoint: "TSBPARAM", u64 LE header length, JSON header (layout plus
/// caller metadata), then every value as little-endian IEEE-754 binary64.
void save_params(const std::filesystem::path& path, const ParamVector& params,
                 const nlohmann::json& meta = nlohmann::json::object());
ParamVector load_params(const std::filesystem::path& path, nlohmann::json* meta = nullptr);
std::string encode_params(const ParamVector& params, const nlohmann::json& meta);
ParamVector decode_params(std::string_view bytes, nlohmann::json* meta = nullptr);

/// Uniform fan-in init, U(-sqrt(6/fan_in), sqrt(6/fan_in)), for every slice
/// whose name ends in ".weight"; other slices are zeroed. Slices selected by
/// `linear` feed no nonlinearity and use unit gain, bound sqrt(3/fan_in).
void init_he_uniform(ParamVector& params, Rng& rng,
                     const std::function<bool(const ParamSlice&)>& linear = {});

// ---------------------------------------------------------------------------
// Dense layer

struct DenseLayer {
  ParamSlice weight;  // in x out
  ParamSlice bias;    // 1 x out, size 0 when the layer has no bias
  Activation activation = Activation::kIdentity;

  std::size_t in() const { return weight.rows; }
  std::size_t out() const { return weight.cols; }

  static DenseLayer create(ParamVector& params, const std::string& name, std::size_t in,
                           std::size_t out, Activation act, bool with_bias = true);
};

struct DenseCache {
  Matrix input;
  Matrix pre_activation;
  bool valid = false;
};

double activate(double x, Activation act);
double activate_derivative(double pre, Activation act);

/// output = act(input * W + b). Records the cache when one is supplied.
Matrix dense_forward(const Matrix& input, ConstMatrixMap weights, const double* bias,
                     Activation act, DenseCache* cache = nullptr);
Matrix dense_forward(const ParamVector& params, const DenseLayer& layer, const Matrix& input,
                     DenseCache* cache = nullptr);

/// Accumulates dL/dW and dL/db into `grads` and returns dL/dinput.
Matrix dense_backward(const ParamVector& params, const DenseLayer& layer, const DenseCache& cache,
                      const Matrix& grad_output, ParamVector& grads);

// ---------------------------------------------------------------------------
// Dropout

/// Inverted dropout. In training mode every element is zeroed with
/// probability `rate` and survivors are scaled by 1/(1-rate); the applied
/// multiplier is written to `mask`. Evaluation mode is the identity.
Matrix dropout(const Matrix& input, double rate, Rng* rng, bool training, Matrix* mask = nullptr);

// ---------------------------------------------------------------------------
// Multi-layer perceptron

struct MlpTape {
  std::vector<DenseCache> layers;
  std::vector<Matrix> dropout_masks;  // one per hidden layer when dropout is active
};

class Mlp {
 public:
  Mlp() = default;
  /// sizes = {in, hidden..., out}; hidden layers use `hidden_act`, the last
  /// layer uses `output_act`.
  static Mlp create(ParamVector& params, const std::string& prefix,
                    const std::vector<std::size_t>& sizes, Activation hidden_act,
                    Activation output_act, bool output_bias = true);

  const std::vector<DenseLayer>& layers() const { return layers_; }

  Matrix forward(const ParamVector& params, const Matrix& input, MlpTape* tape = nullptr,
                 Rng* dropout_rng = nullptr, double dropout_rate = 0.0) const;
  Matrix backward(const ParamVector& params, const MlpTape& tape, const Matrix& grad_output,
                  ParamVector& grads) const;

 private:
  std::vector<DenseLayer> layers_;
};

// ---------------------------------------------------------------------------
// Optimizer

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t t = 0;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static AdamState for_size(std::size_t n, double lr);
};

/// One bias-corrected Adam update. Throws kNonFinite on a non-finite
/// gradient before touching any state.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state);

// ---------------------------------------------------------------------------
// Gradient verification

/// Central differences of `loss` around `params`, compared coordinatewise
/// with `analytic`. Returns max |a - n| / max(|a|, |n|, floor).
double finite_difference_check(const std::function<double(std::span<const double>)>& loss,
                               std::span<const double> params, std::span<const double> analytic,
                               double step = 1e-5, double floor = 1e-6);

}  // namespace tsbench
