#include "tsbench/nn.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace tsbench {

// ---------------------------------------------------------------------------
// ParamVector

const ParamSlice& ParamVector::add(std::string name, std::size_t rows, std::size_t cols) {
  for (const auto& s : layout_) {
    require(s.name != name, ErrorCode::kInvalidArgument, "duplicate parameter name '" + name + "'");
  }
  ParamSlice slice{std::move(name), values_.size(), rows, cols};
  values_.resize(values_.size() + rows * cols, 0.0);
  layout_.push_back(std::move(slice));
  return layout_.back();
}

const ParamSlice& ParamVector::slice(std::string_view name) const {
  for (const auto& s : layout_) {
    if (s.name == name) return s;
  }
  fail(ErrorCode::kInvalidArgument, "no parameter named '" + std::string(name) + "'");
}

MatrixMap ParamVector::map(const ParamSlice& s) {
  return MatrixMap(values_.data() + s.offset, static_cast<Eigen::Index>(s.rows),
                   static_cast<Eigen::Index>(s.cols));
}

ConstMatrixMap ParamVector::map(const ParamSlice& s) const {
  return ConstMatrixMap(values_.data() + s.offset, static_cast<Eigen::Index>(s.rows),
                        static_cast<Eigen::Index>(s.cols));
}

ParamVector ParamVector::zeros_like() const {
  ParamVector out;
  out.layout_ = layout_;
  out.values_.assign(values_.size(), 0.0);
  return out;
}

bool ParamVector::all_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

nlohmann::json ParamVector::layout_json() const {
  auto arr = nlohmann::json::array();
  for (const auto& s : layout_) {
    arr.push_back({{"name", s.name}, {"offset", s.offset}, {"rows", s.rows}, {"cols", s.cols}});
  }
  return arr;
}

namespace {

constexpr char kMagic[8] = {'T', 'S', 'B', 'P', 'A', 'R', 'A', 'M'};

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint64_t get_u64(std::string_view in, std::size_t pos) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  return v;
}

}  // namespace

std::string encode_params(const ParamVector& params, const nlohmann::json& meta) {
  nlohmann::json header = {{"format", 1}, {"count", params.size()}, {"layout", params.layout_json()},
                           {"meta", meta}};
  const std::string text = header.dump();
  std::string out(kMagic, sizeof kMagic);
  put_u64(out, text.size());
  out += text;
  out.reserve(out.size() + 8 * params.size());
  for (double v : params.values()) put_u64(out, std::bit_cast<std::uint64_t>(v));
  return out;
}

ParamVector decode_params(std::string_view bytes, nlohmann::json* meta) {
  require(bytes.size() >= 16 && std::memcmp(bytes.data(), kMagic, sizeof kMagic) == 0,
          ErrorCode::kIo, "not a parameter checkpoint");
  const std::uint64_t header_len = get_u64(bytes, 8);
  require(bytes.size() >= 16 + header_len, ErrorCode::kIo, "truncated checkpoint header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(16, header_len));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kIo, std::string("bad checkpoint header: ") + e.what());
  }
  const auto count = header.at("count").get<std::size_t>();
  const std::size_t data_pos = 16 + header_len;
  require(bytes.size() == data_pos + 8 * count, ErrorCode::kIo, "checkpoint payload size mismatch");
  ParamVector params;
  for (const auto& s : header.at("layout")) {
    const auto& slice = params.add(s.at("name").get<std::string>(), s.at("rows").get<std::size_t>(),
                                   s.at("cols").get<std::size_t>());
    require(slice.offset == s.at("offset").get<std::size_t>(), ErrorCode::kIo,
            "checkpoint layout offsets are inconsistent");
  }
  require(params.size() == count, ErrorCode::kIo, "checkpoint layout does not cover payload");
  for (std::size_t i = 0; i < count; ++i) {
    params.values()[i] = std::bit_cast<double>(get_u64(bytes, data_pos + 8 * i));
  }
  if (meta) *meta = header.at("meta");
  return params;
}

void save_params(const std::filesystem::path& path, const ParamVector& params,
                 const nlohmann::json& meta) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::kIo, "cannot write '" + path.string() + "'");
  const auto bytes = encode_params(params, meta);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

ParamVector load_params(const std::filesystem::path& path, nlohmann::json* meta) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot open '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return decode_params(buf.str(), meta);
}

void init_he_uniform(ParamVector& params, Rng& rng, const std::function<bool(const ParamSlice&)>& linear) {
  for (const auto& s : params.layout()) {
    auto m = params.map(s);
    if (s.name.ends_with(".weight")) {
      const double gain = linear && linear(s) ? 3.0 : 6.0;
      const double bound = std::sqrt(gain / static_cast<double>(std::max<std::size_t>(s.rows, 1)));
      for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-bound, bound);
    } else {
      m.setZero();
    }
  }
}

// ---------------------------------------------------------------------------
// Dense

DenseLayer DenseLayer::create(ParamVector& params, const std::string& name, std::size_t in,
                              std::size_t out, Activation act, bool with_bias) {
  DenseLayer layer;
  layer.weight = params.add(name + ".weight", in, out);
  layer.bias = with_bias ? params.add(name + ".bias", 1, out) : ParamSlice{name + ".bias", 0, 0, 0};
  layer.activation = act;
  return layer;
}

double activate(double x, Activation act) {
  switch (act) {
    case Activation::kRelu: return x > 0.0 ? x : 0.0;
    case Activation::kIdentity: return x;
    case Activation::kSoftplus: return x > 30.0 ? x : std::log1p(std::exp(x));
  }
  return x;
}

double activate_derivative(double pre, Activation act) {
  switch (act) {
    case Activation::kRelu: return pre > 0.0 ? 1.0 : 0.0;
    case Activation::kIdentity: return 1.0;
    case Activation::kSoftplus: return 1.0 / (1.0 + std::exp(-pre));
  }
  return 1.0;
}

Matrix dense_forward(const Matrix& input, ConstMatrixMap weights, const double* bias,
                     Activation act, DenseCache* cache) {
  if (input.cols() != weights.rows()) {
    fail(ErrorCode::kShapeMismatch, "dense_forward: input has " + std::to_string(input.cols()) +
                                        " columns, weights expect " + std::to_string(weights.rows()));
  }
  Matrix pre = input * weights;
  if (bias) {
    pre.rowwise() += Eigen::Map<const RowVector>(bias, weights.cols());
  }
  Matrix out = pre;
  if (act != Activation::kIdentity) {
    out = pre.unaryExpr([act](double x) { return activate(x, act); });
  }
  if (cache) {
    cache->input = input;
    cache->pre_activation = std::move(pre);
    cache->valid = true;
  }
  return out;
}

Matrix dense_forward(const ParamVector& params, const DenseLayer& layer, const Matrix& input,
                     DenseCache* cache) {
  const double* bias = layer.bias.size() ? params.values().data() + layer.bias.offset : nullptr;
  return dense_forward(input, params.map(layer.weight), bias, layer.activation, cache);
}

Matrix dense_backward(const ParamVector& params, const DenseLayer& layer, const DenseCache& cache,
                      const Matrix& grad_output, ParamVector& grads) {
  if (!cache.valid) fail(ErrorCode::kStaleCache, "backward called without a recorded forward pass");
  if (grad_output.rows() != cache.pre_activation.rows() ||
      grad_output.cols() != cache.pre_activation.cols()) {
    fail(ErrorCode::kShapeMismatch, "dense_backward: upstream gradient shape mismatch");
  }
  Matrix grad_pre = grad_output;
  if (layer.activation != Activation::kIdentity) {
    grad_pre = grad_output.cwiseProduct(cache.pre_activation.unaryExpr(
        [act = layer.activation](double x) { return activate_derivative(x, act); }));
  }
  grads.map(layer.weight).noalias() += cache.input.transpose() * grad_pre;
  if (layer.bias.size()) grads.map(layer.bias).noalias() += grad_pre.colwise().sum();
  return grad_pre * params.map(layer.weight).transpose();
}

// ---------------------------------------------------------------------------
// Dropout

Matrix dropout(const Matrix& input, double rate, Rng* rng, bool training, Matrix* mask) {
  require(rate >= 0.0 && rate < 1.0, ErrorCode::kInvalidArgument, "dropout rate must lie in [0, 1)");
  if (!training || rate == 0.0) {
    if (mask) *mask = Matrix::Ones(input.rows(), input.cols());
    return input;
  }
  require(rng != nullptr, ErrorCode::kInvalidArgument, "training-mode dropout needs an Rng");
  const double keep_scale = 1.0 / (1.0 - rate);
  Matrix m(input.rows(), input.cols());
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng->uniform() < rate ? 0.0 : keep_scale;
  Matrix out = input.cwiseProduct(m);
  if (mask) *mask = std::move(m);
  return out;
}

// ---------------------------------------------------------------------------
// Mlp

Mlp Mlp::create(ParamVector& params, const std::string& prefix, const std::vector<std::size_t>& sizes,
                Activation hidden_act, Activation output_act, bool output_bias) {
  require(sizes.size() >= 2, ErrorCode::kInvalidArgument, "an MLP needs at least one layer");
  Mlp mlp;
  for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
    const bool last = i + 2 == sizes.size();
    mlp.layers_.push_back(DenseLayer::create(params, prefix + ".fc" + std::to_string(i), sizes[i],
                                             sizes[i + 1], last ? output_act : hidden_act,
                                             last ? output_bias : true));
  }
  return mlp;
}

Matrix Mlp::forward(const ParamVector& params, const Matrix& input, MlpTape* tape, Rng* dropout_rng,
                    double dropout_rate) const {
  const bool drop = dropout_rng != nullptr && dropout_rate > 0.0;
  if (tape) {
    tape->layers.assign(layers_.size(), DenseCache{});
    tape->dropout_masks.clear();
  }
  Matrix x = input;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    x = dense_forward(params, layers_[i], x, tape ? &tape->layers[i] : nullptr);
    if (drop && i + 1 < layers_.size()) {
      Matrix mask;
      x = dropout(x, dropout_rate, dropout_rng, true, &mask);
      if (tape) tape->dropout_masks.push_back(std::move(mask));
    }
  }
  return x;
}

Matrix Mlp::backward(const ParamVector& params, const MlpTape& tape, const Matrix& grad_output,
                     ParamVector& grads) const {
  if (tape.layers.size() != layers_.size()) {
    fail(ErrorCode::kStaleCache, "MLP backward called without a matching forward pass");
  }
  const bool drop = !tape.dropout_masks.empty();
  Matrix g = grad_output;
  for (std::size_t i = layers_.size(); i-- > 0;) {
    if (drop && i + 1 < layers_.size()) g = g.cwiseProduct(tape.dropout_masks[i]);
    g = dense_backward(params, layers_[i], tape.layers[i], g, grads);
  }
  return g;
}

// ---------------------------------------------------------------------------
// Adam

AdamState AdamState::for_size(std::size_t n, double lr) {
  AdamState s;
  s.m.assign(n, 0.0);
  s.v.assign(n, 0.0);
  s.lr = lr;
  return s;
}

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state) {
  require(params.size() == grads.size() && params.size() == state.m.size() &&
              params.size() == state.v.size(),
          ErrorCode::kShapeMismatch, "adam_step: parameter, gradient and state lengths differ");
  for (double g : grads) {
    if (!std::isfinite(g)) fail(ErrorCode::kNonFinite, "adam_step: non-finite gradient");
  }
  ++state.t;
  const double t = static_cast<double>(state.t);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
    const double mhat = state.m[i] / c1;
    const double vhat = state.v[i] / c2;
    params[i] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
  }
}

// ---------------------------------------------------------------------------
// Finite differences

double finite_difference_check(const std::function<double(std::span<const double>)>& loss,
                               std::span<const double> params, std::span<const double> analytic,
                               double step, double floor) {
  require(params.size() == analytic.size(), ErrorCode::kShapeMismatch,
          "finite_difference_check: gradient length differs from parameter length");
  std::vector<double> x(params.begin(), params.end());
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + step;
    const double up = loss(x);
    x[i] = orig - step;
    const double down = loss(x);
    x[i] = orig;
    const double numeric = (up - down) / (2.0 * step);
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), floor});
    worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
  }
  return worst;
}

}  // namespace tsbench
