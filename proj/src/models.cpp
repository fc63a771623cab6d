#include "tsbench/models.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

namespace tsbench {

std::string_view to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::kSeasonalNaive: return "SEASONAL_NAIVE";
    case ModelKind::kGlobalLinear: return "GLOBAL_LINEAR";
    case ModelKind::kNBeatsLite: return "NBEATS_LITE";
  }
  return "SEASONAL_NAIVE";
}

ModelKind parse_model_kind(std::string_view text) {
  if (text == "SEASONAL_NAIVE") return ModelKind::kSeasonalNaive;
  if (text == "GLOBAL_LINEAR") return ModelKind::kGlobalLinear;
  if (text == "NBEATS_LITE") return ModelKind::kNBeatsLite;
  fail(ErrorCode::kInvalidArgument, "unknown model kind '" + std::string(text) + "'");
}

std::string_view to_string(StackType type) {
  switch (type) {
    case StackType::kTrend: return "TREND";
    case StackType::kSeasonality: return "SEASONALITY";
    case StackType::kGeneric: return "GENERIC";
  }
  return "GENERIC";
}

// ---------------------------------------------------------------------------
// Forecaster

Forecaster::Forecaster(std::size_t lookback, std::size_t horizon, LossKind loss,
                       nlohmann::json hyperparams)
    : lookback_(lookback), horizon_(horizon), loss_(loss), hyperparams_(std::move(hyperparams)) {
  require(lookback >= 1 && horizon >= 1, ErrorCode::kInvalidArgument,
          "lookback and horizon must be >= 1");
}

void Forecaster::set_params(const ParamVector& params) {
  require(params.same_layout(params_), ErrorCode::kShapeMismatch,
          "parameter layout does not match the model");
  params_ = params;
  ++version_;
}

namespace {

double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }
double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

Forecast Forecaster::forward(const Matrix& encoder, ForwardTape* tape, Rng* dropout_rng) const {
  if (static_cast<std::size_t>(encoder.cols()) != lookback_) {
    fail(ErrorCode::kShapeMismatch, "encoder has " + std::to_string(encoder.cols()) +
                                        " columns, model lookback is " + std::to_string(lookback_));
  }
  if (tape) {
    *tape = ForwardTape{};
    tape->owner = this;
    tape->version = version_;
  }
  Matrix raw = forward_raw(encoder, tape, dropout_rng);
  const auto h = static_cast<Eigen::Index>(horizon_);
  Forecast out;
  out.mean = raw.leftCols(h);
  if (loss_.needs_positive_mean()) {
    out.mean = out.mean.unaryExpr([](double x) { return softplus(x) + kPositiveHeadFloor; });
  }
  if (loss_.needs_scale()) {
    out.scale = raw.rightCols(h).unaryExpr([](double x) { return softplus(x) + kPositiveHeadFloor; });
  }
  if (tape) {
    tape->head_raw = std::move(raw);
    tape->recorded = true;
  }
  return out;
}

ParamVector Forecaster::backward(const ForwardTape& tape, const Forecast& grad_output) const {
  if (!tape.recorded || tape.owner != this) {
    fail(ErrorCode::kStaleCache, "backward called without a forward pass on this model");
  }
  if (tape.version != version_) {
    fail(ErrorCode::kStaleCache, "backward called on a tape recorded before a parameter update");
  }
  const auto h = static_cast<Eigen::Index>(horizon_);
  const Matrix& raw = tape.head_raw;
  require(grad_output.mean.rows() == raw.rows() && grad_output.mean.cols() == h,
          ErrorCode::kShapeMismatch, "gradient shape does not match the forecast");
  Matrix grad_raw(raw.rows(), raw.cols());
  if (loss_.needs_positive_mean()) {
    grad_raw.leftCols(h) = grad_output.mean.cwiseProduct(raw.leftCols(h).unaryExpr(&sigmoid));
  } else {
    grad_raw.leftCols(h) = grad_output.mean;
  }
  if (loss_.needs_scale()) {
    require(grad_output.has_scale(), ErrorCode::kShapeMismatch, "gradient lacks a scale component");
    grad_raw.rightCols(h) = grad_output.scale.cwiseProduct(raw.rightCols(h).unaryExpr(&sigmoid));
  }
  ParamVector grads = params_.zeros_like();
  if (parametric()) backward_raw(tape, grad_raw, grads);
  return grads;
}

void Forecaster::backward_raw(const ForwardTape&, const Matrix&, ParamVector&) const {}

// ---------------------------------------------------------------------------
// SeasonalNaive

SeasonalNaive::SeasonalNaive(std::size_t lookback, std::size_t horizon, std::size_t period, LossKind loss)
    : Forecaster(lookback, horizon, loss, nlohmann::json{{"period", period}}), period_(period) {
  require(period >= 1, ErrorCode::kInvalidArgument, "seasonal period must be >= 1");
  require(lookback >= period, ErrorCode::kInvalidArgument,
          "lookback " + std::to_string(lookback) + " is shorter than the seasonal period " +
              std::to_string(period));
}

Matrix SeasonalNaive::forward_raw(const Matrix& encoder, ForwardTape*, Rng*) const {
  const auto l = static_cast<Eigen::Index>(lookback());
  const auto h = static_cast<Eigen::Index>(horizon());
  const auto s = static_cast<Eigen::Index>(period_);
  Matrix raw(encoder.rows(), h * static_cast<Eigen::Index>(channels()));
  for (Eigen::Index t = 0; t < h; ++t) raw.col(t) = encoder.col(l - s + (t % s));
  // Unit scale under a Gaussian head: softplus(log(e - 1)) = 1.
  if (channels() == 2) raw.rightCols(h).setConstant(std::log(std::numbers::e - 1.0) - kPositiveHeadFloor);
  return raw;
}

// ---------------------------------------------------------------------------
// GlobalLinear

GlobalLinear::GlobalLinear(std::size_t lookback, std::size_t horizon, LossKind loss)
    : Forecaster(lookback, horizon, loss, nlohmann::json::object()) {
  layer_ = DenseLayer::create(params_, "linear", lookback, horizon * channels(), Activation::kIdentity);
}

Matrix GlobalLinear::forward_raw(const Matrix& encoder, ForwardTape* tape, Rng*) const {
  DenseCache* cache = nullptr;
  if (tape) {
    tape->dense.resize(1);
    cache = &tape->dense[0];
  }
  return dense_forward(params_, layer_, encoder, cache);
}

void GlobalLinear::backward_raw(const ForwardTape& tape, const Matrix& grad_raw, ParamVector& grads) const {
  require(tape.dense.size() == 1, ErrorCode::kStaleCache, "linear tape is incomplete");
  dense_backward(params_, layer_, tape.dense[0], grad_raw, grads);
}

// ---------------------------------------------------------------------------
// N-BEATS

namespace {

const std::set<std::size_t> kBlockChoices{2, 4, 8};
const std::set<std::size_t> kThetaChoices{2, 4, 8, 16};
const std::set<std::size_t> kHiddenChoices{16, 32, 64, 128, 256, 512, 1024, 2048, 4096};

std::string join(const std::set<std::size_t>& s) {
  std::string out;
  for (auto v : s) out += (out.empty() ? "" : ", ") + std::to_string(v);
  return out;
}

template <typename T>
T get_as(const nlohmann::json& j, const std::string& key) {
  try {
    return j.get<T>();
  } catch (const nlohmann::json::exception&) {
    fail(ErrorCode::kInvalidArgument, "hyperparameter '" + key + "' has the wrong type");
  }
}

}  // namespace

NBeatsConfig NBeatsConfig::from_json(const nlohmann::json& lm) {
  require(lm.is_object(), ErrorCode::kInvalidArgument, "model hyperparameters must be an object");
  NBeatsConfig c;
  for (auto it = lm.begin(); it != lm.end(); ++it) {
    const std::string& key = it.key();
    if (key == "dropout") {
      c.dropout = get_as<double>(*it, key);
      require(c.dropout >= 0.0 && c.dropout < 1.0, ErrorCode::kInvalidArgument,
              "hyperparameter 'dropout' must lie in [0, 1)");
      continue;
    }
    if (key.size() < 7 || !key.starts_with("stack") || (key[5] != '0' && key[5] != '1') || key[6] != '_') {
      fail(ErrorCode::kInvalidArgument, "unknown N-BEATS hyperparameter '" + key + "'");
    }
    const std::size_t idx = key[5] == '0' ? 0 : 1;
    auto& st = c.stacks[idx];
    const std::string field = key.substr(7);
    if (field == "type") {
      const auto t = get_as<std::string>(*it, key);
      if (idx == 0 && t == "TREND") st.type = StackType::kTrend;
      else if (idx == 1 && t == "SEASONALITY") st.type = StackType::kSeasonality;
      else if (t == "GENERIC") st.type = StackType::kGeneric;
      else fail(ErrorCode::kInvalidArgument, "hyperparameter '" + key + "' = '" + t + "' is outside " +
                                                 (idx == 0 ? "{TREND, GENERIC}" : "{SEASONALITY, GENERIC}"));
    } else if (field == "blocks") {
      st.num_blocks = get_as<std::size_t>(*it, key);
      require(kBlockChoices.count(st.num_blocks), ErrorCode::kInvalidArgument,
              "hyperparameter '" + key + "' must be one of {" + join(kBlockChoices) + "}");
    } else if (field == "theta_dim") {
      st.theta_dim = get_as<std::size_t>(*it, key);
      require(kThetaChoices.count(st.theta_dim), ErrorCode::kInvalidArgument,
              "hyperparameter '" + key + "' must be one of {" + join(kThetaChoices) + "}");
    } else if (field == "share_weights") {
      st.share_weights = get_as<bool>(*it, key);
    } else if (field == "hidden_size") {
      st.hidden_size = get_as<std::size_t>(*it, key);
      require(kHiddenChoices.count(st.hidden_size), ErrorCode::kInvalidArgument,
              "hyperparameter '" + key + "' must be one of {" + join(kHiddenChoices) + "}");
    } else {
      fail(ErrorCode::kInvalidArgument, "unknown N-BEATS hyperparameter '" + key + "'");
    }
  }
  for (const auto& st : c.stacks) {
    if (st.type == StackType::kSeasonality) {
      require(st.theta_dim == 1 || st.theta_dim % 2 == 0, ErrorCode::kInvalidArgument,
              "seasonality theta_dim must be even or 1");
    }
  }
  return c;
}

nlohmann::json NBeatsConfig::to_json() const {
  nlohmann::json j;
  for (std::size_t i = 0; i < 2; ++i) {
    const std::string p = "stack" + std::to_string(i) + "_";
    j[p + "type"] = to_string(stacks[i].type);
    j[p + "blocks"] = stacks[i].num_blocks;
    j[p + "theta_dim"] = stacks[i].theta_dim;
    j[p + "share_weights"] = stacks[i].share_weights;
    j[p + "hidden_size"] = stacks[i].hidden_size;
  }
  j["dropout"] = dropout;
  return j;
}

namespace {

double grid_point(std::size_t j, std::size_t n, bool backcast) {
  const double t = static_cast<double>(j) / static_cast<double>(n);
  return backcast ? t - 1.0 : t;
}

}  // namespace

Matrix trend_basis(std::size_t theta_dim, std::size_t points, bool backcast) {
  Matrix basis(static_cast<Eigen::Index>(theta_dim), static_cast<Eigen::Index>(points));
  for (std::size_t j = 0; j < points; ++j) {
    const double t = grid_point(j, points, backcast);
    double power = 1.0;
    for (std::size_t p = 0; p < theta_dim; ++p) {
      basis(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(j)) = power;
      power *= t;
    }
  }
  return basis;
}

Matrix seasonality_basis(std::size_t theta_dim, std::size_t points, bool backcast) {
  Matrix basis(static_cast<Eigen::Index>(theta_dim), static_cast<Eigen::Index>(points));
  for (std::size_t j = 0; j < points; ++j) {
    const auto col = static_cast<Eigen::Index>(j);
    if (theta_dim == 1) {
      basis(0, col) = 1.0;
      continue;
    }
    const double t = grid_point(j, points, backcast);
    for (std::size_t k = 0; k < theta_dim / 2; ++k) {
      const double angle = 2.0 * std::numbers::pi * static_cast<double>(k + 1) * t;
      basis(static_cast<Eigen::Index>(2 * k), col) = std::cos(angle);
      basis(static_cast<Eigen::Index>(2 * k + 1), col) = std::sin(angle);
    }
  }
  return basis;
}

std::size_t nbeats_param_count(const NBeatsConfig& config, std::size_t l, std::size_t h,
                               std::size_t channels) {
  std::size_t total = 0;
  for (const auto& st : config.stacks) {
    const std::size_t H = st.hidden_size, th = st.theta_dim;
    std::size_t block = (l * H + H) + (NBeatsConfig::kMlpDepth - 1) * (H * H + H) + (H * th + th) +
                        (H * th * channels + th * channels);
    if (st.type == StackType::kGeneric) block += th * l + th * h;
    total += block * (st.share_weights ? 1 : st.num_blocks);
  }
  return total;
}

NBeatsLite::NBeatsLite(std::size_t lookback, std::size_t horizon, const NBeatsConfig& config, LossKind loss)
    : Forecaster(lookback, horizon, loss, config.to_json()), config_(config) {
  const std::size_t c = channels();
  for (std::size_t s = 0; s < 2; ++s) {
    const auto& st = config_.stacks[s];
    if (st.type == StackType::kTrend) {
      fixed_backcast_[s] = trend_basis(st.theta_dim, lookback, true);
      fixed_forecast_[s] = trend_basis(st.theta_dim, horizon, false);
    } else if (st.type == StackType::kSeasonality) {
      fixed_backcast_[s] = seasonality_basis(st.theta_dim, lookback, true);
      fixed_forecast_[s] = seasonality_basis(st.theta_dim, horizon, false);
    }
    Block shared;
    for (std::size_t b = 0; b < st.num_blocks; ++b) {
      if (st.share_weights && b > 0) {
        blocks_.push_back(shared);
        continue;
      }
      const std::string name = "stack" + std::to_string(s) + ".block" + std::to_string(b);
      Block block;
      block.stack = s;
      std::vector<std::size_t> sizes{lookback};
      for (std::size_t d = 0; d < NBeatsConfig::kMlpDepth; ++d) sizes.push_back(st.hidden_size);
      // The MLP's last hidden layer keeps its ReLU; theta projections are linear.
      block.mlp = Mlp::create(params_, name + ".mlp", sizes, Activation::kRelu, Activation::kRelu);
      block.theta_backcast = DenseLayer::create(params_, name + ".theta_b", st.hidden_size,
                                                st.theta_dim, Activation::kIdentity);
      block.theta_forecast = DenseLayer::create(params_, name + ".theta_f", st.hidden_size,
                                                st.theta_dim * c, Activation::kIdentity);
      if (st.type == StackType::kGeneric) {
        block.basis_backcast = params_.add(name + ".basis_b.weight", st.theta_dim, lookback);
        block.basis_forecast = params_.add(name + ".basis_f.weight", st.theta_dim, horizon);
      }
      if (b == 0) shared = block;
      blocks_.push_back(std::move(block));
    }
  }
}

Matrix NBeatsLite::basis_matrix(const Block& block, bool backcast) const {
  if (config_.stacks[block.stack].type == StackType::kGeneric) {
    return params_.map(backcast ? block.basis_backcast : block.basis_forecast);
  }
  return backcast ? fixed_backcast_[block.stack] : fixed_forecast_[block.stack];
}

Matrix NBeatsLite::forward_raw(const Matrix& encoder, ForwardTape* tape, Rng* rng) const {
  const auto h = static_cast<Eigen::Index>(horizon());
  const auto c = static_cast<Eigen::Index>(channels());
  Matrix residual = encoder;
  Matrix forecast = Matrix::Zero(encoder.rows(), h * c);
  if (tape) {
    tape->mlps.resize(blocks_.size());
    tape->dense.resize(2 * blocks_.size());
    tape->values.resize(2 * blocks_.size());
  }
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    const auto& block = blocks_[b];
    const Matrix hidden = block.mlp.forward(params_, residual, tape ? &tape->mlps[b] : nullptr, rng,
                                            config_.dropout);
    const Matrix theta_b = dense_forward(params_, block.theta_backcast, hidden, tape ? &tape->dense[2 * b] : nullptr);
    const Matrix theta_f = dense_forward(params_, block.theta_forecast, hidden, tape ? &tape->dense[2 * b + 1] : nullptr);
    const Matrix basis_b = basis_matrix(block, true);
    const Matrix basis_f = basis_matrix(block, false);
    const auto th = basis_f.rows();
    residual -= theta_b * basis_b;
    for (Eigen::Index ch = 0; ch < c; ++ch) {
      forecast.middleCols(ch * h, h) += theta_f.middleCols(ch * th, th) * basis_f;
    }
    if (tape) {
      tape->values[2 * b] = theta_b;
      tape->values[2 * b + 1] = theta_f;
    }
  }
  return forecast;
}

void NBeatsLite::backward_raw(const ForwardTape& tape, const Matrix& grad_raw, ParamVector& grads) const {
  require(tape.mlps.size() == blocks_.size() && tape.dense.size() == 2 * blocks_.size(),
          ErrorCode::kStaleCache, "N-BEATS tape is incomplete");
  const auto h = static_cast<Eigen::Index>(horizon());
  const auto c = static_cast<Eigen::Index>(channels());
  // Gradient w.r.t. the residual entering the block currently being processed.
  Matrix grad_residual = Matrix::Zero(grad_raw.rows(), static_cast<Eigen::Index>(lookback()));
  for (std::size_t b = blocks_.size(); b-- > 0;) {
    const auto& block = blocks_[b];
    const bool generic = config_.stacks[block.stack].type == StackType::kGeneric;
    const Matrix basis_b = basis_matrix(block, true);
    const Matrix basis_f = basis_matrix(block, false);
    const auto th = basis_f.rows();
    const Matrix& theta_b = tape.values[2 * b];
    const Matrix& theta_f = tape.values[2 * b + 1];

    // residual_out = residual_in - theta_b * basis_b
    const Matrix grad_backcast = -grad_residual;
    const Matrix grad_theta_b = grad_backcast * basis_b.transpose();
    Matrix grad_theta_f(theta_f.rows(), theta_f.cols());
    for (Eigen::Index ch = 0; ch < c; ++ch) {
      const auto g = grad_raw.middleCols(ch * h, h);
      grad_theta_f.middleCols(ch * th, th) = g * basis_f.transpose();
      if (generic) grads.map(block.basis_forecast).noalias() += theta_f.middleCols(ch * th, th).transpose() * g;
    }
    if (generic) grads.map(block.basis_backcast).noalias() += theta_b.transpose() * grad_backcast;

    Matrix grad_hidden = dense_backward(params_, block.theta_backcast, tape.dense[2 * b], grad_theta_b, grads);
    grad_hidden += dense_backward(params_, block.theta_forecast, tape.dense[2 * b + 1], grad_theta_f, grads);
    grad_residual += block.mlp.backward(params_, tape.mlps[b], grad_hidden, grads);
  }
}

NBeatsLite::Decomposition NBeatsLite::decompose(const Matrix& encoder) const {
  require(static_cast<std::size_t>(encoder.cols()) == lookback(), ErrorCode::kShapeMismatch,
          "encoder width differs from lookback");
  const auto h = static_cast<Eigen::Index>(horizon());
  const auto c = static_cast<Eigen::Index>(channels());
  Decomposition d;
  Matrix residual = encoder;
  for (const auto& block : blocks_) {
    const Matrix hidden = block.mlp.forward(params_, residual);
    const Matrix theta_b = dense_forward(params_, block.theta_backcast, hidden);
    const Matrix theta_f = dense_forward(params_, block.theta_forecast, hidden);
    const Matrix basis_f = basis_matrix(block, false);
    const auto th = basis_f.rows();
    Matrix backcast = theta_b * basis_matrix(block, true);
    Matrix forecast(encoder.rows(), h * c);
    for (Eigen::Index ch = 0; ch < c; ++ch) {
      forecast.middleCols(ch * h, h) = theta_f.middleCols(ch * th, th) * basis_f;
    }
    residual -= backcast;
    d.backcasts.push_back(std::move(backcast));
    d.forecasts.push_back(std::move(forecast));
  }
  d.residual = std::move(residual);
  return d;
}

// ---------------------------------------------------------------------------
// Factory

std::unique_ptr<Forecaster> build_model(ModelKind kind, const nlohmann::json& lambda_m,
                                        std::size_t lookback, std::size_t horizon, LossKind loss,
                                        std::uint64_t seed, std::size_t default_period) {
  const nlohmann::json lm = lambda_m.is_null() ? nlohmann::json::object() : lambda_m;
  require(lm.is_object(), ErrorCode::kInvalidArgument, "model hyperparameters must be an object");
  std::unique_ptr<Forecaster> model;
  switch (kind) {
    case ModelKind::kSeasonalNaive: {
      std::size_t period = default_period;
      for (auto it = lm.begin(); it != lm.end(); ++it) {
        if (it.key() != "period") fail(ErrorCode::kInvalidArgument, "unknown seasonal-naive hyperparameter '" + it.key() + "'");
        period = get_as<std::size_t>(*it, "period");
        require(period >= 1, ErrorCode::kInvalidArgument, "hyperparameter 'period' must be >= 1");
      }
      model = std::make_unique<SeasonalNaive>(lookback, horizon, period, loss);
      break;
    }
    case ModelKind::kGlobalLinear: {
      if (!lm.empty()) fail(ErrorCode::kInvalidArgument, "unknown global-linear hyperparameter '" + lm.begin().key() + "'");
      model = std::make_unique<GlobalLinear>(lookback, horizon, loss);
      break;
    }
    case ModelKind::kNBeatsLite:
      model = std::make_unique<NBeatsLite>(lookback, horizon, NBeatsConfig::from_json(lm), loss);
      break;
  }
  if (model->parametric()) {
    ParamVector p = model->params();
    Rng rng(seed);
    init_he_uniform(p, rng, [](const ParamSlice& s) { return s.name.find(".mlp.") == std::string::npos; });
    model->set_params(p);
  }
  return model;
}

}  // namespace tsbench
