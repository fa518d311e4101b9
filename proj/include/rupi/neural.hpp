#pragma once

// Fully connected networks trained by mini-batch gradient descent: the
// forecaster (encoder + prediction head) and the decoder that reconstructs
// inputs from the frozen encoder's latent codes.

#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rupi/calibration_errors.hpp"
#include "rupi/dataio.hpp"
#include "rupi/error.hpp"
#include "rupi/rng.hpp"
#include "rupi/statcore.hpp"

namespace rupi {

enum class Activation { identity, relu, tanh };

inline const char* to_string(Activation a) {
  switch (a) {
    case Activation::identity: return "identity";
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
  }
  return "?";
}

inline Activation parse_activation(std::string_view s) {
  if (s == "identity") return Activation::identity;
  if (s == "relu") return Activation::relu;
  if (s == "tanh") return Activation::tanh;
  throw ConfigError("unknown activation '" + std::string(s) + "'");
}

struct Layer {
  Matrix weight;  // out × in
  Vector bias;    // out
  Activation activation = Activation::identity;
};

namespace detail {

inline void activate(Matrix& z, Activation a) {
  switch (a) {
    case Activation::identity: break;
    case Activation::relu: z = z.cwiseMax(0.0); break;
    case Activation::tanh: z = z.array().tanh().matrix(); break;
  }
}

// Derivative expressed through the activation output.
inline Matrix activation_grad(const Matrix& out, Activation a) {
  switch (a) {
    case Activation::identity: return Matrix::Ones(out.rows(), out.cols());
    case Activation::relu: return (out.array() > 0.0).cast<double>().matrix();
    case Activation::tanh: return (1.0 - out.array().square()).matrix();
  }
  return {};
}

}  // namespace detail

/// Multilayer perceptron over row-major batches (one instance per row).
/// Hidden layers share one activation; the output layer is linear. Layers
/// carry their own activation tag so two networks can be stacked.
class Mlp {
 public:
  Mlp() = default;
  explicit Mlp(std::vector<Layer> layers) : layers_(std::move(layers)) { check(); }

  /// Glorot-uniform weights, zero biases.
  static Mlp init(const std::vector<std::size_t>& widths, Activation hidden, Rng& rng) {
    if (widths.size() < 2) throw ConfigError("an MLP needs at least input and output widths");
    std::vector<Layer> layers;
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
      const auto in = static_cast<Eigen::Index>(widths[l]);
      const auto out = static_cast<Eigen::Index>(widths[l + 1]);
      if (in < 1 || out < 1) throw ConfigError("layer widths must be positive");
      const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
      Layer layer;
      layer.weight.resize(out, in);
      for (Eigen::Index i = 0; i < out; ++i)
        for (Eigen::Index j = 0; j < in; ++j) layer.weight(i, j) = rng.uniform(-limit, limit);
      layer.bias = Vector::Zero(out);
      layer.activation = l + 2 == widths.size() ? Activation::identity : hidden;
      layers.push_back(std::move(layer));
    }
    return Mlp(std::move(layers));
  }

  /// `first` followed by `second`.
  static Mlp stack(const Mlp& first, const Mlp& second) {
    std::vector<Layer> layers = first.layers_;
    layers.insert(layers.end(), second.layers_.begin(), second.layers_.end());
    return Mlp(std::move(layers));
  }

  const std::vector<Layer>& layers() const noexcept { return layers_; }
  std::vector<Layer>& layers() noexcept { return layers_; }

  std::size_t input_dim() const { return layers_.empty() ? 0 : static_cast<std::size_t>(layers_.front().weight.cols()); }
  std::size_t output_dim() const { return layers_.empty() ? 0 : static_cast<std::size_t>(layers_.back().weight.rows()); }

  std::vector<std::size_t> widths() const {
    std::vector<std::size_t> w;
    if (layers_.empty()) return w;
    w.push_back(input_dim());
    for (const auto& l : layers_) w.push_back(static_cast<std::size_t>(l.weight.rows()));
    return w;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
    return n;
  }

  Matrix forward(const Matrix& x) const {
    if (static_cast<std::size_t>(x.cols()) != input_dim())
      throw DataError("MLP expects " + std::to_string(input_dim()) + " input columns, got " +
                      std::to_string(x.cols()));
    Matrix a = x;
    for (const auto& l : layers_) {
      Matrix z = (a * l.weight.transpose()).rowwise() + l.bias.transpose();
      detail::activate(z, l.activation);
      a = std::move(z);
    }
    return a;
  }

  friend bool operator==(const Mlp& a, const Mlp& b) {
    if (a.layers_.size() != b.layers_.size()) return false;
    for (std::size_t l = 0; l < a.layers_.size(); ++l) {
      const auto &x = a.layers_[l], &y = b.layers_[l];
      if (x.activation != y.activation || x.weight.rows() != y.weight.rows() ||
          x.weight.cols() != y.weight.cols() || x.weight != y.weight || x.bias != y.bias)
        return false;
    }
    return true;
  }

 private:
  void check() const {
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      if (layers_[l].bias.size() != layers_[l].weight.rows())
        throw DataError("MLP layer " + std::to_string(l) + ": bias does not match weight rows");
      if (l > 0 && layers_[l].weight.cols() != layers_[l - 1].weight.rows())
        throw DataError("MLP layer " + std::to_string(l) + ": incompatible input width");
      if (!layers_[l].weight.allFinite() || !layers_[l].bias.allFinite())
        throw NumericError("MLP layer " + std::to_string(l) + " has non-finite parameters");
    }
  }

  std::vector<Layer> layers_;
};

struct Gradients {
  std::vector<Matrix> weight;
  std::vector<Vector> bias;
};

/// Mean squared error over every (row, output) cell plus
/// ½·weight_decay·Σ‖W‖², and its gradient by backpropagation.
inline double loss_and_gradient(const Mlp& net, const Matrix& x, const Matrix& y,
                                double weight_decay, Gradients* grad) {
  const auto& layers = net.layers();
  std::vector<Matrix> acts{x};
  acts.reserve(layers.size() + 1);
  for (const auto& l : layers) {
    Matrix z = (acts.back() * l.weight.transpose()).rowwise() + l.bias.transpose();
    detail::activate(z, l.activation);
    acts.push_back(std::move(z));
  }
  const Matrix diff = acts.back() - y;
  const double cells = static_cast<double>(diff.size());
  double loss = diff.squaredNorm() / cells;
  if (weight_decay > 0.0)
    for (const auto& l : layers) loss += 0.5 * weight_decay * l.weight.squaredNorm();
  if (!grad) return loss;

  grad->weight.resize(layers.size());
  grad->bias.resize(layers.size());
  Matrix delta = (2.0 / cells) * diff;
  for (std::size_t k = layers.size(); k-- > 0;) {
    delta.array() *= detail::activation_grad(acts[k + 1], layers[k].activation).array();
    grad->weight[k] = delta.transpose() * acts[k];
    if (weight_decay > 0.0) grad->weight[k] += weight_decay * layers[k].weight;
    grad->bias[k] = delta.colwise().sum().transpose();
    if (k > 0) delta = delta * layers[k].weight;
  }
  return loss;
}

inline double mse(const Mlp& net, const Matrix& x, const Matrix& y) {
  return loss_and_gradient(net, x, y, 0.0, nullptr);
}

struct TrainConfig {
  double learning_rate = 0.05;
  std::size_t max_epochs = 200;
  std::size_t batch_size = 64;
  std::size_t patience = 20;
  double weight_decay = 0.0;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
    if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
    if (patience < 1) throw ConfigError("patience must be at least 1");
    if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be nonnegative");
  }
};

struct FitResult {
  Mlp net;
  double best_val_loss = 0.0;
  std::size_t best_epoch = 0;
  std::size_t epochs_run = 0;
};

/// Mini-batch gradient descent with early stopping on validation MSE. The
/// parameters with the lowest validation loss are returned.
inline FitResult fit(Mlp net, const Matrix& x_train, const Matrix& y_train, const Matrix& x_val,
                     const Matrix& y_val, const TrainConfig& cfg, Rng& rng) {
  cfg.validate();
  if (x_train.rows() == 0) throw DataError("training split is empty");
  if (x_val.rows() == 0) throw DataError("validation split is empty");
  if (x_train.rows() != y_train.rows() || x_val.rows() != y_val.rows())
    throw DataError("input and target row counts differ");

  FitResult best{net, mse(net, x_val, y_val), 0, 0};
  if (!std::isfinite(best.best_val_loss))
    throw NumericError("initial validation loss is not finite");

  const auto n = static_cast<std::size_t>(x_train.rows());
  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  Gradients g;
  std::size_t stale = 0;
  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    rng.shuffle(std::span<Eigen::Index>(order));
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t end = std::min(n, start + cfg.batch_size);
      std::vector<Eigen::Index> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                    order.begin() + static_cast<std::ptrdiff_t>(end));
      const Matrix xb = x_train(idx, Eigen::all);
      const Matrix yb = y_train(idx, Eigen::all);
      const double loss = loss_and_gradient(net, xb, yb, cfg.weight_decay, &g);
      if (!std::isfinite(loss))
        throw NumericError("training diverged: non-finite loss at epoch " + std::to_string(epoch) +
                           " (learning rate " + std::to_string(cfg.learning_rate) + ")");
      auto& layers = net.layers();
      for (std::size_t k = 0; k < layers.size(); ++k) {
        layers[k].weight -= cfg.learning_rate * g.weight[k];
        layers[k].bias -= cfg.learning_rate * g.bias[k];
      }
    }
    best.epochs_run = epoch;
    const double val = mse(net, x_val, y_val);
    if (!std::isfinite(val))
      throw NumericError("training diverged: non-finite validation loss at epoch " +
                         std::to_string(epoch) + " (learning rate " +
                         std::to_string(cfg.learning_rate) + ")");
    if (val < best.best_val_loss) {
      best.net = net;
      best.best_val_loss = val;
      best.best_epoch = epoch;
      stale = 0;
    } else if (++stale >= cfg.patience) {
      break;
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// Forecaster + decoder

struct ArchitectureConfig {
  std::vector<std::size_t> encoder_hidden{64};
  std::size_t latent = 32;
  std::vector<std::size_t> head_hidden{};
  std::vector<std::size_t> decoder_hidden{64};
  Activation activation = Activation::relu;
};

struct RueModel {
  Mlp encoder;  // inputs → latent
  Mlp head;     // latent → targets
  Mlp decoder;  // latent → inputs
  std::uint64_t seed = 0;
  double forecaster_val_loss = std::numeric_limits<double>::quiet_NaN();
  double decoder_val_loss = std::numeric_limits<double>::quiet_NaN();

  void check() const {
    if (encoder.output_dim() != head.input_dim() || encoder.output_dim() != decoder.input_dim())
      throw DataError("model: encoder latent width does not match head/decoder input");
    if (decoder.output_dim() != encoder.input_dim())
      throw DataError("model: decoder output width does not match the input width");
  }

  Matrix latent(const Matrix& x) const { return encoder.forward(x); }
  Matrix predict(const Matrix& x) const { return head.forward(encoder.forward(x)); }
  Matrix reconstruct(const Matrix& x) const { return decoder.forward(encoder.forward(x)); }
};

inline std::vector<std::size_t> chain(std::size_t in, const std::vector<std::size_t>& hidden,
                                      std::size_t out) {
  std::vector<std::size_t> w{in};
  w.insert(w.end(), hidden.begin(), hidden.end());
  w.push_back(out);
  return w;
}

struct Forecaster {
  Mlp encoder;
  Mlp head;
  double val_loss = 0.0;
  std::size_t epochs_run = 0;
};

/// Trains encoder and head jointly on the train split, early-stopping on the
/// validation split.
inline Forecaster train_forecaster(const Matrix& x_train, const Matrix& y_train,
                                   const Matrix& x_val, const Matrix& y_val,
                                   const ArchitectureConfig& arch, const TrainConfig& cfg) {
  Rng rng(cfg.seed);
  Mlp enc = Mlp::init(chain(static_cast<std::size_t>(x_train.cols()), arch.encoder_hidden, arch.latent),
                      arch.activation, rng);
  Mlp head = Mlp::init(chain(arch.latent, arch.head_hidden, static_cast<std::size_t>(y_train.cols())),
                       arch.activation, rng);
  const std::size_t split_at = enc.layers().size();
  auto res = fit(Mlp::stack(enc, head), x_train, y_train, x_val, y_val, cfg, rng);
  const auto& layers = res.net.layers();
  Forecaster f;
  f.encoder = Mlp({layers.begin(), layers.begin() + static_cast<std::ptrdiff_t>(split_at)});
  f.head = Mlp({layers.begin() + static_cast<std::ptrdiff_t>(split_at), layers.end()});
  f.val_loss = res.best_val_loss;
  f.epochs_run = res.epochs_run;
  return f;
}

inline Forecaster train_forecaster(const WindowedDataset& ds, const ArchitectureConfig& arch,
                                   const TrainConfig& cfg) {
  return train_forecaster(ds.input_rows(Split::train), ds.target_rows(Split::train),
                          ds.input_rows(Split::validation), ds.target_rows(Split::validation),
                          arch, cfg);
}

/// Trains a decoder from the frozen encoder's latent codes back to the
/// inputs. The encoder is only evaluated, never updated.
inline FitResult train_decoder(const Mlp& encoder, const Matrix& x_train, const Matrix& x_val,
                               const std::vector<std::size_t>& hidden, Activation activation,
                               const TrainConfig& cfg) {
  Rng rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  const Matrix z_train = encoder.forward(x_train);
  const Matrix z_val = encoder.forward(x_val);
  Mlp dec = Mlp::init(chain(encoder.output_dim(), hidden, encoder.input_dim()), activation, rng);
  return fit(std::move(dec), z_train, x_train, z_val, x_val, cfg, rng);
}

inline FitResult train_decoder(const Mlp& encoder, const WindowedDataset& ds,
                               const ArchitectureConfig& arch, const TrainConfig& cfg) {
  return train_decoder(encoder, ds.input_rows(Split::train), ds.input_rows(Split::validation),
                       arch.decoder_hidden, arch.activation, cfg);
}

/// Forecaster first, then the decoder on the frozen encoder.
inline RueModel train_rue_model(const WindowedDataset& ds, const ArchitectureConfig& arch,
                                const TrainConfig& cfg) {
  auto f = train_forecaster(ds, arch, cfg);
  auto d = train_decoder(f.encoder, ds, arch, cfg);
  RueModel m{std::move(f.encoder), std::move(f.head), std::move(d.net), cfg.seed, f.val_loss,
             d.best_val_loss};
  m.check();
  return m;
}

inline Matrix predict(const RueModel& model, const Matrix& inputs) { return model.predict(inputs); }

/// ρ = |x - x̂|, e = |y - ŷ|, and the row sums of ρ.
inline CalibrationErrors compute_errors(const RueModel& model, const Matrix& inputs,
                                        const Matrix& targets) {
  if (inputs.rows() != targets.rows()) throw DataError("compute_errors: row counts differ");
  const Matrix z = model.latent(inputs);
  Matrix rho = (inputs - model.decoder.forward(z)).cwiseAbs();
  Matrix err = (targets - model.head.forward(z)).cwiseAbs();
  return CalibrationErrors::from(std::move(rho), std::move(err));
}

// ---------------------------------------------------------------------------
// model.json

inline nlohmann::ordered_json to_json(const Mlp& net) {
  nlohmann::ordered_json j;
  j["widths"] = net.widths();
  auto acts = nlohmann::ordered_json::array();
  auto layers = nlohmann::ordered_json::array();
  for (const auto& l : net.layers()) {
    acts.push_back(to_string(l.activation));
    std::vector<double> w;
    w.reserve(static_cast<std::size_t>(l.weight.size()));
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) w.push_back(l.weight(r, c));
    layers.push_back({{"weight", w}, {"bias", std::vector<double>(l.bias.begin(), l.bias.end())}});
  }
  j["activations"] = acts;
  j["layers"] = layers;
  return j;
}

inline Mlp mlp_from_json(const nlohmann::json& j) {
  const auto widths = j.at("widths").get<std::vector<std::size_t>>();
  const auto acts = j.at("activations").get<std::vector<std::string>>();
  const auto& layers = j.at("layers");
  if (widths.size() != layers.size() + 1 || acts.size() != layers.size())
    throw DataError("model.json: widths/activations/layers are inconsistent");
  std::vector<Layer> out;
  for (std::size_t k = 0; k < layers.size(); ++k) {
    const auto w = layers[k].at("weight").get<std::vector<double>>();
    const auto b = layers[k].at("bias").get<std::vector<double>>();
    const auto rows = static_cast<Eigen::Index>(widths[k + 1]);
    const auto cols = static_cast<Eigen::Index>(widths[k]);
    if (static_cast<Eigen::Index>(w.size()) != rows * cols || static_cast<Eigen::Index>(b.size()) != rows)
      throw DataError("model.json: layer " + std::to_string(k) + " has the wrong parameter count");
    Layer l;
    l.weight = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        w.data(), rows, cols);
    l.bias = Eigen::Map<const Vector>(b.data(), rows);
    l.activation = parse_activation(acts[k]);
    out.push_back(std::move(l));
  }
  return Mlp(std::move(out));
}

inline nlohmann::ordered_json to_json(const RueModel& m) {
  nlohmann::ordered_json j;
  j["encoder"] = to_json(m.encoder);
  j["head"] = to_json(m.head);
  j["decoder"] = to_json(m.decoder);
  j["training"] = {{"seed", m.seed},
                   {"forecaster_val_loss", m.forecaster_val_loss},
                   {"decoder_val_loss", m.decoder_val_loss}};
  return j;
}

inline RueModel model_from_json(const nlohmann::json& j) {
  try {
    RueModel m;
    m.encoder = mlp_from_json(j.at("encoder"));
    m.head = mlp_from_json(j.at("head"));
    m.decoder = mlp_from_json(j.at("decoder"));
    const auto& t = j.at("training");
    m.seed = t.at("seed").get<std::uint64_t>();
    m.forecaster_val_loss = t.at("forecaster_val_loss").get<double>();
    m.decoder_val_loss = t.at("decoder_val_loss").get<double>();
    m.check();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("model.json: ") + e.what());
  }
}

}  // namespace rupi
