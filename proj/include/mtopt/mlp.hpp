#pragma once

#include <fstream>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "mtopt/common.hpp"
#include "mtopt/rng.hpp"

namespace mtopt {

/// Per-dimension affine normalization x -> (x - mean) / scale.
struct Standardizer {
  VectorXd mean, scale;

  static Standardizer identity(int dim) {
    return {VectorXd::Zero(dim), VectorXd::Ones(dim)};
  }
  /// Fit from rows of a sample matrix; degenerate dimensions get unit scale.
  static Standardizer fit(const MatrixXd& rows) {
    Standardizer s;
    s.mean = rows.colwise().mean();
    VectorXd var = (rows.rowwise() - s.mean.transpose()).array().square().colwise().mean();
    s.scale = var.array().sqrt().max(1e-12).matrix();
    for (int i = 0; i < s.scale.size(); ++i)
      if (s.scale[i] < 1e-9) s.scale[i] = 1.0;
    return s;
  }
  VectorXd transform(const Eigen::Ref<const VectorXd>& x) const {
    return (x - mean).cwiseQuotient(scale);
  }
  VectorXd inverse(const Eigen::Ref<const VectorXd>& z) const {
    return z.cwiseProduct(scale) + mean;
  }
};

namespace detail {
inline double elu(double z) { return z >= 0 ? z : std::expm1(z); }
inline double elu_deriv(double z) { return z >= 0 ? 1.0 : std::exp(z); }
}  // namespace detail

/// Feed-forward network with ELU hidden layers and a linear output layer.
/// forward() is the raw map; predict() wraps it with the stored input/target
/// standardization so callers always see physical units.
struct MlpNetwork {
  std::vector<int> widths;            // input, hidden..., output
  std::vector<MatrixXd> weights;      // layer l: widths[l+1] x widths[l]
  std::vector<VectorXd> biases;
  Standardizer input_std, target_std;
  uint64_t model_fingerprint = 0;
  std::string kind;                   // "r", "e", "etilde", or free-form
  uint64_t train_seed = 0;
  uint64_t train_dataset_hash = 0;

  int layer_count() const { return static_cast<int>(weights.size()); }
  int input_dim() const { return widths.front(); }
  int output_dim() const { return widths.back(); }

  int parameter_count() const {
    int n = 0;
    for (int l = 0; l < layer_count(); ++l)
      n += static_cast<int>(weights[l].size() + biases[l].size());
    return n;
  }

  VectorXd forward(const Eigen::Ref<const VectorXd>& x) const {
    if (x.size() != input_dim()) throw Error("mlp forward: input dimension mismatch");
    VectorXd h = x;
    for (int l = 0; l < layer_count(); ++l) {
      VectorXd z = weights[l] * h + biases[l];
      if (l + 1 < layer_count())
        for (int i = 0; i < z.size(); ++i) z[i] = detail::elu(z[i]);
      h = std::move(z);
    }
    return h;
  }

  VectorXd predict(const Eigen::Ref<const VectorXd>& x) const {
    return target_std.inverse(forward(input_std.transform(x)));
  }

  /// d(predict)/d(input), output_dim x input_dim, by reverse accumulation.
  MatrixXd predict_jacobian(const Eigen::Ref<const VectorXd>& x) const {
    VectorXd h = input_std.transform(x);
    std::vector<VectorXd> pre;  // pre-activations per layer
    pre.reserve(layer_count());
    for (int l = 0; l < layer_count(); ++l) {
      VectorXd z = weights[l] * h + biases[l];
      pre.push_back(z);
      if (l + 1 < layer_count())
        for (int i = 0; i < z.size(); ++i) z[i] = detail::elu(z[i]);
      h = std::move(z);
    }
    MatrixXd J = weights.back();
    for (int l = layer_count() - 2; l >= 0; --l) {
      VectorXd d(pre[l].size());
      for (int i = 0; i < d.size(); ++i) d[i] = detail::elu_deriv(pre[l][i]);
      J = (J * d.asDiagonal()) * weights[l];
    }
    // chain the affine standardizations on both ends
    J = target_std.scale.asDiagonal() * J;
    for (int c = 0; c < J.cols(); ++c) J.col(c) /= input_std.scale[c];
    return J;
  }
};

inline MlpNetwork make_mlp(const std::vector<int>& widths, uint64_t seed,
                           const std::string& kind = "") {
  if (widths.size() < 2) throw Error("make_mlp: need at least input and output widths");
  MlpNetwork net;
  net.widths = widths;
  net.kind = kind;
  net.input_std = Standardizer::identity(widths.front());
  net.target_std = Standardizer::identity(widths.back());
  const CounterRng rng(seed);
  for (size_t l = 0; l + 1 < widths.size(); ++l) {
    const int rows = widths[l + 1], cols = widths[l];
    MatrixXd W(rows, cols);
    const double bound = std::sqrt(6.0 / (rows + cols));
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < cols; ++j)
        W(i, j) = rng.uniform(l, static_cast<uint64_t>(i) * cols + j, -bound, bound);
    net.weights.push_back(std::move(W));
    net.biases.push_back(VectorXd::Zero(rows));
  }
  return net;
}

namespace detail {

inline void flatten_into(const MlpNetwork& net, VectorXd& out) {
  out.resize(net.parameter_count());
  int at = 0;
  for (int l = 0; l < net.layer_count(); ++l) {
    for (int i = 0; i < net.weights[l].rows(); ++i)
      for (int j = 0; j < net.weights[l].cols(); ++j) out[at++] = net.weights[l](i, j);
    for (int i = 0; i < net.biases[l].size(); ++i) out[at++] = net.biases[l][i];
  }
}

inline void unflatten_from(MlpNetwork& net, const VectorXd& in) {
  int at = 0;
  for (int l = 0; l < net.layer_count(); ++l) {
    for (int i = 0; i < net.weights[l].rows(); ++i)
      for (int j = 0; j < net.weights[l].cols(); ++j) net.weights[l](i, j) = in[at++];
    for (int i = 0; i < net.biases[l].size(); ++i) net.biases[l][i] = in[at++];
  }
}

}  // namespace detail

/// Batch MSE loss: mean over samples and output components of squared error.
/// Inputs are columns of X, targets columns of Y.
inline double mlp_batch_loss(const MlpNetwork& net, const MatrixXd& X, const MatrixXd& Y) {
  MatrixXd H = X;
  for (int l = 0; l < net.layer_count(); ++l) {
    MatrixXd Z = (net.weights[l] * H).colwise() + net.biases[l];
    if (l + 1 < net.layer_count()) Z = Z.unaryExpr([](double z) { return detail::elu(z); });
    H = std::move(Z);
  }
  return (H - Y).squaredNorm() / static_cast<double>(Y.rows() * Y.cols());
}

/// Exact reverse-mode gradient of mlp_batch_loss in flattened parameter
/// order (per layer: row-major weights then bias).
inline VectorXd mlp_gradient(const MlpNetwork& net, const MatrixXd& X, const MatrixXd& Y) {
  if (X.cols() == 0) throw Error("mlp_gradient: batch must be non-empty");
  const int L = net.layer_count();
  std::vector<MatrixXd> acts(L + 1), pre(L);
  acts[0] = X;
  for (int l = 0; l < L; ++l) {
    pre[l] = (net.weights[l] * acts[l]).colwise() + net.biases[l];
    acts[l + 1] = (l + 1 < L)
                      ? pre[l].unaryExpr([](double z) { return detail::elu(z); })
                      : pre[l];
  }
  const double denom = static_cast<double>(Y.rows() * Y.cols());
  MatrixXd delta = 2.0 * (acts[L] - Y) / denom;

  std::vector<MatrixXd> gW(L);
  std::vector<VectorXd> gb(L);
  for (int l = L - 1; l >= 0; --l) {
    gW[l] = delta * acts[l].transpose();
    gb[l] = delta.rowwise().sum();
    if (l > 0) {
      delta = net.weights[l].transpose() * delta;
      delta.array() *= pre[l - 1].unaryExpr([](double z) { return detail::elu_deriv(z); }).array();
    }
  }
  VectorXd flat(net.parameter_count());
  int at = 0;
  for (int l = 0; l < L; ++l) {
    for (int i = 0; i < gW[l].rows(); ++i)
      for (int j = 0; j < gW[l].cols(); ++j) flat[at++] = gW[l](i, j);
    for (int i = 0; i < gb[l].size(); ++i) flat[at++] = gb[l][i];
  }
  return flat;
}

struct TrainConfig {
  int epochs = 500;
  int batch_size = 256;
  double step_size = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  uint64_t seed = 1;
  double validation_split = 0.1;
  bool standardize = true;
};

struct TrainTrace {
  std::vector<double> train_mse;  // standardized-space MSE per epoch
  std::vector<double> val_mse;
};

/// Deterministic mini-batch Adam on the MSE loss. Fits and stores the
/// input/target standardizers from the training rows, then trains the raw
/// network in standardized space.
inline TrainTrace train(MlpNetwork& net, const MatrixXd& inputs, const MatrixXd& targets,
                        const TrainConfig& cfg) {
  const int n = static_cast<int>(inputs.rows());
  if (n < cfg.batch_size) throw Error("train: dataset smaller than one batch");
  if (!(cfg.epochs >= 1)) throw Error("train: epochs must be >= 1");
  if (!(cfg.validation_split > 0.0 && cfg.validation_split < 1.0))
    throw Error("train: validation split must lie in (0, 1)");
  if (inputs.cols() != net.input_dim() || targets.cols() != net.output_dim())
    throw Error("train: dataset dimensions do not match the network");

  const CounterRng rng(cfg.seed);
  net.train_seed = cfg.seed;

  // deterministic split permutation
  std::vector<int> perm(n);
  for (int i = 0; i < n; ++i) perm[i] = i;
  for (int i = n - 1; i > 0; --i)
    std::swap(perm[i], perm[rng.below(999, i, static_cast<uint64_t>(i) + 1)]);
  const int n_val = std::max(1, static_cast<int>(n * cfg.validation_split));
  const int n_train = n - n_val;
  if (n_train < cfg.batch_size) throw Error("train: too few training rows after split");

  MatrixXd Xtr(net.input_dim(), n_train), Ytr(net.output_dim(), n_train);
  MatrixXd Xva(net.input_dim(), n_val), Yva(net.output_dim(), n_val);
  for (int i = 0; i < n_train; ++i) {
    Xtr.col(i) = inputs.row(perm[i]).transpose();
    Ytr.col(i) = targets.row(perm[i]).transpose();
  }
  for (int i = 0; i < n_val; ++i) {
    Xva.col(i) = inputs.row(perm[n_train + i]).transpose();
    Yva.col(i) = targets.row(perm[n_train + i]).transpose();
  }

  if (cfg.standardize) {
    net.input_std = Standardizer::fit(Xtr.transpose());
    net.target_std = Standardizer::fit(Ytr.transpose());
  }
  const auto std_cols = [](const Standardizer& s, MatrixXd& M) {
    M = (M.colwise() - s.mean).array().colwise() / s.scale.array();
  };
  std_cols(net.input_std, Xtr);
  std_cols(net.target_std, Ytr);
  std_cols(net.input_std, Xva);
  std_cols(net.target_std, Yva);

  VectorXd theta;
  detail::flatten_into(net, theta);
  VectorXd m = VectorXd::Zero(theta.size()), v = VectorXd::Zero(theta.size());
  long step = 0;

  TrainTrace trace;
  std::vector<int> order(n_train);
  for (int i = 0; i < n_train; ++i) order[i] = i;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (int i = n_train - 1; i > 0; --i)
      std::swap(order[i],
                order[rng.below(1000 + epoch, i, static_cast<uint64_t>(i) + 1)]);

    for (int start = 0; start + cfg.batch_size <= n_train; start += cfg.batch_size) {
      MatrixXd Xb(net.input_dim(), cfg.batch_size), Yb(net.output_dim(), cfg.batch_size);
      for (int k = 0; k < cfg.batch_size; ++k) {
        Xb.col(k) = Xtr.col(order[start + k]);
        Yb.col(k) = Ytr.col(order[start + k]);
      }
      const VectorXd g = mlp_gradient(net, Xb, Yb);
      ++step;
      m = cfg.beta1 * m + (1 - cfg.beta1) * g;
      v = cfg.beta2 * v + (1 - cfg.beta2) * g.cwiseProduct(g);
      const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
      const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
      theta -= (cfg.step_size / bc1) *
               (m.array() / ((v.array() / bc2).sqrt() + cfg.adam_eps)).matrix();
      detail::unflatten_from(net, theta);
    }

    const double tr = mlp_batch_loss(net, Xtr, Ytr);
    const double va = mlp_batch_loss(net, Xva, Yva);
    if (!std::isfinite(tr) || !std::isfinite(va))
      throw SolverError("train: loss diverged at epoch " + std::to_string(epoch));
    trace.train_mse.push_back(tr);
    trace.val_mse.push_back(va);
  }
  return trace;
}

struct EvalReport {
  double accuracy = 0.0;
  int n = 0;
  std::vector<double> histogram_edges;   // error-metric bin edges
  std::vector<int> histogram_counts;
};

/// Tolerance rule for prediction correctness. R-style networks use a
/// per-component absolute band; E-style networks a relative-or-absolute band.
struct EvalBand {
  enum class Rule { PerComponentAbs, RelOrAbs } rule = Rule::PerComponentAbs;
  double abs_tol = 3.0;   // N m for R-nets
  double rel_tol = 0.05;  // 5% for E-nets
  double rel_floor = 5.0;  // effort units

  static EvalBand for_kind(const std::string& kind) {
    if (kind == "e" || kind == "etilde") return {Rule::RelOrAbs, 3.0, 0.05, 5.0};
    return {Rule::PerComponentAbs, 3.0, 0.05, 5.0};
  }

  bool correct(const VectorXd& predicted, const VectorXd& target) const {
    if (rule == Rule::PerComponentAbs)
      return ((predicted - target).cwiseAbs().array() <= abs_tol).all();
    const double err = (predicted - target).cwiseAbs().maxCoeff();
    const double allowed = std::max(rel_tol * target.cwiseAbs().maxCoeff(), rel_floor);
    return err <= allowed;
  }
  double error_metric(const VectorXd& predicted, const VectorXd& target) const {
    return (predicted - target).cwiseAbs().maxCoeff();
  }
};

inline EvalReport evaluate(const MlpNetwork& net, const MatrixXd& inputs,
                           const MatrixXd& targets, const EvalBand& band) {
  const int n = static_cast<int>(inputs.rows());
  if (n == 0) throw Error("evaluate: empty test set");
  EvalReport rep;
  rep.n = n;
  std::vector<double> errs(n);
  int correct = 0;
  for (int i = 0; i < n; ++i) {
    const VectorXd pred = net.predict(inputs.row(i).transpose());
    const VectorXd tgt = targets.row(i).transpose();
    if (band.correct(pred, tgt)) ++correct;
    errs[i] = band.error_metric(pred, tgt);
  }
  rep.accuracy = static_cast<double>(correct) / n;

  const double emax = *std::max_element(errs.begin(), errs.end());
  const int bins = 20;
  const double width = emax > 0 ? emax / bins : 1.0;
  rep.histogram_edges.resize(bins + 1);
  rep.histogram_counts.assign(bins, 0);
  for (int b = 0; b <= bins; ++b) rep.histogram_edges[b] = b * width;
  for (double e : errs) {
    int b = std::min(bins - 1, static_cast<int>(e / width));
    ++rep.histogram_counts[b];
  }
  return rep;
}

inline void save_network(const MlpNetwork& net, const std::string& path) {
  nlohmann::json j;
  j["format"] = "mtopt-network";
  j["version"] = 1;
  j["kind"] = net.kind;
  j["model_fingerprint"] = hex64(net.model_fingerprint);
  j["widths"] = net.widths;
  j["activation"] = "elu";
  const auto vec = [](const VectorXd& v) {
    return std::vector<double>(v.data(), v.data() + v.size());
  };
  j["input_mean"] = vec(net.input_std.mean);
  j["input_scale"] = vec(net.input_std.scale);
  j["target_mean"] = vec(net.target_std.mean);
  j["target_scale"] = vec(net.target_std.scale);
  j["train_seed"] = net.train_seed;
  j["train_dataset_hash"] = hex64(net.train_dataset_hash);
  nlohmann::json layers = nlohmann::json::array();
  for (int l = 0; l < net.layer_count(); ++l) {
    std::vector<double> w;
    w.reserve(net.weights[l].size());
    for (int i = 0; i < net.weights[l].rows(); ++i)
      for (int c = 0; c < net.weights[l].cols(); ++c) w.push_back(net.weights[l](i, c));
    layers.push_back({{"weights", w}, {"bias", vec(net.biases[l])}});
  }
  j["layers"] = layers;
  std::ofstream out(path);
  if (!out) throw IoError("cannot write network file: " + path);
  out << j.dump(2) << "\n";
}

inline MlpNetwork load_network(const std::string& path,
                               uint64_t expected_fingerprint = 0) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open network file: " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("network parse error: ") + e.what());
  }
  if (j.value("format", "") != "mtopt-network")
    throw ParseError("network file: unrecognized format tag");
  if (j.value("version", 0) != 1)
    throw Error("network file: unsupported version " + std::to_string(j.value("version", 0)));

  MlpNetwork net;
  net.kind = j.value("kind", "");
  net.widths = j["widths"].get<std::vector<int>>();
  net.model_fingerprint = std::stoull(j["model_fingerprint"].get<std::string>(), nullptr, 16);
  net.train_seed = j.value("train_seed", 0ull);
  if (j.contains("train_dataset_hash"))
    net.train_dataset_hash =
        std::stoull(j["train_dataset_hash"].get<std::string>(), nullptr, 16);
  const auto get_vec = [&](const char* key) {
    const auto v = j[key].get<std::vector<double>>();
    return VectorXd(Eigen::Map<const VectorXd>(v.data(), static_cast<long>(v.size())));
  };
  net.input_std = {get_vec("input_mean"), get_vec("input_scale")};
  net.target_std = {get_vec("target_mean"), get_vec("target_scale")};
  if (net.input_std.mean.size() != net.widths.front() ||
      net.target_std.mean.size() != net.widths.back())
    throw ParseError("network file: standardizer dimensions do not match widths");

  for (size_t l = 0; l + 1 < net.widths.size(); ++l) {
    const auto& jl = j["layers"][l];
    const int rows = net.widths[l + 1], cols = net.widths[l];
    const auto w = jl["weights"].get<std::vector<double>>();
    const auto b = jl["bias"].get<std::vector<double>>();
    if (static_cast<int>(w.size()) != rows * cols || static_cast<int>(b.size()) != rows)
      throw ParseError("network file: layer " + std::to_string(l) + " has wrong size");
    MatrixXd W(rows, cols);
    for (int i = 0; i < rows; ++i)
      for (int c = 0; c < cols; ++c) W(i, c) = w[static_cast<size_t>(i) * cols + c];
    net.weights.push_back(std::move(W));
    net.biases.push_back(Eigen::Map<const VectorXd>(b.data(), rows));
  }

  if (expected_fingerprint != 0 && net.model_fingerprint != expected_fingerprint)
    throw ValidationError("refusing to load network: model fingerprint mismatch (network " +
                          hex64(net.model_fingerprint) + ", expected " +
                          hex64(expected_fingerprint) + ")");
  return net;
}

}  // namespace mtopt
