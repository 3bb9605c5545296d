#pragma once

// Small classification models with exact analytic gradients.
//
// Parameters live in one flat vector. Each dense layer with `in` inputs and
// `out` outputs occupies `out * (in + 1)` consecutive entries laid out as a
// column-major `out x (in + 1)` matrix [W | b]: the weight for (output k,
// input j) sits at `k + j * out` and bias k at `k + in * out`.
//
//   LogisticRegression: logits = X W^T + b
//   Mlp1:               logits = tanh(X W1^T + b1) W2^T + b2
//
// The loss is the mean softmax cross-entropy over the batch.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fedsim/errors.hpp"
#include "fedsim/random.hpp"

namespace fedsim {

using Index = Eigen::Index;

enum class ModelKind { LogisticRegression, Mlp1 };

struct ModelSpec {
  ModelKind kind = ModelKind::LogisticRegression;
  Index input_dim = 1;
  Index num_classes = 2;
  Index hidden_dim = 0;  // Mlp1 only

  static ModelSpec logistic(Index input_dim, Index num_classes) {
    return {ModelKind::LogisticRegression, input_dim, num_classes, 0};
  }
  static ModelSpec mlp(Index input_dim, Index hidden_dim, Index num_classes) {
    return {ModelKind::Mlp1, input_dim, num_classes, hidden_dim};
  }

  void validate() const {
    if (input_dim < 1) throw ConfigError("model input_dim must be >= 1");
    if (num_classes < 2) throw ConfigError("model num_classes must be >= 2");
    if (kind == ModelKind::Mlp1 && hidden_dim < 1)
      throw ConfigError("model hidden_dim must be >= 1 for an mlp");
    if (kind == ModelKind::LogisticRegression && hidden_dim != 0)
      throw ConfigError("model hidden_dim is only valid for an mlp");
  }

  Index parameter_count() const {
    if (kind == ModelKind::LogisticRegression) return (input_dim + 1) * num_classes;
    return (input_dim + 1) * hidden_dim + (hidden_dim + 1) * num_classes;
  }

  /// FNV-1a over the defining fields.
  std::uint64_t fingerprint() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto feed = [&h](std::uint64_t v) {
      for (int i = 0; i < 8; ++i) {
        h ^= (v >> (8 * i)) & 0xffU;
        h *= 0x100000001b3ULL;
      }
    };
    feed(static_cast<std::uint64_t>(kind));
    feed(static_cast<std::uint64_t>(input_dim));
    feed(static_cast<std::uint64_t>(num_classes));
    feed(static_cast<std::uint64_t>(hidden_dim));
    return h;
  }

  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

/// Model parameters bound to the spec they were created for.
template <typename Scalar>
struct BasicParamVector {
  Vector<Scalar> values;
  std::uint64_t fingerprint = 0;

  Index size() const { return values.size(); }

  template <typename To>
  BasicParamVector<To> cast() const {
    return {values.template cast<To>(), fingerprint};
  }

  friend bool operator==(const BasicParamVector& a, const BasicParamVector& b) {
    return a.fingerprint == b.fingerprint && a.values.size() == b.values.size() &&
           a.values == b.values;
  }
};

using ParamVector = BasicParamVector<double>;

template <typename Scalar>
struct BasicBatch {
  Matrix<Scalar> features;
  std::vector<int> labels;
};

using Batch = BasicBatch<double>;

struct Evaluation {
  double accuracy = 0.0;
  double loss = 0.0;
  Index correct = 0;
  Index count = 0;
};

/// Number of mini-batch steps in one pass over `rows` samples.
inline std::int64_t steps_per_epoch(Index rows, Index batch_size) {
  return (rows + batch_size - 1) / batch_size;
}

namespace detail {

struct Layer {
  Index in = 0;
  Index out = 0;
  Index offset = 0;
  Index size() const { return out * (in + 1); }
};

inline std::vector<Layer> layers(const ModelSpec& spec) {
  if (spec.kind == ModelKind::LogisticRegression)
    return {{spec.input_dim, spec.num_classes, 0}};
  const Layer hidden{spec.input_dim, spec.hidden_dim, 0};
  return {hidden, {spec.hidden_dim, spec.num_classes, hidden.size()}};
}

template <typename Scalar>
auto weights(const Vector<Scalar>& p, const Layer& l) {
  return Eigen::Map<const Matrix<Scalar>>(p.data() + l.offset, l.out, l.in);
}
template <typename Scalar>
auto bias(const Vector<Scalar>& p, const Layer& l) {
  return Eigen::Map<const Vector<Scalar>>(p.data() + l.offset + l.out * l.in, l.out);
}
template <typename Scalar>
auto weights(Vector<Scalar>& p, const Layer& l) {
  return Eigen::Map<Matrix<Scalar>>(p.data() + l.offset, l.out, l.in);
}
template <typename Scalar>
auto bias(Vector<Scalar>& p, const Layer& l) {
  return Eigen::Map<Vector<Scalar>>(p.data() + l.offset + l.out * l.in, l.out);
}

template <typename Scalar, typename Derived>
void check_inputs(const ModelSpec& spec, const BasicParamVector<Scalar>& params,
                  const Eigen::MatrixBase<Derived>& features, std::span<const int> labels) {
  if (params.fingerprint != spec.fingerprint())
    throw SpecMismatchError("parameter vector is bound to a different model spec");
  if (params.size() != spec.parameter_count())
    throw DimensionError("parameter vector has " + std::to_string(params.size()) +
                         " entries, model expects " + std::to_string(spec.parameter_count()));
  if (features.rows() == 0) throw EmptyDataError("batch has no rows");
  if (features.cols() != spec.input_dim)
    throw DimensionError("batch has " + std::to_string(features.cols()) +
                         " feature columns, model expects " + std::to_string(spec.input_dim));
  if (static_cast<Index>(labels.size()) != features.rows())
    throw DimensionError("batch has " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(features.rows()) + " rows");
  for (int y : labels)
    if (y < 0 || y >= spec.num_classes)
      throw DimensionError("label " + std::to_string(y) + " outside [0, " +
                           std::to_string(spec.num_classes) + ")");
}

template <typename Scalar>
struct Forward {
  Matrix<Scalar> hidden;  // tanh activations, Mlp1 only
  Matrix<Scalar> logits;
};

template <typename Scalar, typename Derived>
Forward<Scalar> forward(const ModelSpec& spec, const Vector<Scalar>& p,
                        const Eigen::MatrixBase<Derived>& x) {
  const auto ls = layers(spec);
  Forward<Scalar> f;
  if (spec.kind == ModelKind::LogisticRegression) {
    f.logits = (x * weights(p, ls[0]).transpose()).rowwise() + bias(p, ls[0]).transpose();
    return f;
  }
  f.hidden = ((x * weights(p, ls[0]).transpose()).rowwise() + bias(p, ls[0]).transpose())
                 .array()
                 .tanh()
                 .matrix();
  f.logits = (f.hidden * weights(p, ls[1]).transpose()).rowwise() + bias(p, ls[1]).transpose();
  return f;
}

/// Row-wise log-sum-exp with max subtraction.
template <typename Scalar>
Vector<Scalar> log_sum_exp(const Matrix<Scalar>& logits) {
  const Vector<Scalar> m = logits.rowwise().maxCoeff();
  const Vector<Scalar> s = (logits.colwise() - m).array().exp().rowwise().sum();
  return m.array() + s.array().log();
}

}  // namespace detail

/// Glorot-uniform weights in (-a, a), a = sqrt(6 / (fan_in + fan_out)); zero biases.
inline ParamVector init_model(const ModelSpec& spec, std::uint64_t seed) {
  spec.validate();
  ParamVector p{Vector<double>::Zero(spec.parameter_count()), spec.fingerprint()};
  Rng rng(seed);
  for (const auto& l : detail::layers(spec)) {
    const double a = std::sqrt(6.0 / static_cast<double>(l.in + l.out));
    auto w = detail::weights(p.values, l);
    for (Index j = 0; j < w.cols(); ++j)
      for (Index k = 0; k < w.rows(); ++k) w(k, j) = rng.uniform(-a, a);
  }
  return p;
}

template <typename Scalar>
BasicParamVector<Scalar> zero_params(const ModelSpec& spec) {
  return {Vector<Scalar>::Zero(spec.parameter_count()), spec.fingerprint()};
}

template <typename Scalar, typename Derived>
Matrix<Scalar> logits(const ModelSpec& spec, const BasicParamVector<Scalar>& params,
                      const Eigen::MatrixBase<Derived>& features) {
  return detail::forward<Scalar>(spec, params.values, features).logits;
}

/// Mean softmax cross-entropy.
template <typename Scalar, typename Derived>
Scalar loss(const ModelSpec& spec, const BasicParamVector<Scalar>& params,
            const Eigen::MatrixBase<Derived>& features, std::span<const int> labels) {
  detail::check_inputs(spec, params, features, labels);
  const auto f = detail::forward<Scalar>(spec, params.values, features);
  const Vector<Scalar> lse = detail::log_sum_exp<Scalar>(f.logits);
  Scalar total(0);
  for (Index i = 0; i < f.logits.rows(); ++i) total += lse(i) - f.logits(i, labels[i]);
  return total / static_cast<Scalar>(f.logits.rows());
}

template <typename Scalar>
Scalar loss(const ModelSpec& spec, const BasicParamVector<Scalar>& params,
            const BasicBatch<Scalar>& batch) {
  return loss(spec, params, batch.features, std::span<const int>(batch.labels));
}

/// Exact gradient of `loss` with respect to every parameter, in parameter layout.
template <typename Scalar, typename Derived>
BasicParamVector<Scalar> gradient(const ModelSpec& spec, const BasicParamVector<Scalar>& params,
                                  const Eigen::MatrixBase<Derived>& features,
                                  std::span<const int> labels) {
  detail::check_inputs(spec, params, features, labels);
  const auto f = detail::forward<Scalar>(spec, params.values, features);
  const Index rows = f.logits.rows();

  // d loss / d logits = (softmax - onehot) / rows
  const Vector<Scalar> lse = detail::log_sum_exp<Scalar>(f.logits);
  Matrix<Scalar> delta = (f.logits.colwise() - lse).array().exp().matrix();
  for (Index i = 0; i < rows; ++i) delta(i, labels[i]) -= Scalar(1);
  delta /= static_cast<Scalar>(rows);

  BasicParamVector<Scalar> g = zero_params<Scalar>(spec);
  const auto ls = detail::layers(spec);
  if (spec.kind == ModelKind::LogisticRegression) {
    detail::weights(g.values, ls[0]) = delta.transpose() * features;
    detail::bias(g.values, ls[0]) = delta.colwise().sum().transpose();
    return g;
  }
  detail::weights(g.values, ls[1]) = delta.transpose() * f.hidden;
  detail::bias(g.values, ls[1]) = delta.colwise().sum().transpose();
  const Matrix<Scalar> pre_delta =
      ((delta * detail::weights(params.values, ls[1])).array() *
       (Scalar(1) - f.hidden.array().square()))
          .matrix();
  detail::weights(g.values, ls[0]) = pre_delta.transpose() * features;
  detail::bias(g.values, ls[0]) = pre_delta.colwise().sum().transpose();
  return g;
}

template <typename Scalar>
BasicParamVector<Scalar> gradient(const ModelSpec& spec, const BasicParamVector<Scalar>& params,
                                  const BasicBatch<Scalar>& batch) {
  return gradient(spec, params, batch.features, std::span<const int>(batch.labels));
}

/// Hessian of the mean loss. LogisticRegression only.
template <typename Scalar, typename Derived>
Matrix<Scalar> hessian(const ModelSpec& spec, const BasicParamVector<Scalar>& params,
                       const Eigen::MatrixBase<Derived>& features, std::span<const int> labels) {
  if (spec.kind != ModelKind::LogisticRegression)
    throw ConfigError("hessian is only available for logistic regression");
  detail::check_inputs(spec, params, features, labels);
  const auto f = detail::forward<Scalar>(spec, params.values, features);
  const Vector<Scalar> lse = detail::log_sum_exp<Scalar>(f.logits);
  const Matrix<Scalar> prob = (f.logits.colwise() - lse).array().exp().matrix();
  const Index c = spec.num_classes;
  const Index d = spec.input_dim;
  Matrix<Scalar> h = Matrix<Scalar>::Zero(c * (d + 1), c * (d + 1));
  Vector<Scalar> xa(d + 1);
  for (Index i = 0; i < prob.rows(); ++i) {
    xa.head(d) = features.row(i).transpose();
    xa(d) = Scalar(1);
    const Vector<Scalar> p = prob.row(i).transpose();
    const Matrix<Scalar> s = Matrix<Scalar>(p.asDiagonal()) - p * p.transpose();
    for (Index j = 0; j <= d; ++j)
      for (Index m = 0; m <= d; ++m) h.block(j * c, m * c, c, c) += (xa(j) * xa(m)) * s;
  }
  return h / static_cast<Scalar>(prob.rows());
}

/// One shuffled pass of plain mini-batch SGD. The last batch may be short.
template <typename Derived>
ParamVector sgd_epoch(const ModelSpec& spec, const ParamVector& params,
                      const Eigen::MatrixBase<Derived>& features, std::span<const int> labels,
                      double lr, Index batch_size, Rng& rng) {
  if (features.rows() == 0) throw EmptyDataError("training set is empty");
  if (!(lr >= 0.0)) throw ConfigError("learning rate must be non-negative");
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
  const Index rows = features.rows();
  std::vector<Index> order(static_cast<std::size_t>(rows));
  for (Index i = 0; i < rows; ++i) order[static_cast<std::size_t>(i)] = i;
  rng.shuffle(std::span<Index>(order));

  ParamVector out = params;
  Matrix<double> xb;
  std::vector<int> yb;
  for (Index start = 0; start < rows; start += batch_size) {
    const Index len = std::min(batch_size, rows - start);
    xb.resize(len, features.cols());
    yb.resize(static_cast<std::size_t>(len));
    for (Index r = 0; r < len; ++r) {
      const Index src = order[static_cast<std::size_t>(start + r)];
      xb.row(r) = features.row(src);
      yb[static_cast<std::size_t>(r)] = labels[static_cast<std::size_t>(src)];
    }
    out.values -= lr * gradient(spec, out, xb, std::span<const int>(yb)).values;
  }
  return out;
}

/// Accuracy (argmax, ties to the lowest class index) and mean loss.
template <typename Derived>
Evaluation evaluate(const ModelSpec& spec, const ParamVector& params,
                    const Eigen::MatrixBase<Derived>& features, std::span<const int> labels) {
  if (features.rows() == 0) throw EmptyDataError("evaluation set is empty");
  detail::check_inputs(spec, params, features, labels);
  const Matrix<double> z = logits(spec, params, features);
  Evaluation e;
  e.count = z.rows();
  for (Index i = 0; i < z.rows(); ++i) {
    Index best = 0;
    for (Index k = 1; k < z.cols(); ++k)
      if (z(i, k) > z(i, best)) best = k;
    if (best == labels[static_cast<std::size_t>(i)]) ++e.correct;
  }
  e.accuracy = static_cast<double>(e.correct) / static_cast<double>(e.count);
  e.loss = loss(spec, params, features, labels);
  return e;
}

struct FitResult {
  ParamVector params;
  double loss = 0.0;
  double gradient_norm = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Full-batch minimization of the mean loss until the gradient 2-norm drops
/// below `grad_tol`. Damped Newton with Armijo backtracking for logistic
/// regression, backtracking gradient descent otherwise. The loss never
/// increases from the starting point.
template <typename Derived>
FitResult minimize_loss(const ModelSpec& spec, const ParamVector& start,
                        const Eigen::MatrixBase<Derived>& features, std::span<const int> labels,
                        double grad_tol, int max_iterations = 500) {
  FitResult r{start, loss(spec, start, features, labels), 0.0, 0, false};
  const bool newton = spec.kind == ModelKind::LogisticRegression;
  for (; r.iterations < max_iterations; ++r.iterations) {
    const Vector<double> g = gradient(spec, r.params, features, labels).values;
    r.gradient_norm = g.norm();
    if (r.gradient_norm < grad_tol) {
      r.converged = true;
      return r;
    }
    Vector<double> step = -g;
    if (newton) {
      Matrix<double> h = hessian(spec, r.params, features, labels);
      h.diagonal().array() += 1e-12;
      const Vector<double> s = h.ldlt().solve(-g);
      if (s.allFinite() && s.dot(g) < 0.0) step = s;
    }
    const double slope = step.dot(g);
    double t = 1.0;
    bool moved = false;
    for (int k = 0; k < 80; ++k, t *= 0.5) {
      ParamVector trial{r.params.values + t * step, r.params.fingerprint};
      const double l = loss(spec, trial, features, labels);
      if (l <= r.loss + 1e-4 * t * slope) {
        moved = true;
        r.params = std::move(trial);
        r.loss = l;
        break;
      }
    }
    if (!moved) break;
  }
  r.gradient_norm = gradient(spec, r.params, features, labels).values.norm();
  r.converged = r.gradient_norm < grad_tol;
  return r;
}

}  // namespace fedsim
