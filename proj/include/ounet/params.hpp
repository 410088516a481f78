#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "ounet/autodiff.hpp"

namespace ounet::ad {

template <typename Real>
struct Parameter {
  std::string name;
  Matrix<Real> value;
  Matrix<Real> grad;
  Matrix<Real> first_moment;
  Matrix<Real> second_moment;
  // Buffers (e.g. running statistics) are stored and checkpointed but never optimised.
  bool trainable = true;
};

// Named parameter matrices with gradients and optimiser state. Insertion order
// is the canonical order for binding, optimisation and serialisation.
template <typename Real>
class ParamStore {
 public:
  std::size_t add(const std::string& name, Matrix<Real> init, bool trainable = true) {
    if (index_.count(name)) throw ConfigError("duplicate parameter name '" + name + "'");
    Parameter<Real> p;
    p.name = name;
    p.grad = Matrix<Real>::Zero(init.rows(), init.cols());
    p.first_moment = Matrix<Real>::Zero(init.rows(), init.cols());
    p.second_moment = Matrix<Real>::Zero(init.rows(), init.cols());
    p.value = std::move(init);
    p.trainable = trainable;
    index_.emplace(name, params_.size());
    params_.push_back(std::move(p));
    return params_.size() - 1;
  }

  std::size_t size() const noexcept { return params_.size(); }
  Parameter<Real>& operator[](std::size_t i) { return params_[i]; }
  const Parameter<Real>& operator[](std::size_t i) const { return params_[i]; }
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  std::size_t index_of(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("unknown parameter '" + name + "'");
    return it->second;
  }
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  void set_value(std::size_t i, const Matrix<Real>& v) {
    auto& p = params_[i];
    if (v.rows() != p.value.rows() || v.cols() != p.value.cols())
      throw ShapeError("parameter '" + p.name + "' shape is immutable");
    p.value = v;
  }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += static_cast<std::size_t>(p.value.size());
    return n;
  }

  std::int64_t step = 0;

  // Leaves on `tape` for every parameter, in store order. Buffers never need grads.
  std::vector<Value<Real>> bind(Tape<Real>& tape, bool requires_grad = true) const {
    std::vector<Value<Real>> out;
    out.reserve(params_.size());
    for (const auto& p : params_) out.push_back(tape.leaf(p.value, requires_grad && p.trainable));
    return out;
  }

  void zero_grads() {
    for (auto& p : params_) p.grad.setZero();
  }

  void collect_grads(const std::vector<Value<Real>>& bound) {
    for (std::size_t i = 0; i < params_.size(); ++i)
      if (params_[i].trainable) params_[i].grad += bound[i].grad();
  }

 private:
  std::vector<Parameter<Real>> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

// ---------------------------------------------------------------------------
// Finite-difference gradient checking

struct GradCheckOptions {
  // Tried largest first; the first stencil that stays on one relu branch is used.
  std::vector<double> relative_steps{1e-4, 1e-5, 1e-6};  // h = step * (1 + |w|)
  std::size_t max_coords_per_param = 16;
  std::uint64_t seed = 0;
  double tolerance = 1e-4;
};

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::size_t checked = 0;
  std::size_t excluded = 0;  // every stencil straddled a relu kink
  std::string worst_parameter;
  std::size_t worst_coordinate = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;

  bool passed(double tol) const { return max_relative_error < tol; }
};

inline double relative_error(double a, double b) {
  return std::abs(a - b) / std::max(1e-8, std::abs(a) + std::abs(b));
}

template <typename Real>
using LossFn = std::function<Value<Real>(Tape<Real>&, const std::vector<Value<Real>>&)>;

// Compares tape gradients against central differences on sampled coordinates of
// every trainable parameter. A stencil whose +h/-h forwards take different relu
// branches is rejected in favour of a smaller step; coordinates where every step
// is rejected are excluded as non-differentiable.
template <typename Real>
GradCheckReport grad_check(const LossFn<Real>& f, ParamStore<Real>& params,
                           const GradCheckOptions& opt = {}) {
  GradCheckReport report;
  std::vector<Matrix<Real>> analytic;
  {
    Tape<Real> tape;
    auto bound = params.bind(tape);
    Value<Real> root = f(tape, bound);
    if (!std::isfinite(static_cast<double>(root.item()))) throw NumericError("grad_check: non-finite loss");
    tape.backward(root);
    for (auto& b : bound) analytic.push_back(b.grad());
  }

  auto evaluate = [&](std::uint64_t& signature) {
    Tape<Real> tape;
    auto bound = params.bind(tape, /*requires_grad=*/false);
    const double v = static_cast<double>(f(tape, bound).item());
    if (!std::isfinite(v)) throw NumericError("grad_check: non-finite loss");
    signature = tape.signature();
    return v;
  };

  std::mt19937_64 rng(opt.seed);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    if (!p.trainable) continue;
    const std::size_t n = static_cast<std::size_t>(p.value.size());
    std::vector<std::size_t> coords(n);
    std::iota(coords.begin(), coords.end(), 0);
    if (n > opt.max_coords_per_param) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(opt.max_coords_per_param);
      std::sort(coords.begin(), coords.end());
    }
    for (auto c : coords) {
      Real* w = p.value.data() + c;
      const Real saved = *w;
      std::optional<double> numeric;
      for (double step : opt.relative_steps) {
        const Real h = static_cast<Real>(step * (1.0 + std::abs(static_cast<double>(saved))));
        std::uint64_t sig_plus = 0, sig_minus = 0;
        *w = saved + h;
        const double fp = evaluate(sig_plus);
        *w = saved - h;
        const double fm = evaluate(sig_minus);
        *w = saved;
        if (sig_plus == sig_minus) {
          numeric = (fp - fm) / (2.0 * static_cast<double>(h));
          break;
        }
      }
      if (!numeric) {
        ++report.excluded;
        continue;
      }
      const double a = static_cast<double>(analytic[i].data()[c]);
      const double err = relative_error(a, *numeric);
      ++report.checked;
      if (err > report.max_relative_error || report.worst_parameter.empty()) {
        if (err >= report.max_relative_error) {
          report.max_relative_error = err;
          report.worst_parameter = p.name;
          report.worst_coordinate = c;
          report.worst_analytic = a;
          report.worst_numeric = *numeric;
        }
      }
    }
  }
  return report;
}

}  // namespace ounet::ad
