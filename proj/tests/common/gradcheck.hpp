#pragma once
// Central finite-difference checks of every nn_core layer. The numeric side
// differentiates the double-precision oracles, so float rounding in the
// library never pollutes the reference.
//
// Error metric per element: |a - n| / max(|a|, |n|, floor), floor = 1% of the
// largest numeric gradient magnitude of that tensor (elements far below the
// tensor's gradient scale are held to an absolute bound instead).

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "pss/ops.hpp"
#include "pss/rng.hpp"

namespace gradcheck {

inline constexpr double kStep = 1e-3;

struct LayerResult {
  std::string layer;
  int configs = 0;
  double max_rel_err = 0.0;
};

using oracle::Vec;

inline double max_rel_error(std::span<const float> analytic, const Vec& numeric) {
  double scale = 0.0;
  for (double v : numeric) scale = std::max(scale, std::abs(v));
  const double floor = std::max(1e-2 * scale, 1e-12);
  double worst = 0.0;
  for (std::size_t i = 0; i < numeric.size(); ++i) {
    const double a = analytic.empty() ? 0.0 : analytic[i];
    const double n = numeric[i];
    worst = std::max(worst, std::abs(a - n) / std::max({std::abs(a), std::abs(n), floor}));
  }
  return worst;
}

// d f / d v[i] by central differences; f reads v.
inline Vec numeric_grad(Vec& v, const std::function<double()>& f) {
  Vec g(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double keep = v[i];
    v[i] = keep + kStep;
    const double up = f();
    v[i] = keep - kStep;
    const double down = f();
    v[i] = keep;
    g[i] = (up - down) / (2.0 * kStep);
  }
  return g;
}

inline std::vector<float> rand_vec(pss::Rng& rng, std::size_t n, float lo = -1.0f, float hi = 1.0f) {
  std::vector<float> v(n);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return v;
}

// Values at least `gap` apart from each other, so no pooling window has a
// near tie within the finite-difference step.
inline std::vector<float> spaced_vec(pss::Rng& rng, std::size_t n, float gap) {
  std::vector<float> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = gap * static_cast<float>(i) - 0.5f * gap * static_cast<float>(n);
  for (std::size_t i = n; i > 1; --i) std::swap(v[i - 1], v[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(i) - 1))]);
  return v;
}

// Values with |x| >= margin (away from the ReLU kink).
inline std::vector<float> off_kink_vec(pss::Rng& rng, std::size_t n, float margin) {
  std::vector<float> v(n);
  for (auto& x : v) {
    const float m = rng.uniform(margin, 1.0f);
    x = rng.bernoulli(0.5) ? m : -m;
  }
  return v;
}

inline Vec dv(const pss::Tensor& t) { return oracle::to_double(t.data()); }

struct Accum {
  LayerResult r;
  void add(double err) {
    r.max_rel_err = std::max(r.max_rel_err, err);
  }
};

// op(x...) followed by MSE against a fixed random target.
inline std::vector<LayerResult> run_all(std::uint64_t seed, int configs) {
  using namespace pss;
  std::vector<LayerResult> results;
  Rng rng(seed);

  {  // conv3x3: input, weight, bias
    Accum acc{{"conv3x3", 0, 0.0}};
    for (int k = 0; k < configs; ++k) {
      const int n = rng.uniform_int(1, 2), ci = rng.uniform_int(1, 3), co = rng.uniform_int(1, 3);
      const int h = rng.uniform_int(1, 5), w = rng.uniform_int(1, 5);
      Tensor x({n, ci, h, w}, rand_vec(rng, static_cast<std::size_t>(n * ci * h * w)), true);
      LayerParams p{LayerKind::conv3x3, Tensor({co, ci, 3, 3}, rand_vec(rng, static_cast<std::size_t>(co * ci * 9)), true),
                    Tensor({co}, rand_vec(rng, static_cast<std::size_t>(co)), true)};
      Tensor t({n, co, h, w}, rand_vec(rng, static_cast<std::size_t>(n * co * h * w)));
      Tensor loss = mse_loss(conv2d(x, p), t);
      backward(loss);
      Vec xv = dv(x), wv = dv(p.weight), bv = dv(p.bias);
      const Vec tv = dv(t);
      auto f = [&] { return oracle::mse(oracle::conv3x3(xv, n, ci, h, w, wv, co, bv), tv); };
      acc.add(max_rel_error(x.grad(), numeric_grad(xv, f)));
      acc.add(max_rel_error(p.weight.grad(), numeric_grad(wv, f)));
      acc.add(max_rel_error(p.bias.grad(), numeric_grad(bv, f)));
      ++acc.r.configs;
    }
    results.push_back(acc.r);
  }

  {  // tconv2x2: input, weight, bias
    Accum acc{{"tconv2x2", 0, 0.0}};
    for (int k = 0; k < configs; ++k) {
      const int n = rng.uniform_int(1, 2), ci = rng.uniform_int(1, 3), co = rng.uniform_int(1, 3);
      const int h = rng.uniform_int(1, 4), w = rng.uniform_int(1, 4);
      Tensor x({n, ci, h, w}, rand_vec(rng, static_cast<std::size_t>(n * ci * h * w)), true);
      LayerParams p{LayerKind::tconv2x2, Tensor({ci, co, 2, 2}, rand_vec(rng, static_cast<std::size_t>(ci * co * 4)), true),
                    Tensor({co}, rand_vec(rng, static_cast<std::size_t>(co)), true)};
      Tensor t({n, co, 2 * h, 2 * w}, rand_vec(rng, static_cast<std::size_t>(n * co * 4 * h * w)));
      Tensor loss = mse_loss(transposed_conv2d(x, p), t);
      backward(loss);
      Vec xv = dv(x), wv = dv(p.weight), bv = dv(p.bias);
      const Vec tv = dv(t);
      auto f = [&] { return oracle::mse(oracle::tconv2x2(xv, n, ci, h, w, wv, co, bv), tv); };
      acc.add(max_rel_error(x.grad(), numeric_grad(xv, f)));
      acc.add(max_rel_error(p.weight.grad(), numeric_grad(wv, f)));
      acc.add(max_rel_error(p.bias.grad(), numeric_grad(bv, f)));
      ++acc.r.configs;
    }
    results.push_back(acc.r);
  }

  {  // maxpool2x2
    Accum acc{{"maxpool2x2", 0, 0.0}};
    for (int k = 0; k < configs; ++k) {
      const int n = rng.uniform_int(1, 2), c = rng.uniform_int(1, 3);
      const int h = 2 * rng.uniform_int(1, 3), w = 2 * rng.uniform_int(1, 3);
      Tensor x({n, c, h, w}, spaced_vec(rng, static_cast<std::size_t>(n * c * h * w), 0.01f), true);
      Tensor t({n, c, h / 2, w / 2}, rand_vec(rng, static_cast<std::size_t>(n * c * h * w / 4)));
      Tensor loss = mse_loss(maxpool2x2(x), t);
      backward(loss);
      Vec xv = dv(x);
      const Vec tv = dv(t);
      auto f = [&] { return oracle::mse(oracle::maxpool2x2(xv, n, c, h, w), tv); };
      acc.add(max_rel_error(x.grad(), numeric_grad(xv, f)));
      ++acc.r.configs;
    }
    results.push_back(acc.r);
  }

  {  // relu
    Accum acc{{"relu", 0, 0.0}};
    for (int k = 0; k < configs; ++k) {
      const int len = rng.uniform_int(1, 40);
      Tensor x({len}, off_kink_vec(rng, static_cast<std::size_t>(len), 0.05f), true);
      Tensor t({len}, rand_vec(rng, static_cast<std::size_t>(len)));
      Tensor loss = mse_loss(relu(x), t);
      backward(loss);
      Vec xv = dv(x);
      const Vec tv = dv(t);
      auto f = [&] { return oracle::mse(oracle::relu(xv), tv); };
      acc.add(max_rel_error(x.grad(), numeric_grad(xv, f)));
      ++acc.r.configs;
    }
    results.push_back(acc.r);
  }

  {  // sigmoid
    Accum acc{{"sigmoid", 0, 0.0}};
    for (int k = 0; k < configs; ++k) {
      const int len = rng.uniform_int(1, 40);
      Tensor x({len}, rand_vec(rng, static_cast<std::size_t>(len), -4.0f, 4.0f), true);
      Tensor t({len}, rand_vec(rng, static_cast<std::size_t>(len), 0.0f, 1.0f));
      Tensor loss = mse_loss(sigmoid(x), t);
      backward(loss);
      Vec xv = dv(x);
      const Vec tv = dv(t);
      auto f = [&] { return oracle::mse(oracle::sigmoid(xv), tv); };
      acc.add(max_rel_error(x.grad(), numeric_grad(xv, f)));
      ++acc.r.configs;
    }
    results.push_back(acc.r);
  }

  {  // add, scale, sum
    Accum acc{{"add/scale/sum", 0, 0.0}};
    for (int k = 0; k < configs; ++k) {
      const int len = rng.uniform_int(1, 30);
      const float factor = rng.uniform(-2.0f, 2.0f);
      Tensor a({len}, rand_vec(rng, static_cast<std::size_t>(len)), true);
      Tensor b({len}, rand_vec(rng, static_cast<std::size_t>(len)), true);
      Tensor t({1}, {rng.uniform(-1.0f, 1.0f)});
      Tensor loss = mse_loss(sum(scale(add(a, b), factor)), t);
      backward(loss);
      Vec av = dv(a), bv = dv(b);
      const double tv = t.item();
      auto f = [&] {
        double s = 0.0;
        for (std::size_t i = 0; i < av.size(); ++i) s += static_cast<double>(factor) * (av[i] + bv[i]);
        return (s - tv) * (s - tv);
      };
      acc.add(max_rel_error(a.grad(), numeric_grad(av, f)));
      acc.add(max_rel_error(b.grad(), numeric_grad(bv, f)));
      ++acc.r.configs;
    }
    results.push_back(acc.r);
  }

  {  // mse_loss, both arguments
    Accum acc{{"mse_loss", 0, 0.0}};
    for (int k = 0; k < configs; ++k) {
      const int len = rng.uniform_int(1, 50);
      Tensor a({len}, rand_vec(rng, static_cast<std::size_t>(len)), true);
      Tensor b({len}, rand_vec(rng, static_cast<std::size_t>(len)), true);
      Tensor loss = mse_loss(a, b);
      backward(loss);
      Vec av = dv(a), bv = dv(b);
      auto f = [&] { return oracle::mse(av, bv); };
      acc.add(max_rel_error(a.grad(), numeric_grad(av, f)));
      acc.add(max_rel_error(b.grad(), numeric_grad(bv, f)));
      ++acc.r.configs;
    }
    results.push_back(acc.r);
  }

  {  // softmax cross-entropy with some ignored pixels
    Accum acc{{"softmax_cross_entropy", 0, 0.0}};
    for (int k = 0; k < configs; ++k) {
      const int n = rng.uniform_int(1, 2), classes = rng.uniform_int(2, 6);
      const int h = rng.uniform_int(1, 4), w = rng.uniform_int(1, 4), hw = h * w;
      std::vector<std::uint8_t> labels(static_cast<std::size_t>(n * hw));
      for (auto& l : labels) l = static_cast<std::uint8_t>(rng.uniform_int(0, classes - 1));
      for (std::size_t i = 1; i < labels.size(); i += 3)
        if (rng.bernoulli(0.3)) labels[i] = 255;
      Tensor x({n, classes, h, w}, rand_vec(rng, static_cast<std::size_t>(n * classes * hw), -3.0f, 3.0f), true);
      Tensor loss = softmax_cross_entropy(x, labels);
      backward(loss);
      Vec xv = dv(x);
      auto f = [&] { return oracle::softmax_ce(xv, n, classes, hw, labels, 255); };
      acc.add(max_rel_error(x.grad(), numeric_grad(xv, f)));
      ++acc.r.configs;
    }
    results.push_back(acc.r);
  }
  return results;
}

}  // namespace gradcheck
