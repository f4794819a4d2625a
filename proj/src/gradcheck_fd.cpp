#include <algorithm>
#include <cmath>
#include <limits>

#include "ebmcot/gradcheck.hpp"

namespace ebmcot {

Tensor fd_grad(const std::function<double(const Tensor&)>& f, const Tensor& x, double h) {
  Tensor g = Tensor::zeros_like(x);
  Tensor xp = x;
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const double orig = xp[i];
    const double step = h * (1.0 + std::abs(orig));
    xp[i] = orig + step;
    const double fr = f(xp);
    xp[i] = orig - step;
    const double fl = f(xp);
    xp[i] = orig;
    g[i] = (fr - fl) / (2.0 * step);
  }
  return g;
}

GradMap fd_grad_params(const std::function<double(const ParamSet&)>& f,
                       const ParamSet& params, double h) {
  GradMap out;
  ParamSet p = params;
  for (const auto& [name, entry] : params) {
    Tensor g = Tensor::zeros_like(entry.value);
    Tensor& v = p.at(name).value;
    for (std::size_t i = 0; i < v.numel(); ++i) {
      const double orig = v[i];
      const double step = h * (1.0 + std::abs(orig));
      v[i] = orig + step;
      const double fr = f(p);
      v[i] = orig - step;
      const double fl = f(p);
      v[i] = orig;
      g[i] = (fr - fl) / (2.0 * step);
    }
    out.emplace(name, std::move(g));
  }
  return out;
}

Tensor hvp(const std::function<Tensor(const Tensor&)>& grad_fn, const Tensor& at,
           const Tensor& v) {
  if (!at.same_shape(v))
    throw std::invalid_argument("hvp: direction shape " + v.shape_str() +
                                " does not match point " + at.shape_str());
  const double h = 1e-4 * (1.0 + at.max_abs());
  Tensor right = at, left = at;
  axpy(right, h, v);
  axpy(left, -h, v);
  Tensor gr = grad_fn(right);
  const Tensor gl = grad_fn(left);
  for (std::size_t i = 0; i < gr.numel(); ++i) gr[i] = (gr[i] - gl[i]) / (2.0 * h);
  return gr;
}

double rel_error(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) return std::numeric_limits<double>::infinity();
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double denom = std::max({std::sqrt(na), std::sqrt(nb), 1e-12});
  return std::sqrt(diff) / denom;
}

double rel_error(const GradMap& a, const GradMap& b) {
  // flatten in lexicographic name order; missing names count as mismatch
  if (a.size() != b.size()) return std::numeric_limits<double>::infinity();
  double diff = 0.0, na = 0.0, nb = 0.0;
  auto ia = a.begin();
  auto ib = b.begin();
  for (; ia != a.end(); ++ia, ++ib) {
    if (ia->first != ib->first || !ia->second.same_shape(ib->second))
      return std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < ia->second.numel(); ++i) {
      const double x = ia->second[i], y = ib->second[i];
      diff += (x - y) * (x - y);
      na += x * x;
      nb += y * y;
    }
  }
  const double denom = std::max({std::sqrt(na), std::sqrt(nb), 1e-12});
  return std::sqrt(diff) / denom;
}

}  // namespace ebmcot
