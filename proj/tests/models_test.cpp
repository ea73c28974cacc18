#include <doctest.h>

#include "ssse/data.hpp"
#include "ssse/errors.hpp"
#include "ssse/models.hpp"
#include "test_support.hpp"

#include <cmath>

using namespace ssse;
using namespace ssse::testing;

namespace {

// Plain-loop loss for the three model families, independent of the library.
double oracle_loss(const ModelParams& p, const Dataset& d, double l2) {
  const Index n = d.size(), m = d.dim();
  double total = 0.0;
  for (Index i = 0; i < n; ++i) {
    if (p.shape.kind == ShapeKind::MultiAttrLinear) {
      for (Index a = 0; a < p.shape.outputs; ++a) {
        double z = 0.0;
        for (Index j = 0; j < m; ++j) z += p.values(a * m + j) * d.features()(i, j);
        const double prob = 1.0 / (1.0 + std::exp(-z));
        total -= d.attributes()(i, a) == 1 ? std::log(prob) : std::log(1.0 - prob);
      }
      continue;
    }
    std::vector<double> logits(static_cast<std::size_t>(p.shape.outputs), 0.0);
    if (p.shape.kind == ShapeKind::MultinomialLinear) {
      for (Index k = 0; k < p.shape.outputs; ++k)
        for (Index j = 0; j < m; ++j) logits[k] += p.values(k * m + j) * d.features()(i, j);
    } else {
      const Index h = p.shape.hidden;
      std::vector<double> act(static_cast<std::size_t>(h), 0.0);
      for (Index u = 0; u < h; ++u) {
        double z = 0.0;
        for (Index j = 0; j < m; ++j) z += p.values(u * m + j) * d.features()(i, j);
        act[u] = std::tanh(z);
      }
      for (Index k = 0; k < p.shape.outputs; ++k)
        for (Index u = 0; u < h; ++u) logits[k] += p.values(h * m + k * h + u) * act[u];
    }
    double norm = 0.0;
    for (double z : logits) norm += std::exp(z);
    total -= logits[static_cast<std::size_t>(d.classes()[i])] - std::log(norm);
  }
  return total / static_cast<double>(n) + 0.5 * l2 * p.values.squaredNorm();
}

struct Case {
  ModelShape shape;
  Dataset data;
};

std::vector<Case> cases(Rng& rng) {
  return {
      {ModelShape::multinomial_linear(3, 4), random_multinomial(rng, 15, 4, 3)},
      {ModelShape::multi_attr_linear(3, 4), random_attributes(rng, 15, 4, 3)},
      {ModelShape::mlp(4, 5, 3), random_multinomial(rng, 15, 4, 3)},
  };
}

}  // namespace

TEST_CASE("loss matches a plain-loop oracle for every model family") {
  Rng rng(1);
  for (const auto& c : cases(rng)) {
    const ModelParams p = random_params(rng, c.shape);
    for (double l2 : {0.0, 0.3}) CHECK(loss(p, c.data, LossConfig{l2}) == doctest::Approx(oracle_loss(p, c.data, l2)).epsilon(1e-12));
  }
}

TEST_CASE("per-sample gradients match central differences") {
  Rng rng(2);
  for (const auto& c : cases(rng)) {
    const ModelParams p = random_params(rng, c.shape);
    const LossConfig cfg{0.05};
    for (Index row : {Index{0}, Index{7}}) {
      const Dataset one = c.data.select_rows(std::vector<Index>{row});
      const Vector fd = numeric_gradient(
          [&](const Vector& v) { return oracle_loss(ModelParams(c.shape, v), one, cfg.l2_coeff); }, p.values);
      CHECK(rel_error(grad(p, c.data, row, cfg), fd) < 1e-5);
    }
  }
}

TEST_CASE("mean gradient is the average of per-sample gradients and matches differences") {
  Rng rng(3);
  for (const auto& c : cases(rng)) {
    const ModelParams p = random_params(rng, c.shape);
    const LossConfig cfg{0.1};
    const Matrix rows = per_sample_grads(p, c.data, cfg);
    const Vector g = mean_grad(p, c.data, cfg);
    CHECK(rel_error(rows.colwise().mean().transpose(), g) < 1e-12);
    const Vector fd = numeric_gradient([&](const Vector& v) { return oracle_loss(ModelParams(c.shape, v), c.data, 0.1); },
                                       p.values);
    CHECK(rel_error(g, fd) < 1e-5);
  }
}

TEST_CASE("dense Hessian matches differences of the gradient") {
  Rng rng(4);
  for (const auto& c : cases(rng)) {
    if (!c.shape.is_linear()) continue;
    const ModelParams p = random_params(rng, c.shape);
    const LossConfig cfg{0.2};
    const Eigen::MatrixXd h = hessian_dense(p, c.data, cfg);
    const Eigen::MatrixXd fd = numeric_jacobian(
        [&](const Vector& v) { return mean_grad(ModelParams(c.shape, v), c.data, cfg); }, p.values);
    CHECK(rel_error(h, fd) < 1e-4);
    CHECK((h - h.transpose()).norm() == doctest::Approx(0.0));
  }
}

TEST_CASE("hessian_dense rejects MLPs and oversized models") {
  Rng rng(5);
  const Dataset d = random_multinomial(rng, 5, 4, 3);
  CHECK_THROWS_AS(hessian_dense(random_params(rng, ModelShape::mlp(4, 3, 3)), d, LossConfig{}), Unsupported);
  CHECK_THROWS_AS(hessian_dense(random_params(rng, ModelShape::multinomial_linear(3, 4)), d, LossConfig{}, 5),
                  Unsupported);
}

TEST_CASE("empirical Fisher is the mean outer product of per-sample gradients") {
  Rng rng(6);
  for (const auto& c : cases(rng)) {
    const ModelParams p = random_params(rng, c.shape);
    const LossConfig cfg{0.01};
    Eigen::MatrixXd want = Eigen::MatrixXd::Zero(p.size(), p.size());
    for (Index i = 0; i < c.data.size(); ++i) {
      const Vector g = grad(p, c.data, i, cfg);
      want += g * g.transpose();
    }
    want /= static_cast<double>(c.data.size());
    CHECK(rel_error(empirical_fisher_dense(p, c.data, cfg), want) < 1e-12);
  }
}

TEST_CASE("parameter layout puts weight (k, j) at k * inputs + j") {
  const ModelShape s = ModelShape::multinomial_linear(3, 4);
  Vector v = Vector::Zero(12);
  v(2 * 4 + 1) = 5.0;
  Matrix x = Matrix::Zero(1, 4);
  x(0, 1) = 1.0;
  const Matrix p = predict_proba(ModelParams(s, v), x);
  CHECK(p(0, 2) > p(0, 0));
  CHECK(p(0, 0) == doctest::Approx(p(0, 1)));
  CHECK(s.param_count() == 12);
  CHECK(ModelShape::mlp(4, 5, 3).param_count() == 4 * 5 + 5 * 3);
}

TEST_CASE("probabilities are normalised and stable for large logits") {
  const ModelShape s = ModelShape::multinomial_linear(2, 1);
  Vector v(2);
  v << 800.0, -800.0;
  Matrix x(1, 1);
  x(0, 0) = 1.0;
  const Matrix p = predict_proba(ModelParams(s, v), x);
  CHECK(p.row(0).sum() == doctest::Approx(1.0));
  CHECK(std::isfinite(p(0, 1)));
  const Dataset d = Dataset::multinomial(x, {1}, 2);
  const double l = loss(ModelParams(s, v), d, LossConfig{});
  CHECK(std::isfinite(l));
  CHECK(l == doctest::Approx(-std::log(kProbClamp)));

  const ModelShape b = ModelShape::multi_attr_linear(1, 1);
  Vector w(1);
  w << -900.0;
  const Matrix q = predict_proba(ModelParams(b, w), x);
  CHECK(q(0, 0) >= 0.0);
  CHECK(q(0, 0) < 1e-300);
}

TEST_CASE("dataset validation") {
  Matrix x = Matrix::Ones(3, 2);
  CHECK_THROWS_AS(Dataset::multinomial(x, {0, 1}, 2), InvalidArgument);
  CHECK_THROWS_AS(Dataset::multinomial(x, {0, 1, 2}, 2), InvalidArgument);
  CHECK_THROWS_AS(Dataset::multinomial(x, {0, 1, 1}, 2, {4, 4, 5}), InvalidArgument);
  Eigen::MatrixXi bad(3, 1);
  bad << 0, 2, 1;
  CHECK_THROWS_AS(Dataset::multi_attribute(x, bad), InvalidArgument);
  Matrix nan = x;
  nan(1, 1) = std::nan("");
  CHECK_THROWS_AS(Dataset::multinomial(nan, {0, 1, 1}, 2), InvalidArgument);
}

TEST_CASE("id-based subsetting keeps ids and rejects empty results") {
  Matrix x(4, 1);
  x << 1, 2, 3, 4;
  const Dataset d = Dataset::multinomial(x, {0, 1, 0, 1}, 2, {10, 20, 30, 40});
  const std::vector<SampleId> drop = {20, 40};
  const Dataset kept = d.without_ids(drop);
  CHECK(kept.ids() == std::vector<SampleId>{10, 30});
  CHECK(kept.features()(1, 0) == 3.0);
  const Dataset sel = d.with_ids(drop);
  CHECK(sel.classes() == std::vector<int>{1, 1});
  CHECK(d.row_of(30) == 2);
  CHECK_FALSE(d.contains(99));
  const std::vector<SampleId> all = {10, 20, 30, 40};
  CHECK_THROWS_AS(d.without_ids(all), InvalidArgument);
}

TEST_CASE("model params validate length and finiteness") {
  const ModelShape s = ModelShape::multinomial_linear(2, 3);
  CHECK_THROWS_AS(ModelParams(s, Vector::Zero(5)), InvalidArgument);
  Vector v = Vector::Zero(6);
  v(0) = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(ModelParams(s, v), InvalidArgument);
  Rng rng(7);
  CHECK_THROWS_AS(check_compatible(s, random_multinomial(rng, 4, 2, 2)), InvalidArgument);
}

TEST_CASE("binary Fisher-Hessian ratio is exact at scale (1 - eps) / eps") {
  for (double eps : {1e-2, 1e-3}) {
    const auto inst = make_separable_subspace(2, 8, eps, 10, 3, TaskKind::MultiAttribute);
    const FisherHessianRatio r = fisher_hessian_ratio_check(inst.params, inst.data);
    CHECK(r.margin == doctest::Approx(eps).epsilon(1e-9));
    CHECK(r.predicted_scale == doctest::Approx((1.0 - eps) / eps).epsilon(1e-9));
    CHECK(r.max_rel_deviation < 1e-10);
  }
}

TEST_CASE("multinomial ratio check reports the margin and its predicted scale") {
  const double eps = 1e-3;
  const auto inst = make_separable_subspace(4, 9, eps, 5, 2);
  const FisherHessianRatio r = fisher_hessian_ratio_check(inst.params, inst.data);
  CHECK(r.margin == doctest::Approx(eps).epsilon(1e-9));
  CHECK(r.margin_spread < 1e-9);
  CHECK(r.predicted_scale == doctest::Approx(1.0 / (eps * 3.0)).epsilon(1e-9));
  CHECK(r.max_rel_deviation >= r.mean_rel_deviation);
}

TEST_CASE("ratio check warns when margins differ between samples") {
  Rng rng(8);
  const Dataset d = random_multinomial(rng, 10, 3, 3);
  const FisherHessianRatio r = fisher_hessian_ratio_check(random_params(rng, ModelShape::multinomial_linear(3, 3)), d);
  CHECK_FALSE(r.warnings.empty());
}
