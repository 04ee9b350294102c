#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "promptlab/losses.hpp"
#include "promptlab/matrix.hpp"
#include "promptlab/rng.hpp"

using namespace promptlab;

namespace {

std::vector<double> random_probs(SeededRng& rng, std::size_t k) {
  std::vector<double> z(k);
  for (auto& zi : z) zi = 2.0 * rng.next_gaussian();
  return softmax(z);
}

// Central difference of a loss in one probability coordinate. The bump is
// relative so small probabilities stay positive.
double fd_grad(const LossSpec& spec, std::vector<double> p, std::size_t label,
               std::size_t coord) {
  double h = 1e-6 * p[coord];
  double orig = p[coord];
  p[coord] = orig + h;
  double up = loss_value(spec, p, label);
  p[coord] = orig - h;
  double down = loss_value(spec, p, label);
  return (up - down) / (2.0 * h);
}

}  // namespace

TEST_CASE("cross entropy hits its anchor values") {
  std::vector<double> sure{1.0, 0.0};
  REQUIRE(ce_loss(sure.data(), 2, 0) == 0.0);

  double inv_e = std::exp(-1.0);
  std::vector<double> pe{inv_e, 1.0 - inv_e};
  REQUIRE(ce_loss(pe.data(), 2, 0) == Catch::Approx(1.0).margin(1e-12));

  std::vector<double> half{0.5, 0.5};
  REQUIRE(ce_loss(half.data(), 2, 0) == Catch::Approx(std::log(2.0)).margin(1e-15));

  REQUIRE_THROWS_AS(ce_loss(sure.data(), 2, 1), DegenerateProbabilityError);
  std::vector<double> tiny{1e-301, 1.0};
  REQUIRE_THROWS_AS(ce_loss(tiny.data(), 2, 0), DegenerateProbabilityError);
  REQUIRE_THROWS_AS(ce_loss(half.data(), 2, 2), PreconditionError);
}

TEST_CASE("generalized cross entropy anchors and q validation") {
  std::vector<double> half{0.5, 0.5};
  REQUIRE(gce_loss(half.data(), 2, 0, 0.7) == Catch::Approx(0.5492).margin(1e-4));

  std::vector<double> sure{1.0, 0.0};
  for (double q : {0.1, 0.5, 0.7, 1.0})
    REQUIRE(gce_loss(sure.data(), 2, 0, q) == 0.0);

  // q = 1 is mean absolute error, bit for bit.
  SeededRng rng(3);
  for (int t = 0; t < 20; ++t) {
    auto p = random_probs(rng, 4);
    REQUIRE(gce_loss(p.data(), 4, 1, 1.0) == 1.0 - p[1]);
  }

  for (double q : {0.0, -0.3, 1.5})
    REQUIRE_THROWS_AS(gce_loss(half.data(), 2, 0, q), InvalidQError);
}

TEST_CASE("gce approaches ce as q shrinks, at the analytic rate") {
  // gce - ce = q ln^2(p) / 2 + O(q^2); check the residual against the
  // next-order term rather than a loose constant.
  for (double q : {1e-2, 1e-3, 1e-4}) {
    for (double p = 0.1; p < 0.95; p += 0.1) {
      std::vector<double> probs{p, 1.0 - p};
      double diff = gce_loss(probs.data(), 2, 0, q) - ce_loss(probs.data(), 2, 0);
      double lead = -q * std::log(p) * std::log(p) / 2.0;
      double next = q * q * std::abs(std::log(p) * std::log(p) * std::log(p));
      REQUIRE(std::abs(diff - lead) <= next + 1e-12);
    }
  }
}

TEST_CASE("symmetric cross entropy anchors") {
  std::vector<double> half{0.5, 0.5};
  // alpha ce + beta (-A)(1 - p) with alpha=0.1, beta=1, A=-4 at p=0.5.
  REQUIRE(sce_loss(half.data(), 2, 0, 0.1, 1.0, -4.0) ==
          Catch::Approx(2.0693).margin(1e-4));
  REQUIRE(rce_loss(half.data(), 2, 0, -4.0) == 2.0);

  // beta = 0 collapses to alpha-scaled cross entropy exactly.
  SeededRng rng(4);
  for (int t = 0; t < 20; ++t) {
    auto p = random_probs(rng, 5);
    REQUIRE(sce_loss(p.data(), 5, 2, 0.1, 0.0, -4.0) == 0.1 * ce_loss(p.data(), 5, 2));
  }

  std::vector<double> sure{1.0, 0.0};
  REQUIRE(sce_loss(sure.data(), 2, 0, 0.1, 1.0, -4.0) == 0.0);
}

TEST_CASE("nce+rce anchors") {
  // Uniform probabilities make normalized cross entropy exactly 1/K.
  std::vector<double> uniform{0.25, 0.25, 0.25, 0.25};
  REQUIRE(nce_rce_loss(uniform.data(), 4, 2, 1.0, 0.0, -4.0) ==
          Catch::Approx(0.25).margin(1e-12));

  std::vector<double> p{0.8, 0.2};
  REQUIRE(nce_rce_loss(p.data(), 2, 0, 1.0, 0.0, -4.0) ==
          Catch::Approx(0.1218).margin(1e-4));

  // Confident correct prediction drives the normalized term toward zero.
  std::vector<double> conf{1.0 - 1e-6, 1e-6};
  REQUIRE(nce_rce_loss(conf.data(), 2, 0, 1.0, 0.0, -4.0) < 1e-6);

  std::vector<double> sure{1.0, 0.0};
  REQUIRE_THROWS_AS(nce_rce_loss(sure.data(), 2, 0, 1.0, 1.0, -4.0),
                    DegenerateProbabilityError);
}

TEST_CASE("all losses are nonnegative and vanish only at certainty") {
  std::vector<LossSpec> specs{LossSpec::ce(), LossSpec::gce(0.7),
                              LossSpec::sce(), LossSpec::nce_rce()};
  SeededRng rng(5);
  for (int t = 0; t < 30; ++t) {
    auto p = random_probs(rng, 4);
    for (const auto& spec : specs) {
      double v = loss_value(spec, p, 1);
      REQUIRE(v > 0.0);
      REQUIRE(std::isfinite(v));
    }
  }
  // Near-certain correct prediction drives every loss toward zero.
  std::vector<double> conf{1e-12, 1.0 - 3e-12, 1e-12, 1e-12};
  for (const auto& spec : specs) REQUIRE(loss_value(spec, conf, 1) < 1e-9);
}

TEST_CASE("raising the label probability strictly lowers every loss") {
  std::vector<LossSpec> specs{LossSpec::ce(), LossSpec::gce(0.7),
                              LossSpec::sce(), LossSpec::nce_rce()};
  for (const auto& spec : specs) {
    double last = 1e9;
    for (double pc = 0.1; pc < 0.92; pc += 0.1) {
      // Off-label mass split unevenly so nothing is symmetric by accident.
      std::vector<double> p{pc, 0.7 * (1.0 - pc), 0.3 * (1.0 - pc)};
      double v = loss_value(spec, p, 0);
      REQUIRE(v < last);
      last = v;
    }
  }
}

TEST_CASE("analytic probability gradients match finite differences") {
  std::vector<LossSpec> specs{LossSpec::ce(), LossSpec::gce(0.7), LossSpec::gce(1.0),
                              LossSpec::sce(), LossSpec::nce_rce()};
  SeededRng rng(6);
  for (const auto& spec : specs) {
    for (int t = 0; t < 10; ++t) {
      auto p = random_probs(rng, 5);
      std::size_t label = t % 5;
      auto g = loss_grad_probs(spec, p, label);
      for (std::size_t j = 0; j < p.size(); ++j) {
        double fd = fd_grad(spec, p, label, j);
        double err = std::abs(g[j] - fd);
        if (std::abs(g[j]) > 1e-8) err /= std::abs(g[j]);
        REQUIRE(err < 1e-5);
      }
    }
  }
}

TEST_CASE("gradients touch only the label coordinate except for nce+rce") {
  SeededRng rng(7);
  auto p = random_probs(rng, 6);
  for (const auto& spec : {LossSpec::ce(), LossSpec::gce(0.7), LossSpec::sce()}) {
    auto g = loss_grad_probs(spec, p, 3);
    for (std::size_t j = 0; j < 6; ++j)
      if (j != 3) REQUIRE(g[j] == 0.0);
    REQUIRE(g[3] < 0.0);
  }
  auto g = loss_grad_probs(LossSpec::nce_rce(), p, 3);
  for (std::size_t j = 0; j < 6; ++j) REQUIRE(g[j] != 0.0);
}

TEST_CASE("gce gradient is the label power, with q=1 exactly -1") {
  SeededRng rng(8);
  auto p = random_probs(rng, 4);
  auto g1 = loss_grad_probs(LossSpec::gce(1.0), p, 2);
  REQUIRE(g1[2] == -1.0);
  auto g = loss_grad_probs(LossSpec::gce(0.7), p, 2);
  REQUIRE(g[2] == -std::pow(p[2], 0.7 - 1.0));
}

TEST_CASE("loss spec validation") {
  REQUIRE_THROWS_AS(LossSpec::gce(0.0).validate(), InvalidQError);
  REQUIRE_THROWS_AS(LossSpec::gce(1.2).validate(), InvalidQError);
  REQUIRE_NOTHROW(LossSpec::gce(1.0).validate());
  REQUIRE_THROWS_AS(LossSpec::sce(0.1, 1.0, 2.0).validate(), InvalidValueError);
  REQUIRE_THROWS_AS(LossSpec::nce_rce(0.0, 0.0).validate(), InvalidValueError);
  REQUIRE_THROWS_AS(LossSpec::sce(-0.1, 1.0).validate(), InvalidValueError);
  REQUIRE_NOTHROW(LossSpec::ce().validate());
}
