#include <cmath>
#include <numbers>

#include <doctest.h>

#include "bnnk/arch.hpp"
#include "bnnk/warp.hpp"

using namespace bnnk;
using nlohmann::json;

namespace {
Vec v1(double a) { return Vec::Constant(1, a); }
}  // namespace

TEST_CASE("warp_periodic") {
  const Eigen::Vector2d a = warp_periodic(0.0, 3.0);
  CHECK(a(0) == 1.0);
  CHECK(a(1) == 0.0);
  const Eigen::Vector2d q = warp_periodic(0.75, 3.0);
  CHECK(std::abs(q(0)) < 1e-12);
  CHECK(std::abs(q(1) - 1.0) < 1e-12);
  for (int i = 0; i < 100; ++i) CHECK(warp_periodic(-7.3 + 0.17 * i, 1.9).norm() == doctest::Approx(1.0).epsilon(1e-14));
  CHECK_THROWS_AS(warp_periodic(1.0, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(warp_periodic(1.0, -2.0), std::invalid_argument);
}

TEST_CASE("WarpSpec keeps non-periodic coordinates") {
  const WarpSpec w{2, {0}, 2.0};
  CHECK(w.out_dim() == 3);
  const Vec y = w.apply((Vec(2) << 0.5, 7.0).finished());
  CHECK(y.size() == 3);
  CHECK(y(2) == 7.0);
  CHECK(std::abs(y(0)) < 1e-15);
  CHECK_THROWS(WarpSpec({1, {1}, 1.0}).validate());
}

TEST_CASE("activation validation") {
  CHECK_THROWS_AS(Activation::leaky_relu(1.5), std::invalid_argument);
  CHECK_THROWS_AS(Activation::leaky_relu(0.0), std::invalid_argument);
  CHECK_THROWS_AS(Activation::rbf(0.0), std::invalid_argument);
  CHECK(Activation::relu()(-1.0) == 0.0);
  CHECK(Activation::leaky_relu(0.1)(-2.0) == doctest::Approx(-0.2));
  CHECK(Activation::erf()(0.3) == doctest::Approx(std::erf(0.3)));
  CHECK(Activation::cosine().derivative(0.4) == doctest::Approx(-std::sin(0.4)));
}

TEST_CASE("ArchSpec validation") {
  CHECK_THROWS_AS(basic(Activation::relu(), {}, 0).validate(), std::invalid_argument);
  CHECK_THROWS_AS(hidden_mul({basic(Activation::relu(), {}, 10), basic(Activation::erf(), {}, 12)}, 1.0).validate(),
                  std::invalid_argument);
  ArchSpec bad_dims = basic(Activation::relu(), {}, 5, 2);
  bad_dims.input_dims = {3};
  CHECK_THROWS_AS(bad_dims.validate(), std::invalid_argument);
  CHECK_THROWS_AS(output_sum({basic(Activation::relu(), {}, 5, 1), basic(Activation::relu(), {}, 5, 2)}).validate(),
                  std::invalid_argument);
  CHECK_NOTHROW(hidden_add({basic(Activation::relu(), {}, 8), basic(Activation::erf(), {}, 8)}, 2.0).validate());
}

TEST_CASE("ArchSpec JSON round trip") {
  ArchSpec per = basic(Activation::rbf(0.5), {1.0, 1.0, 0.7}, 30);
  per.warp = WarpSpec{1, {0}, 12.0};
  const ArchSpec tree = output_sum({basic(Activation::relu(), {0.5, 0.5, 2.0}, 30), per});
  const json j = tree.to_json();
  const ArchSpec back = ArchSpec::from_json(j);
  CHECK(back.to_json() == j);
  const ArchSpec d = deep({{Activation::relu(), 20, 1.0, 1.0}, {Activation::tanh(), 10, 0.1, 0.1}}, 3.0, 2);
  CHECK(ArchSpec::from_json(d.to_json()).to_json() == d.to_json());
  CHECK_THROWS_AS(ArchSpec::from_json(json::parse(R"({"type": "pyramid"})")), std::invalid_argument);
  CHECK_THROWS_AS(ArchSpec::from_json(json::parse(R"({"type": "basic", "activation": "softplus"})")),
                  std::invalid_argument);
}

TEST_CASE("children inherit the ambient input dimension") {
  const json j = json::parse(R"({"type": "output_sum", "input_dim": 2, "children": [
      {"type": "basic", "activation": "relu", "input_dims": [0]},
      {"type": "basic", "activation": "erf", "input_dims": [1]}]})");
  const ArchSpec a = ArchSpec::from_json(j);
  CHECK(a.children[1].input_dim == 2);
}

TEST_CASE("equivalent kernels of composed architectures") {
  const PriorSpec p{1.0, 1.0, 1.0};
  const ArchSpec r = basic(Activation::relu(), p, 50);
  const ArchSpec e = basic(Activation::erf(), {2.0, 0.5, 0.5}, 50);
  const Kernel ks = equivalent_kernel(output_sum({r, e}));
  CHECK(ks(v1(0.3), v1(1.2)) ==
        doctest::Approx(k_relu(v1(0.3), v1(1.2), p) + k_erf(v1(0.3), v1(1.2), {2.0, 0.5, 0.5})).epsilon(1e-14));
  const Kernel km = equivalent_kernel(hidden_mul({r, e}, 3.0));
  CHECK(km(v1(0.3), v1(1.2)) ==
        doctest::Approx(3.0 * k_relu(v1(0.3), v1(1.2), p) * k_erf(v1(0.3), v1(1.2), {2.0, 0.5, 1.0})).epsilon(1e-14));
  CHECK_THROWS_AS(equivalent_kernel(output_product({r, r})), std::invalid_argument);
  CHECK_THROWS_AS(equivalent_kernel(deep({{Activation::relu(), 10, 1, 1}}, 1.0)), std::invalid_argument);
  CHECK_THROWS_AS(equivalent_kernel(basic(Activation::tanh(), p, 10)), std::invalid_argument);
}

TEST_CASE("hidden unit means") {
  const PriorSpec p{1.0, 1.0, 1.0};
  CHECK(hidden_unit_mean(basic(Activation::relu(), p, 5))(v1(2.0)) ==
        doctest::Approx(std::sqrt(5.0 / (2.0 * std::numbers::pi))));
  CHECK(hidden_unit_mean(basic(Activation::erf(), p, 5))(v1(2.0)) == 0.0);
  CHECK(hidden_unit_mean(basic(Activation::cosine(), p, 5))(v1(1.0)) == doctest::Approx(std::exp(-1.0)));
}
