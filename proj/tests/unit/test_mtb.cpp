#include <cmath>
#include <string>

#include "depgraph/errors.hpp"
#include "depgraph/mtb.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace depgraph;

namespace {

MtbConfig tiny_config() {
  MtbConfig c;
  c.slice_length = 6;
  c.height = 8;
  c.width = 8;
  c.spatial_factors = {1, 2, 4};
  c.temporal_factors = {1, 2, 3};
  c.conv_channels = {2, 2, 2};
  c.encoding_channels = 2;
  c.output_dim = 4;
  return c;
}

ThinSlice random_slice(const MtbConfig& c, Rng& rng) {
  ThinSlice s;
  s.frames = Tensor({c.slice_length, c.height, c.width, c.channels});
  for (auto& v : s.frames.data) v = rng.uniform();
  return s;
}

ParamStore init(const MtbConfig& c, std::uint64_t seed) {
  ParamStore p;
  Rng rng(seed);
  init_mtb_params(c, p, rng);
  return p;
}

std::vector<std::vector<double>> run(const MtbConfig& c, const ThinSlice& s, const ParamStore& p) {
  ad::NoGradGuard guard;
  Binding b(p, false);
  std::vector<std::vector<double>> out;
  for (const auto& f : mtb_forward(c, s, b).per_scale) out.push_back(f.value());
  return out;
}

}  // namespace

TEST_SUITE("backbone") {
  TEST_CASE("zero input with zero biases gives zero features") {
    const MtbConfig c = tiny_config();
    const ParamStore p = init(c, 1);
    ThinSlice s;
    s.frames = Tensor({6, 8, 8, 1}, 0.0);
    for (const auto& f : run(c, s, p))
      for (double v : f) CHECK(v == 0.0);
  }

  TEST_CASE("default toy config yields K vectors of length D") {
    const MtbConfig c;
    Rng rng(2);
    const auto out = run(c, random_slice(c, rng), init(c, 2));
    REQUIRE(out.size() == 3);
    for (const auto& f : out) {
      CHECK(f.size() == 64);
      for (double v : f) CHECK(std::isfinite(v));
    }
  }

  TEST_CASE("identity convolutions and mean projection pass a constant through") {
    MtbConfig c;
    c.slice_length = 6;
    c.height = 4;
    c.width = 4;
    c.spatial_factors = {1};
    c.temporal_factors = {1};
    c.conv_channels = {1};
    c.encoding_channels = 1;
    c.output_dim = 5;
    ParamStore p = init(c, 3);
    for (const auto& name : p.names()) p.at(name).data.assign(p.at(name).size(), 0.0);
    p.at("mtb.b0.conv0.w").data[13] = 1.0;  // centre of the 3x3x3 kernel
    p.at("mtb.b0.spatial.w").data[0] = 1.0;
    p.at("mtb.b0.temporal.w").data[1] = 1.0;
    p.at("mtb.b0.proj.w").data.assign(5 * 6, 1.0 / 6.0);
    ThinSlice s;
    s.frames = Tensor({6, 4, 4, 1}, 0.4);
    const auto out = run(c, s, p);
    REQUIRE(out.size() == 1);
    for (double v : out[0]) CHECK(v == doctest::Approx(0.4).epsilon(1e-14));
  }

  TEST_CASE("temporal downsampling is block averaging") {
    CHECK(temporal_downsample({1, 2, 3, 4}, 1, 2) == std::vector<double>{1.5, 3.5});
    CHECK(temporal_downsample({1, 2, 3, 4}, 1, 1) == std::vector<double>{1, 2, 3, 4});
    CHECK(temporal_downsample({5, 5, 5, 5, 5, 5}, 2, 3) == std::vector<double>{5, 5});
    CHECK(temporal_downsample({1, 10, 3, 30}, 2, 2) == std::vector<double>{2, 20});
    CHECK_THROWS_AS(temporal_downsample({1, 2, 3}, 1, 2), DomainError);
  }

  TEST_CASE("zeroing one branch zeroes only its scale") {
    const MtbConfig c = tiny_config();
    Rng rng(4);
    const ThinSlice s = random_slice(c, rng);
    const ParamStore p = init(c, 4);
    const auto base = run(c, s, p);
    for (std::size_t k = 0; k < 3; ++k) {
      ParamStore q = p;
      q.zero_prefix(mtb_branch_prefix(k));
      const auto out = run(c, s, q);
      for (std::size_t j = 0; j < 3; ++j) {
        if (j == k) {
          for (double v : out[j]) CHECK(v == 0.0);
        } else {
          CHECK(out[j] == base[j]);
        }
      }
    }
  }

  TEST_CASE("deterministic given input and parameters") {
    const MtbConfig c = tiny_config();
    Rng rng(5);
    const ThinSlice s = random_slice(c, rng);
    const ParamStore p = init(c, 5);
    CHECK(run(c, s, p) == run(c, s, p));
  }

  TEST_CASE("gradients match central differences") {
    for (std::uint64_t seed : {11, 12, 13}) {
      const MtbConfig c = tiny_config();
      Rng rng(seed);
      const ThinSlice s = random_slice(c, rng);
      ParamStore p = init(c, seed);
      oracle::jitter_biases(p, rng);
      std::vector<double> w(12);
      for (auto& v : w) v = rng.uniform(-1.0, 1.0);
      auto loss_of = [&](const ParamStore& q, Binding& b) {
        const auto f = mtb_forward(c, s, b).per_scale;
        return ad::dot(ad::concat(f), ad::Var::constant(Shape{12}, w));
      };
      Binding b(p, true);
      ad::backward(loss_of(p, b));
      const auto grads = b.gradients();
      const auto report = oracle::check_gradients(p, grads, [&](const ParamStore& q) {
        ad::NoGradGuard guard;
        Binding bb(q, false);
        return loss_of(q, bb).item();
      });
      INFO("seed " << seed << " worst tensor " << report.worst_name);
      CHECK(report.worst < 1e-4);
    }
  }

  TEST_CASE("shape and finiteness errors") {
    const MtbConfig c = tiny_config();
    ParamStore p = init(c, 6);
    ThinSlice wrong;
    wrong.frames = Tensor({6, 4, 4, 1}, 0.1);
    Binding b(p, false);
    CHECK_THROWS_AS(mtb_forward(c, wrong, b), DomainError);

    p.at("mtb.b1.conv0.w").data[0] = std::nan("");
    Rng rng(6);
    const ThinSlice s = random_slice(c, rng);
    Binding bn(p, false);
    try {
      mtb_forward(c, s, bn);
      FAIL("expected a numeric error");
    } catch (const NumericError& e) {
      CHECK(std::string(e.what()).find("mtb.b1.conv0") != std::string::npos);
    }
  }

  TEST_CASE("config validation") {
    MtbConfig c = tiny_config();
    c.temporal_factors = {1, 4, 3};
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = tiny_config();
    c.temporal_factors = {1, 2, 4};
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = tiny_config();
    c.spatial_factors = {1, 3, 4};
    CHECK_THROWS_AS(c.validate(), ConfigError);
    CHECK_NOTHROW(MtbConfig::reference().validate());
  }
}
