#include <algorithm>
#include <cmath>
#include <set>
#include <tuple>

#include "depgraph/encoders.hpp"
#include "depgraph/errors.hpp"
#include "depgraph/rng.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace depgraph;

namespace {

std::vector<double> random_series(std::size_t S, Rng& rng) {
  std::vector<double> x(S);
  for (double& v : x) v = rng.uniform(-1.0, 1.0);
  return x;
}

SliceFeatureMatrix random_features(std::size_t S, std::size_t M, Rng& rng) {
  SliceFeatureMatrix f;
  f.values = Matrix(S, M);
  for (double& v : f.values.data) v = rng.uniform(-2.0, 2.0);
  return f;
}

std::size_t argmax(const std::vector<double>& v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

std::vector<double> cosine(std::size_t S, double freq) {
  std::vector<double> x(S);
  for (std::size_t t = 0; t < S; ++t) x[t] = std::cos(2.0 * oracle::kPi * freq * static_cast<double>(t));
  return x;
}

}  // namespace

TEST_SUITE("spectral") {
  TEST_CASE("FFT amplitudes equal the direct DFT") {
    Rng rng(1);
    for (std::size_t S = 2; S <= 64; ++S) {
      const auto x = random_series(S, rng);
      const auto fast = amplitude_spectrum(x);
      const auto slow = oracle::naive_amplitudes(x);
      REQUIRE(fast.size() == slow.size());
      for (std::size_t k = 0; k < fast.size(); ++k) CHECK(std::abs(fast[k] - slow[k]) < 1e-12);
    }
  }

  TEST_CASE("grid encoding equals the DFT plus interpolation oracle") {
    Rng rng(2);
    std::vector<std::size_t> lengths;
    for (std::size_t S = 2; S <= 128; ++S) lengths.push_back(S);
    for (std::size_t S : {200, 257, 270, 511, 512}) lengths.push_back(S);
    for (std::size_t S : lengths) {
      const auto x = random_series(S, rng);
      const auto got = spectral_encode_series(x, 128, 24);
      const auto want = oracle::grid_spectrum(x, 128, 24);
      REQUIRE(got.size() == 24);
      double worst = 0.0;
      for (std::size_t b = 0; b < 24; ++b) worst = std::max(worst, std::abs(got[b] - want[b]));
      INFO("S = " << S);
      CHECK(worst < 1e-9);
    }
  }

  TEST_CASE("constant series is DC only") {
    for (std::size_t S : {2, 3, 31, 270}) {
      const std::vector<double> x(S, 0.7);
      const auto e = spectral_encode_series(x, 128, 24);
      CHECK(std::abs(e[0] - 0.7) < 1e-12);
      for (std::size_t b = 1; b < e.size(); ++b) CHECK(std::abs(e[b]) < 1e-12);
    }
  }

  TEST_CASE("sinusoid peaks at its frequency bin") {
    const auto e = spectral_encode_series(cosine(64, 0.125), 128, 128);
    const std::size_t expected = static_cast<std::size_t>(std::lround(0.125 * 2.0 * 127.0));
    CHECK(std::abs(static_cast<long>(argmax(e)) - static_cast<long>(expected)) <= 1);

    // 0.125 lies above the first 24 bins, so the peak is located on the full
    // grid; the truncated outputs only need the common length.
    const auto a = spectral_encode_series(cosine(31, 0.125), 128, 128);
    const auto b = spectral_encode_series(cosine(270, 0.125), 128, 128);
    const long pa = static_cast<long>(argmax(a)), pb = static_cast<long>(argmax(b));
    MESSAGE("peak bins: S=31 -> " << pa << ", S=270 -> " << pb);
    CHECK(std::abs(pa - pb) <= 1);
    CHECK(std::abs(pb - static_cast<long>(expected)) <= 1);
    CHECK(spectral_encode_series(cosine(31, 0.125), 128, 24).size() == 24);
    CHECK(spectral_encode_series(cosine(270, 0.125), 128, 24).size() == 24);
  }

  TEST_CASE("mean removal drops the DC bin only") {
    Rng rng(3);
    auto x = random_series(40, rng);
    for (double& v : x) v += 5.0;
    const auto raw = spectral_encode_series(x, 128, 24);
    const auto centred = spectral_encode_series(x, 128, 24, true);
    CHECK(std::abs(centred[0]) < 1e-12);
    for (std::size_t b = 1; b < 24; ++b) CHECK(std::abs(raw[b] - centred[b]) < 1e-12);
  }

  TEST_CASE("argument errors") {
    CHECK_THROWS_AS(spectral_encode_series(std::vector<double>{1.0}, 128, 24), DomainError);
    CHECK_THROWS_AS(spectral_encode_series(std::vector<double>{1.0, 2.0}, 16, 24), DomainError);
  }
}

TEST_SUITE("graphs") {
  TEST_CASE("SPG shape does not depend on the slice count") {
    Rng rng(4);
    const SpectralConfig cfg;
    for (std::size_t S : {2, 31, 270, 1000}) {
      const SpectralGraph g = build_spg(random_features(S, 32, rng), cfg);
      CHECK(g.vertex_features.rows == 32);
      CHECK(g.vertex_features.cols == 24);
      CHECK(g.channel_ids.size() == 32);
      for (std::size_t i = 0; i < 32; ++i)
        for (std::size_t j = 0; j < 32; ++j) CHECK(g.adjacency[i * 32 + j] == (i != j ? 1 : 0));
    }
  }

  TEST_CASE("SPG rows are the column spectra") {
    Rng rng(5);
    const auto f = random_features(40, 5, rng);
    const SpectralGraph g = build_spg(f, SpectralConfig{});
    for (std::size_t m = 0; m < 5; ++m) {
      const auto want = oracle::grid_spectrum(f.values.column(m), 128, 24);
      for (std::size_t b = 0; b < 24; ++b) CHECK(std::abs(g.vertex_features(m, b) - want[b]) < 1e-9);
    }
  }

  TEST_CASE("circular shifts leave the SPG unchanged") {
    Rng rng(6);
    for (std::size_t S : {2, 7, 31, 64, 270}) {
      const auto f = random_features(S, 6, rng);
      const SpectralGraph g = build_spg(f, SpectralConfig{});
      for (std::size_t shift : {std::size_t{1}, S / 2, S - 1}) {
        SliceFeatureMatrix r = f;
        for (std::size_t s = 0; s < S; ++s)
          for (std::size_t m = 0; m < 6; ++m) r.values((s + shift) % S, m) = f.values(s, m);
        const SpectralGraph h = build_spg(r, SpectralConfig{});
        double worst = 0.0;
        for (std::size_t i = 0; i < g.vertex_features.data.size(); ++i)
          worst = std::max(worst, std::abs(g.vertex_features.data[i] - h.vertex_features.data[i]));
        CHECK(worst < 1e-9);
      }
    }
  }

  TEST_CASE("constant column gives a DC-only vertex") {
    Rng rng(7);
    auto f = random_features(31, 3, rng);
    for (std::size_t s = 0; s < 31; ++s) f.values(s, 1) = -0.25;
    const SpectralGraph g = build_spg(f, SpectralConfig{});
    CHECK(std::abs(g.vertex_features(1, 0) - 0.25) < 1e-12);
    for (std::size_t b = 1; b < 24; ++b) CHECK(std::abs(g.vertex_features(1, b)) < 1e-12);
  }

  TEST_CASE("SEG matches brute-force enumeration") {
    Rng rng(8);
    for (std::size_t S = 1; S <= 50; ++S) {
      for (int trial = 0; trial < 20; ++trial) {
        std::vector<std::size_t> W;
        for (std::size_t w = 1; w <= 10; ++w)
          if (rng.uniform() < 0.4) W.push_back(w);
        if (W.empty()) W.push_back(1 + rng.index(10));
        const SequentialGraph g = build_seg(random_features(S, 2, rng), W);
        std::set<std::tuple<std::size_t, std::size_t, std::size_t>> want, got;
        for (std::size_t i = 0; i < S; ++i)
          for (std::size_t j = 0; j < S; ++j)
            for (std::size_t w : W)
              if (j > i && j - i == w) want.insert({i, j, w});
        for (const auto& e : g.edges) got.insert({e.src, e.dst, e.window});
        CHECK(got == want);
        CHECK(g.edges.size() == want.size());
        CHECK(g.num_vertices() == S);
      }
    }
  }

  TEST_CASE("SEG examples") {
    Rng rng(9);
    const SequentialGraph g = build_seg(random_features(4, 2, rng), {1, 2});
    const std::vector<SequentialEdge> want{{0, 1, 1}, {1, 2, 1}, {2, 3, 1}, {0, 2, 2}, {1, 3, 2}};
    CHECK(g.edges == want);
    CHECK(build_seg(random_features(1, 2, rng), {1, 2}).edges.empty());
    CHECK(build_seg(random_features(3, 2, rng), {5}).edges.empty());
    CHECK_THROWS_AS(build_seg(random_features(3, 2, rng), {}), DomainError);
  }
}

TEST_SUITE("aggregates") {
  TEST_CASE("average of slice predictions") {
    CHECK(aggregate_atp(std::vector<double>{4, 6}) == 5.0);
    CHECK(aggregate_atp(std::vector<double>{3.25}) == 3.25);
    CHECK(aggregate_atp(std::vector<double>(7, 1.5)) == doctest::Approx(1.5).epsilon(1e-15));
    CHECK_THROWS_AS(aggregate_atp(std::vector<double>{}), DomainError);
  }

  TEST_CASE("statistics of (1,2,3)") {
    const auto s = series_statistics(std::vector<double>{1, 2, 3});
    REQUIRE(s.size() == kNumStatistics);
    CHECK(s[0] == doctest::Approx(2.0));
    CHECK(s[1] == doctest::Approx(std::sqrt(2.0 / 3.0)).epsilon(1e-14));
    CHECK(s[2] == 1.0);
    CHECK(s[3] == 3.0);
    CHECK(s[4] == 2.0);
    CHECK(s[5] == 2.0);
    CHECK(std::abs(s[6]) < 1e-14);                    // skewness
    CHECK(s[7] == doctest::Approx(1.5));               // kurtosis
    CHECK(s[8] == doctest::Approx(std::sqrt(14.0 / 3.0)));
    CHECK(std::abs(s[9]) < 1e-14);                    // lag-1 autocorrelation
    CHECK(s[10] == doctest::Approx(1.0));              // mean |diff|
    CHECK(s[11] == doctest::Approx(1.0));              // slope
  }

  TEST_CASE("constant column statistics") {
    const auto s = series_statistics(std::vector<double>(5, 2.0));
    CHECK(s[1] == 0.0);
    CHECK(s[4] == 0.0);
    CHECK(s[10] == 0.0);
  }

  TEST_CASE("STA is 12 statistics per column") {
    Rng rng(10);
    for (std::size_t S : {2, 9, 40}) {
      const auto f = random_features(S, 5, rng);
      const auto v = aggregate_sta(f);
      REQUIRE(v.size() == 60);
      for (std::size_t m = 0; m < 5; ++m) {
        const auto s = series_statistics(f.values.column(m));
        for (std::size_t k = 0; k < kNumStatistics; ++k) CHECK(v[m * kNumStatistics + k] == s[k]);
      }
    }
    CHECK_THROWS_AS(aggregate_sta(random_features(1, 5, rng)), DomainError);
  }

  TEST_CASE("spectral vector, heatmap and SPG agree") {
    Rng rng(11);
    const SpectralConfig cfg;
    const auto f = random_features(33, 32, rng);
    const auto spv = aggregate_spv(f, cfg);
    const auto sph = aggregate_sph(f, cfg);
    const auto spg = build_spg(f, cfg);
    CHECK(spv.size() == 768);
    CHECK(spv == sph.values.data);
    CHECK(sph.values == spg.vertex_features);

    SliceFeatureMatrix c;
    c.values = Matrix(10, 3, 1.0);
    const auto cv = aggregate_spv(c, cfg);
    for (std::size_t m = 0; m < 3; ++m) {
      CHECK(std::abs(cv[m * 24] - 1.0) < 1e-12);
      for (std::size_t b = 1; b < 24; ++b) CHECK(std::abs(cv[m * 24 + b]) < 1e-12);
    }
  }
}
