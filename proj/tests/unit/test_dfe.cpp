#include <algorithm>
#include <cmath>

#include "depgraph/dfe.hpp"
#include "depgraph/errors.hpp"
#include "depgraph/short_term.hpp"
#include "doctest.h"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace depgraph;
using ad::Var;
using oracle::Mat;
using oracle::Vec;

namespace {

Var vec(const Vec& v) { return Var::constant(Shape{v.size()}, v); }

Vec random_vec(std::size_t n, Rng& rng) {
  Vec v(n);
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

BatchMember member(const oracle::MemberValues& m, SeverityCategory cat = SeverityCategory::mild) {
  BatchMember b;
  b.ns.f_dep = vec(m.f_dep);
  b.ns.f_non = vec(m.f_non);
  b.ns.f_dec = vec(m.f_dec);
  b.ns.p_ns = Var::scalar(m.p_ns);
  b.p_mta = Var::scalar(m.p_mta);
  b.enhanced = vec(m.enhanced);
  b.label = m.label;
  b.category = cat;
  return b;
}

oracle::MemberValues random_member(Rng& rng, std::size_t d = 3, std::size_t J = 5) {
  return {random_vec(d, rng), random_vec(d, rng), random_vec(J, rng), random_vec(J, rng),
          rng.uniform(), rng.uniform(), rng.uniform()};
}

LossBreakdown run_losses(const std::vector<oracle::MemberValues>& batch, LossWeights w = {}) {
  std::vector<BatchMember> members;
  for (const auto& m : batch) members.push_back(member(m));
  return compute_losses(members, w).values();
}

DfeConfig small_dfe(std::size_t D = 4) {
  DfeConfig c;
  c.num_scales = 3;
  c.feature_dim = D;
  c.encoder_widths = {6, 3};
  c.decoder_widths = {5};
  return c;
}

ParamStore dfe_params(const DfeConfig& c, std::uint64_t seed) {
  ParamStore p;
  Rng rng(seed);
  init_dfe_params(c, p, rng);
  return p;
}

Mat m(const ParamStore& p, const std::string& name) { return oracle::to_mat(p.at(name)); }

}  // namespace

TEST_SUITE("feature enhancement") {
  TEST_CASE("mutual attention with identity projections, D=2") {
    ParamStore p;
    for (const char* n : {"ma.beta", "ma.omega", "ma.gamma"}) p.set(n, Tensor({2, 2}, {1, 0, 0, 1}));
    Binding b(p, false);
    const Var out = mutual_attention(vec({1, 0}), vec({0, 1}), b, "ma.");
    const Mat I{{1, 0}, {0, 1}};
    const Vec expect = oracle::mutual_attention({1, 0}, {0, 1}, I, I, I);
    // A_1 = diag(1,0), A_2 = diag(0,1), A_1^T A_2 = 0, uniform rows, gamma f1 = (1,0).
    CHECK(expect[0] == doctest::Approx(1.5).epsilon(1e-15));
    CHECK(expect[1] == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(std::abs(out.value()[0] - expect[0]) < 1e-12);
    CHECK(std::abs(out.value()[1] - expect[1]) < 1e-12);
  }

  TEST_CASE("mutual attention matches the literal matrix chain") {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
      Rng rng(seed);
      const std::size_t D = 2 + rng.index(6);
      ParamStore p;
      for (const char* n : {"ma.beta", "ma.omega", "ma.gamma"}) p.init_uniform(n, {D, D}, D, D, rng);
      const Vec f1 = random_vec(D, rng), f2 = random_vec(D, rng);
      Binding b(p, false);
      const Var out = mutual_attention(vec(f1), vec(f2), b, "ma.");
      const Vec expect = oracle::mutual_attention(f1, f2, m(p, "ma.beta"), m(p, "ma.omega"), m(p, "ma.gamma"));
      REQUIRE(out.size() == D);
      for (std::size_t i = 0; i < D; ++i) CHECK(std::abs(out.value()[i] - expect[i]) < 1e-12);
    }
  }

  TEST_CASE("zero value projection leaves f1") {
    Rng rng(2);
    ParamStore p;
    for (const char* n : {"ma.beta", "ma.omega"}) p.init_uniform(n, {4, 4}, 4, 4, rng);
    p.init_constant("ma.gamma", {4, 4}, 0.0);
    const Vec f1 = random_vec(4, rng);
    Binding b(p, false);
    CHECK(mutual_attention(vec(f1), vec(random_vec(4, rng)), b, "ma.").value() == f1);
    CHECK_THROWS_AS(mutual_attention(vec(f1), vec({1, 2}), b, "ma."), DomainError);
  }

  TEST_CASE("mta forward matches a straight-line reimplementation") {
    for (std::uint64_t seed = 3; seed < 6; ++seed) {
      const DfeConfig c = small_dfe(4);
      const ParamStore p = dfe_params(c, seed);
      Rng rng(seed + 50);
      MultiScaleFeatures feats;
      std::vector<Vec> raw;
      for (int k = 0; k < 3; ++k) {
        raw.push_back(random_vec(4, rng));
        feats.per_scale.push_back(vec(raw.back()));
      }
      Binding b(p, false);
      const MtaOutput out = mta_forward(c, feats, b);
      std::vector<Vec> local;
      for (int k = 0; k < 3; ++k) {
        const std::string n = "mta.nl" + std::to_string(k) + ".";
        local.push_back(oracle::nonlocal(raw[k], m(p, n + "theta"), m(p, n + "phi"), m(p, n + "g")));
      }
      Vec F;
      for (int k = 0; k < 3; ++k) {
        const std::string n = "mta.ma" + std::to_string(k) + ".";
        const Vec e = oracle::mutual_attention(local[k], local[(k + 1) % 3], m(p, n + "beta"), m(p, n + "omega"),
                                               m(p, n + "gamma"));
        F.insert(F.end(), e.begin(), e.end());
      }
      REQUIRE(out.enhanced.size() == 12);
      for (std::size_t i = 0; i < 12; ++i) CHECK(std::abs(out.enhanced.value()[i] - F[i]) < 1e-12);
      double aux = p.at("mta.aux.b").data[0];
      for (std::size_t i = 0; i < 12; ++i) aux += p.at("mta.aux.w").data[i] * F[i];
      CHECK(std::abs(out.p_mta.item() - aux) < 1e-12);
    }
  }

  TEST_CASE("mta with zero attention weights concatenates its inputs") {
    const DfeConfig c = small_dfe(4);
    ParamStore p = dfe_params(c, 7);
    p.zero_prefix("mta.nl");
    p.zero_prefix("mta.ma");
    Rng rng(7);
    MultiScaleFeatures feats;
    Vec all;
    for (int k = 0; k < 3; ++k) {
      const Vec v = random_vec(4, rng);
      all.insert(all.end(), v.begin(), v.end());
      feats.per_scale.push_back(vec(v));
    }
    Binding b(p, false);
    CHECK(mta_forward(c, feats, b).enhanced.value() == all);
    MultiScaleFeatures one;
    one.per_scale.push_back(vec(random_vec(4, rng)));
    CHECK_THROWS_AS(mta_forward(c, one, b), ConfigError);
  }

  TEST_CASE("default toy sizes") {
    const DfeConfig c;
    CHECK(c.enhanced_dim() == 192);
    const ParamStore p = dfe_params(c, 8);
    Rng rng(8);
    Binding b(p, false);
    const DisentangledPair ns = ns_forward(c, vec(random_vec(192, rng)), b);
    CHECK(ns.f_dep.size() == 8);
    CHECK(ns.f_non.size() == 8);
    CHECK(ns.f_dec.size() == 192);
    CHECK(ns.p_ns.size() == 1);
  }

  TEST_CASE("noise separation against hand-rolled matrix arithmetic") {
    const DfeConfig c = small_dfe(4);
    const ParamStore p = dfe_params(c, 9);
    Rng rng(9);
    const Vec F = random_vec(12, rng);
    Binding b(p, false);
    const DisentangledPair ns = ns_forward(c, vec(F), b);
    const Vec dep = oracle::dense_stack(p, "ns.dep.", 2, F);
    const Vec non = oracle::dense_stack(p, "ns.non.", 2, F);
    Vec both = dep;
    both.insert(both.end(), non.begin(), non.end());
    const Vec dec = oracle::dense_stack(p, "ns.dec.", 2, both);
    double reg = p.at("ns.reg.b").data[0];
    for (std::size_t i = 0; i < dep.size(); ++i) reg += p.at("ns.reg.w").data[i] * dep[i];
    reg = std::max(reg, 0.0);
    for (std::size_t i = 0; i < dep.size(); ++i) CHECK(std::abs(ns.f_dep.value()[i] - dep[i]) < 1e-13);
    for (std::size_t i = 0; i < non.size(); ++i) CHECK(std::abs(ns.f_non.value()[i] - non[i]) < 1e-13);
    for (std::size_t i = 0; i < dec.size(); ++i) CHECK(std::abs(ns.f_dec.value()[i] - dec[i]) < 1e-13);
    CHECK(std::abs(ns.p_ns.item() - reg) < 1e-13);
  }

  TEST_CASE("zero input and zero biases give zero outputs") {
    const DfeConfig c = small_dfe(4);
    ParamStore p = dfe_params(c, 10);
    p.at("ns.reg.b").data[0] = 0.0;
    Binding b(p, false);
    const DisentangledPair ns = ns_forward(c, vec(Vec(12, 0.0)), b);
    for (const Var* v : {&ns.f_dep, &ns.f_non, &ns.f_dec, &ns.p_ns})
      for (double x : v->value()) CHECK(x == 0.0);
  }
}

TEST_SUITE("losses") {
  TEST_CASE("hand-derived similarity and orthogonality values") {
    oracle::MemberValues a{{0, 0}, {0, 0}, {0}, {0}, 0.5, 0.5, 0.5};
    oracle::MemberValues b{{2, 2}, {0, 0}, {0}, {0}, 0.5, 0.5, 0.5};
    CHECK(run_losses({a, b}).l_sim == doctest::Approx(2.0).epsilon(1e-15));

    oracle::MemberValues c{{1, 1}, {1, 1}, {0}, {0}, 0.5, 0.5, 0.5};
    CHECK(run_losses({c}).l_dsim == doctest::Approx(4.0).epsilon(1e-15));
  }

  TEST_CASE("every term vanishes at its zero case") {
    oracle::MemberValues a{{1, 0}, {0, 1}, {0.3, 0.7}, {0.3, 0.7}, 0.4, 0.4, 0.4};
    oracle::MemberValues b = a;
    b.f_non = {0, -2};
    const LossBreakdown l = run_losses({a, b});
    CHECK(l.l_ns == 0.0);
    CHECK(l.l_mta == 0.0);
    CHECK(l.l_sim == 0.0);
    CHECK(l.l_dsim == 0.0);
    CHECK(l.l_rec == 0.0);
    CHECK(l.l_short == 0.0);
  }

  TEST_CASE("terms match straight-line formulas on random batches") {
    Rng rng(12);
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<oracle::MemberValues> batch;
      const std::size_t N = 1 + rng.index(5);
      for (std::size_t n = 0; n < N; ++n) batch.push_back(random_member(rng));
      const LossWeights w{rng.uniform(), rng.uniform(), rng.uniform(), rng.uniform()};
      const LossBreakdown l = run_losses(batch, w);
      const oracle::LossOracle o = oracle::losses(batch);
      CHECK(std::abs(l.l_ns - o.l_ns) < 1e-12);
      CHECK(std::abs(l.l_mta - o.l_mta) < 1e-12);
      CHECK(std::abs(l.l_sim - o.l_sim) < 1e-12);
      CHECK(std::abs(l.l_dsim - o.l_dsim) < 1e-12);
      CHECK(std::abs(l.l_rec - o.l_rec) < 1e-12);
      const double total = o.l_ns + w.w1 * o.l_mta + w.w2 * o.l_sim + w.w3 * o.l_dsim + w.w4 * o.l_rec;
      CHECK(std::abs(l.l_short - total) < 1e-12);
      CHECK(l.l_sim >= 0.0);
      CHECK(l.l_dsim >= 0.0);
    }
  }

  TEST_CASE("batch order does not matter") {
    Rng rng(13);
    std::vector<oracle::MemberValues> batch;
    for (int n = 0; n < 4; ++n) batch.push_back(random_member(rng));
    const LossBreakdown base = run_losses(batch);
    std::reverse(batch.begin(), batch.end());
    std::swap(batch[0], batch[2]);
    const LossBreakdown perm = run_losses(batch);
    CHECK(perm.l_sim == doctest::Approx(base.l_sim).epsilon(1e-13));
    CHECK(perm.l_short == doctest::Approx(base.l_short).epsilon(1e-13));
  }

  TEST_CASE("scaling F_dep by c scales the orthogonality term by c^2") {
    Rng rng(14);
    std::vector<oracle::MemberValues> batch;
    for (int n = 0; n < 3; ++n) batch.push_back(random_member(rng));
    const double base = run_losses(batch).l_dsim;
    for (auto& m : batch)
      for (double& v : m.f_dep) v *= -3.0;
    CHECK(run_losses(batch).l_dsim == doctest::Approx(9.0 * base).epsilon(1e-12));
  }

  TEST_CASE("empty and mixed batches are refused") {
    CHECK_THROWS_AS(compute_losses({}, {}), DomainError);
    Rng rng(15);
    std::vector<BatchMember> mixed{member(random_member(rng), SeverityCategory::mild),
                                   member(random_member(rng), SeverityCategory::severe)};
    CHECK_THROWS_AS(compute_losses(mixed, {}), DomainError);
  }
}

TEST_SUITE("short-term training") {
  TEST_CASE("L_short gradients through the whole stack") {
    for (std::uint64_t variant = 0; variant < 2; ++variant) {
      const ShortTermConfig c = fixture::tiny_short_term(variant);
      ParamStore p = init_short_term_params(c);
      Rng rng(variant);
      oracle::jitter_biases(p, rng);
      std::vector<LabeledSlice> batch;
      for (int n = 0; n < 2; ++n) batch.push_back({fixture::random_slice(c, rng), 20 + n});
      const BatchEvaluation eval = evaluate_batch(c, p, batch, true);
      const auto r = oracle::check_gradients(p, eval.gradients, [&](const ParamStore& q) {
        return evaluate_batch(c, q, batch, false).losses.l_short;
      });
      INFO("variant " << variant << " worst " << r.worst_name);
      CHECK(r.worst < 1e-4);
    }
  }

  TEST_CASE("zero learning rate leaves parameters unchanged") {
    const Corpus corpus = generate_synthetic_corpus(fixture::tiny_synth(), 3);
    ShortTermConfig c = fixture::tiny_short_term();
    c.steps = 1;
    c.adam.learning_rate = 0.0;
    const ShortTermResult r = train_short_term(corpus, c);
    CHECK(r.params == init_short_term_params(c));
    CHECK(r.log.size() == 1);
  }

  TEST_CASE("same seed, same parameters; loss trends down") {
    const Corpus corpus = generate_synthetic_corpus(fixture::tiny_synth(), 4);
    ShortTermConfig c = fixture::tiny_short_term();
    c.steps = 200;
    c.adam.learning_rate = 3e-3;
    const ShortTermResult a = train_short_term(corpus, c);
    const ShortTermResult b = train_short_term(corpus, c);
    CHECK(a.params == b.params);
    CHECK(a.rng_state == b.rng_state);
    REQUIRE(a.log.size() == 200);
    double head = 0.0, tail = 0.0;
    for (std::size_t i = 0; i < 25; ++i) {
      head += a.log[i].losses.l_short;
      tail += a.log[a.log.size() - 1 - i].losses.l_short;
    }
    MESSAGE("smoothed l_short " << head / 25 << " -> " << tail / 25);
    CHECK(tail < head);
    for (const auto& e : a.log) {
      const auto& l = e.losses;
      CHECK(l.l_short == doctest::Approx(l.l_ns + l.l_mta + l.l_sim + l.l_dsim + l.l_rec).epsilon(1e-12));
    }
  }

  TEST_CASE("extraction yields one row per slice with the bottleneck width") {
    const ShortTermConfig c = fixture::tiny_short_term();
    const ParamStore p = init_short_term_params(c);
    const Corpus corpus = generate_synthetic_corpus(fixture::tiny_synth(), 5);
    const VideoSample& v = corpus.samples[0];
    const ExtractedVideo e = extract_video(v, c, p);
    CHECK(e.features.num_slices() == slice_count(v.num_frames, 6, 6));
    CHECK(e.features.dim() == c.dfe.bottleneck());
    CHECK(e.slice_predictions.size() == e.features.num_slices());
    CHECK(extract_slice_features(v, c, p) == e.features);

    VideoSample shortv = v;
    shortv.num_frames = 4;
    shortv.frames.resize(4 * v.frame_size());
    shortv.frame_valid.resize(4);
    CHECK_THROWS_AS(extract_video(shortv, c, p), DomainError);

    std::vector<const VideoSample*> both{&corpus.samples[1], &corpus.samples[1]};
    const auto many = extract_many(both, c, p, 2);
    CHECK(many[0].features.values == many[1].features.values);
  }
}
