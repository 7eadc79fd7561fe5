#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "edua/encoder.hpp"
#include "edua/grad_check.hpp"
#include "edua/sentence.hpp"
#include "fixtures.hpp"

using namespace edua;

namespace {

// A small model with word_dim == fused_dim so fusion weights can be set to
// the identity in the closed-form checks.
Model square_model(std::uint64_t seed) {
  ModelDims dims;
  dims.word_dim = 6;
  dims.aspect_dim = 6;
  dims.fused_dim = 6;
  dims.hidden_dim = 3;
  dims.max_edus = 4;
  std::vector<LabeledSample> corpus = fixtures::synthetic_corpus(6);
  std::mt19937_64 vrng(seed);
  Vocab vocab = load_glove("", collect_tokens({&corpus}), dims.word_dim, vrng);
  return Model::init(dims, std::move(vocab), fixtures::synth_aspects(), seed);
}

void set_identity(Parameter& p) {
  p.value.fill(0.0);
  for (int i = 0; i < std::min(p.value.rows(), p.value.cols()); ++i) p.value.at(i, i) = 1.0;
}

}  // namespace

TEST_CASE("word-aspect fusion") {
  Model m = square_model(3);

  SECTION("zero inputs give the zero vector") {
    Tensor out = fuse_word_aspect(m.params, Tensor({6}), Tensor({6}));
    for (double x : out.v) CHECK(x == 0.0);
  }
  SECTION("identity weights reduce to tanh of the word vector") {
    set_identity(*m.params.fuse_word);
    set_identity(*m.params.fuse_aspect);
    Tensor out = fuse_word_aspect(m.params, Tensor::full({6}, 0.5), Tensor({6}));
    for (double x : out.v) CHECK_THAT(x, Catch::Matchers::WithinAbs(0.46211715726000974, 1e-12));
  }
  SECTION("outputs stay in (-1, 1) for large inputs") {
    std::mt19937_64 rng(8);
    for (int trial = 0; trial < 20; ++trial) {
      Tensor w = Tensor::uniform({6}, -100.0, 100.0, rng);
      Tensor a = Tensor::uniform({6}, -100.0, 100.0, rng);
      for (double x : fuse_word_aspect(m.params, w, a).v) {
        CHECK(x > -1.0);
        CHECK(x < 1.0);
      }
    }
  }
  SECTION("dimension mismatch is rejected") {
    CHECK_THROWS_AS(fuse_word_aspect(m.params, Tensor({5}), Tensor({6})), DimensionError);
  }
}

TEST_CASE("bidirectional gru") {
  Model m = square_model(4);

  SECTION("all-zero weights keep the state at zero") {
    for (Parameter* p : m.params.parameters())
      if (p->name.rfind("gru.", 0) == 0) p->value.fill(0.0);
    std::vector<Tensor> fused(3, Tensor::full({6}, 0.7));
    Tensor states = bigru_encode(m.params, fused);
    for (double x : states.v) CHECK(x == 0.0);
  }

  SECTION("empty sequence is a dimension error") {
    CHECK_THROWS_AS(bigru_encode(m.params, {}), DimensionError);
  }

  SECTION("with tied directions, a single step gives equal halves") {
    auto tie = [&](const char* fwd, const char* bwd) {
      m.params.find(std::string("gru.bwd.") + bwd)->value = m.params.find(std::string("gru.fwd.") + fwd)->value;
    };
    for (const char* name : {"w_update", "w_reset", "w_cand", "u_update", "u_reset", "u_cand",
                             "b_update", "b_reset", "b_cand"})
      tie(name, name);
    std::mt19937_64 rng(5);
    Tensor states = bigru_encode(m.params, {Tensor::uniform({6}, -1, 1, rng)});
    for (int c = 0; c < 3; ++c) CHECK(states.at(0, c) == states.at(0, c + 3));
  }

  SECTION("with tied directions, reversing the input swaps and reverses the halves") {
    for (const char* name : {"w_update", "w_reset", "w_cand", "u_update", "u_reset", "u_cand",
                             "b_update", "b_reset", "b_cand"})
      m.params.find(std::string("gru.bwd.") + name)->value =
          m.params.find(std::string("gru.fwd.") + name)->value;

    std::mt19937_64 rng(6);
    std::vector<Tensor> seq;
    for (int t = 0; t < 4; ++t) seq.push_back(Tensor::uniform({6}, -1, 1, rng));
    std::vector<Tensor> rev(seq.rbegin(), seq.rend());

    Tensor a = bigru_encode(m.params, seq);
    Tensor b = bigru_encode(m.params, rev);
    const int dh = 3, T = 4;
    for (int t = 0; t < T; ++t)
      for (int c = 0; c < dh; ++c) {
        CHECK_THAT(a.at(t, c), Catch::Matchers::WithinAbs(b.at(T - 1 - t, dh + c), 1e-12));
        CHECK_THAT(a.at(t, dh + c), Catch::Matchers::WithinAbs(b.at(T - 1 - t, c), 1e-12));
      }
  }
}

TEST_CASE("word-level attention") {
  Model m = square_model(9);
  const int ds = m.params.dims.state_dim();

  SECTION("identical rows attend uniformly") {
    Tensor h({3, ds});
    for (int t = 0; t < 3; ++t)
      for (int c = 0; c < ds; ++c) h.at(t, c) = 0.3 * (c + 1);
    AttentionVector av = word_attention(m.params, h);
    for (double s : av.scores) CHECK_THAT(s, Catch::Matchers::WithinAbs(1.0 / 3, 1e-12));
  }
  SECTION("engineered scores reproduce the sparsemax example") {
    m.params.word_attn->value.fill(0.0);
    m.params.word_attn->value.at(0, 0) = 1.0;
    Tensor h({3, ds});
    h.at(0, 0) = 1.0;
    h.at(1, 0) = 0.5;
    h.at(2, 0) = -1.0;
    AttentionVector av = word_attention(m.params, h);
    CHECK(av.scores == std::vector<double>{0.75, 0.25, 0.0});
  }
  SECTION("single word takes everything") {
    Tensor h = Tensor::full({1, ds}, 0.2);
    CHECK(word_attention(m.params, h).scores == std::vector<double>{1.0});
  }
  SECTION("masked positions carry exact zeros") {
    std::mt19937_64 rng(2);
    Tensor h = Tensor::uniform({4, ds}, -1, 1, rng);
    AttentionVector av = word_attention(m.params, h, {true, false, true, false});
    CHECK(av.scores[1] == 0.0);
    CHECK(av.scores[3] == 0.0);
    CHECK_THAT(av.scores[0] + av.scores[2], Catch::Matchers::WithinAbs(1.0, 1e-9));
  }
  SECTION("an all-masked EDU is an input error") {
    Tensor h = Tensor::full({2, ds}, 1.0);
    CHECK_THROWS_AS(word_attention(m.params, h, {false, false}), InputError);
  }
}

TEST_CASE("edu representation") {
  Model m = square_model(12);
  const int ds = m.params.dims.state_dim();
  std::mt19937_64 rng(3);
  Tensor h = Tensor::uniform({2, ds}, -1, 1, rng);

  SECTION("one-hot attention with a zero position row selects a state row") {
    AttentionVector alpha;
    alpha.scores = {1.0, 0.0};
    alpha.support = {0};
    Tensor e = edu_representation(m.params, h, alpha, 0);  // position table is zero-initialized
    for (int c = 0; c < ds; ++c) CHECK(e[c] == h.at(0, c));
  }
  SECTION("zero states leave only the position embedding") {
    m.params.pos_table->value = Tensor::uniform({m.params.dims.max_edus, ds}, -1, 1, rng);
    AttentionVector alpha;
    alpha.scores = {0.5, 0.5};
    alpha.support = {0, 1};
    Tensor e = edu_representation(m.params, Tensor({2, ds}), alpha, 2);
    for (int c = 0; c < ds; ++c) CHECK(e[c] == m.params.pos_table->value.at(2, c));
  }
  SECTION("uniform attention over equal rows adds the shared row") {
    m.params.pos_table->value = Tensor::uniform({m.params.dims.max_edus, ds}, -1, 1, rng);
    Tensor equal({2, ds});
    for (int c = 0; c < ds; ++c) equal.at(0, c) = equal.at(1, c) = 0.4 * c;
    AttentionVector alpha;
    alpha.scores = {0.5, 0.5};
    alpha.support = {0, 1};
    Tensor e = edu_representation(m.params, equal, alpha, 1);
    for (int c = 0; c < ds; ++c)
      CHECK_THAT(e[c], Catch::Matchers::WithinAbs(m.params.pos_table->value.at(1, c) + equal.at(0, c), 1e-12));
  }
  SECTION("an EDU index beyond the position table is a configuration error") {
    AttentionVector alpha;
    alpha.scores = {1.0, 0.0};
    alpha.support = {0};
    CHECK_THROWS_AS(edu_representation(m.params, h, alpha, m.params.dims.max_edus), ConfigError);
  }
}

TEST_CASE("changing one aspect embedding leaves other aspects bit-identical") {
  std::vector<LabeledSample> samples = fixtures::synthetic_corpus(3);
  Model m = fixtures::synth_model(samples, 21);
  BatchPlan plan = make_batch_plan(samples, {0, 1, 2}, m.vocab, 2, 8);

  ForwardOptions opt;
  opt.training = false;
  opt.with_loss = false;
  std::mt19937_64 rng(0);

  ForwardResult before = forward_batch(m.params, plan, opt, rng);
  std::vector<double> alpha_before = before.alpha.val().v;
  std::vector<double> beta_before = before.beta.val().v;

  for (int c = 0; c < m.params.dims.aspect_dim; ++c) m.params.aspect_emb->value.at(1, c) += 0.37;
  ForwardResult after = forward_batch(m.params, plan, opt, rng);

  bool aspect1_changed = false;
  for (int e = 0; e < plan.n_edus(); ++e) {
    const int r0 = plan.row_of(e, 0), r1 = plan.row_of(e, 1);
    for (int t = 0; t < plan.max_len; ++t) {
      // Aspect 0 rows: identical to the bit.
      CHECK(after.alpha.val().at(r0, t) == alpha_before[static_cast<std::size_t>(r0) * plan.max_len + t]);
      if (after.alpha.val().at(r1, t) != alpha_before[static_cast<std::size_t>(r1) * plan.max_len + t])
        aspect1_changed = true;
    }
    CHECK(after.beta.val()[r0] == beta_before[static_cast<std::size_t>(r0)]);
  }
  CHECK(aspect1_changed);
}

TEST_CASE("gradients through the encoder chain match finite differences") {
  std::vector<LabeledSample> samples = fixtures::synthetic_corpus(2);
  ModelDims dims;
  dims.word_dim = 5;
  dims.aspect_dim = 5;
  dims.fused_dim = 4;
  dims.hidden_dim = 3;
  dims.max_edus = 4;
  Model m = fixtures::synth_model(samples, 77, dims);

  // Randomize biases and the position table too, for a generic point.
  std::mt19937_64 prng(31);
  std::uniform_real_distribution<double> dist(-0.4, 0.4);
  for (Parameter* p : m.params.parameters())
    for (double& x : p->value.v) x = dist(prng);

  BatchPlan plan = make_batch_plan(samples, {0, 1}, m.vocab, 2, 4);

  // Check through the loss the model actually trains on, restricted to the
  // parameters of the fusion -> GRU -> attention -> position chain.
  m.params.zero_grad();
  ForwardOptions lopt;
  lopt.training = false;
  lopt.with_loss = true;
  {
    std::mt19937_64 r(0);
    ForwardResult fr = forward_batch(m.params, plan, lopt, r);
    fr.graph->backward(fr.loss_total.id);
  }
  auto loss_fn = [&]() {
    std::mt19937_64 r2(0);
    return forward_batch(m.params, plan, lopt, r2).loss_total.val()[0];
  };
  std::vector<Parameter*> encoder_params;
  for (Parameter* p : m.params.parameters())
    if (p->name.rfind("gru.", 0) == 0 || p->name.rfind("fuse.", 0) == 0 || p->name == "word_embeddings" ||
        p->name == "aspect_embeddings" || p->name == "position_table" || p->name == "word_attention.w")
      encoder_params.push_back(p);
  double worst = 0.0;
  for (Parameter* p : encoder_params) {
    for (int i = 0; i < p->value.numel(); ++i) {
      const double saved = p->value[i], h = 1e-5;
      p->value[i] = saved + h;
      const double lp = loss_fn();
      p->value[i] = saved - h;
      const double lm = loss_fn();
      p->value[i] = saved;
      const double numeric = (lp - lm) / (2 * h);
      const double analytic = p->grad[i];
      const double denom = std::max(std::abs(numeric), std::abs(analytic));
      const double err = denom < 1e-8 ? std::abs(numeric - analytic) : std::abs(numeric - analytic) / denom;
      worst = std::max(worst, err);
    }
  }
  CHECK(worst <= 1e-4);
}
