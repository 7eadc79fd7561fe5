#include <catch2/catch_amalgamated.hpp>

#include <fstream>
#include <sstream>

#include "edua/config.hpp"
#include "edua/data.hpp"
#include "fixtures.hpp"

using namespace edua;

namespace {

std::filesystem::path write_file(const std::string& name, const std::string& content) {
  std::filesystem::path p = fixtures::temp_dir("data") / name;
  std::ofstream out(p);
  out << content;
  return p;
}

const char* kMiniXml = R"(<?xml version="1.0" encoding="UTF-8"?>
<sentences>
  <sentence id="1">
    <text>The food was great but the service was awfully slow.</text>
    <aspectCategories>
      <aspectCategory category="food" polarity="positive"/>
      <aspectCategory category="service" polarity="negative"/>
    </aspectCategories>
  </sentence>
  <sentence id="2">
    <text>Nice place &amp; friendly staff.</text>
    <aspectCategories>
      <aspectCategory category="ambience" polarity="positive"/>
      <aspectCategory category="service" polarity="conflict"/>
    </aspectCategories>
  </sentence>
  <sentence id="3">
    <text>Mixed feelings about the menu.</text>
    <aspectCategories>
      <aspectCategory category="food" polarity="conflict"/>
    </aspectCategories>
  </sentence>
</sentences>
)";

}  // namespace

TEST_CASE("semeval xml loading filters conflicts") {
  std::filesystem::path p = write_file("mini.xml", kMiniXml);
  AspectSet aspects = fixtures::rest14_aspects();
  std::vector<LabeledSample> samples = load_semeval_xml(p.string(), aspects, "", 16);

  // Sentence 3 is conflict-only and must disappear; sentence 2 keeps only
  // its ambience label.
  REQUIRE(samples.size() == 2);
  CHECK(samples[0].labels.size() == 2);
  CHECK(samples[1].labels.size() == 1);
  CHECK(samples[1].labels[0].first == aspects.id_of("ambience"));
  CHECK(samples[1].sentence.text == "Nice place & friendly staff.");

  DatasetStats st = compute_stats(samples);
  CHECK(st.single == 1);
  CHECK(st.multiple == 1);
  CHECK(st.polarity[static_cast<int>(Polarity::positive)] == 2);
  CHECK(st.polarity[static_cast<int>(Polarity::negative)] == 1);
}

TEST_CASE("semeval xml rejects unknown aspects") {
  std::filesystem::path p = write_file("badaspect.xml", R"(<?xml version="1.0"?>
<sentences><sentence id="1"><text>Hello there.</text>
<aspectCategories><aspectCategory category="weather" polarity="positive"/></aspectCategories>
</sentence></sentences>)");
  CHECK_THROWS_WITH(load_semeval_xml(p.string(), fixtures::rest14_aspects()),
                    Catch::Matchers::ContainsSubstring("weather"));
}

TEST_CASE("fixture xml reproduces its split statistics") {
  std::filesystem::path p = fixtures::temp_dir("data") / "rest14_test.xml";
  fixtures::write_semeval_xml(p, fixtures::rest14_test_spec(), fixtures::rest14_aspects(), 14);
  std::vector<LabeledSample> samples = load_semeval_xml(p.string(), fixtures::rest14_aspects(), "", 16);
  DatasetStats st = compute_stats(samples);
  CHECK(st.single == 595);
  CHECK(st.multiple == 172);
  CHECK(st.polarity[0] == 222);
  CHECK(st.polarity[1] == 94);
  CHECK(st.polarity[2] == 657);
}

TEST_CASE("pretrained embedding loading") {
  std::filesystem::path p = fixtures::temp_dir("data") / "mini_glove.txt";
  fixtures::write_glove_file(p, {{"food", {0.1, 0.2, 0.3}}, {"bad", {-1, -2, -3}}, {"nope", {9, 9, 9}}});

  std::mt19937_64 rng(4);
  Vocab v = load_glove(p.string(), {"food", "great", "bad"}, 3, rng);

  SECTION("file rows copy exactly; padding row is zero") {
    const int food = v.id_of("food");
    CHECK(v.embeddings.at(food, 0) == 0.1);
    CHECK(v.embeddings.at(food, 1) == 0.2);
    CHECK(v.embeddings.at(food, 2) == 0.3);
    for (int c = 0; c < 3; ++c) CHECK(v.embeddings.at(Vocab::pad_id, c) == 0.0);
    CHECK(v.pretrained_hits == 2);
    CHECK_THAT(v.coverage(), Catch::Matchers::WithinAbs(2.0 / 3.0, 1e-12));
  }
  SECTION("out-of-file tokens are randomly initialized in (-.1, .1)") {
    const int great = v.id_of("great");
    bool nonzero = false;
    for (int c = 0; c < 3; ++c) {
      CHECK(std::abs(v.embeddings.at(great, c)) < 0.1);
      nonzero = nonzero || v.embeddings.at(great, c) != 0.0;
    }
    CHECK(nonzero);
  }
  SECTION("unknown token maps to unk id") { CHECK(v.id_of("zzz") == Vocab::unk_id); }
  SECTION("wrong dimension count names the line") {
    std::filesystem::path bad = fixtures::temp_dir("data") / "bad_glove.txt";
    fixtures::write_glove_file(bad, {{"food", {0.1, 0.2, 0.3}}, {"bad", {1, 2}}});
    std::mt19937_64 r2(4);
    CHECK_THROWS_WITH(load_glove(bad.string(), {"food", "bad"}, 3, r2),
                      Catch::Matchers::ContainsSubstring("line 2"));
  }
}

TEST_CASE("batching") {
  std::mt19937_64 rng(9);
  SECTION("fixed sizes with a short tail") {
    std::vector<std::vector<int>> batches = make_batches(100, 32, rng);
    REQUIRE(batches.size() == 4);
    CHECK(batches[0].size() == 32);
    CHECK(batches[1].size() == 32);
    CHECK(batches[2].size() == 32);
    CHECK(batches[3].size() == 4);
  }
  SECTION("same seed, same order") {
    std::mt19937_64 a(42), b(42), c(43);
    CHECK(make_batches(50, 8, a) == make_batches(50, 8, b));
    std::mt19937_64 a2(42);
    CHECK(make_batches(50, 8, a2) != make_batches(50, 8, c));
  }
  SECTION("every sample appears exactly once") {
    std::vector<std::vector<int>> batches = make_batches(37, 5, rng);
    std::vector<int> seen;
    for (const auto& b : batches) seen.insert(seen.end(), b.begin(), b.end());
    std::sort(seen.begin(), seen.end());
    std::vector<int> expect(37);
    std::iota(expect.begin(), expect.end(), 0);
    CHECK(seen == expect);
  }
}

TEST_CASE("batch plan pads and masks per EDU") {
  std::vector<LabeledSample> samples = fixtures::synthetic_corpus(4);
  Model model = fixtures::synth_model(samples, 1);
  BatchPlan plan = make_batch_plan(samples, {0, 1, 2, 3}, model.vocab, 2, 8);

  CHECK(plan.n_aspects == 2);
  CHECK(plan.n_rows() == plan.n_edus() * 2);
  REQUIRE(plan.max_len >= 1);

  const std::vector<int> lengths = plan.row_lengths();
  for (int t = 0; t < plan.max_len; ++t) {
    const std::vector<int> ids = plan.step_token_ids(t);
    const std::vector<double> mask = plan.step_mask(t);
    for (int e = 0; e < plan.n_edus(); ++e) {
      const bool valid = t < static_cast<int>(plan.edus[static_cast<std::size_t>(e)].token_ids.size());
      if (!valid) CHECK(ids[static_cast<std::size_t>(e)] == Vocab::pad_id);
      for (int k = 0; k < 2; ++k) {
        CHECK(mask[static_cast<std::size_t>(plan.row_of(e, k))] == (valid ? 1.0 : 0.0));
        CHECK(lengths[static_cast<std::size_t>(plan.row_of(e, k))] ==
              static_cast<int>(plan.edus[static_cast<std::size_t>(e)].token_ids.size()));
      }
    }
  }
}

TEST_CASE("train/val split") {
  std::vector<LabeledSample> samples;
  for (int i = 0; i < 2884; ++i) {
    LabeledSample s;
    s.sentence = heuristic_segment("sample number " + std::to_string(i) + " .");
    s.labels = {{0, Polarity::positive}};
    samples.push_back(std::move(s));
  }

  std::mt19937_64 rng(123);
  auto [train, val] = split_train_val(samples, 0.2, rng);
  CHECK(val.size() == 577);  // round(0.2 * 2884)
  CHECK(train.size() == 2307);

  SECTION("disjoint and complete") {
    std::set<std::string> seen;
    for (const auto& s : train) seen.insert(s.sentence.text);
    for (const auto& s : val) {
      CHECK(seen.find(s.sentence.text) == seen.end());
      seen.insert(s.sentence.text);
    }
    CHECK(seen.size() == samples.size());
  }
  SECTION("deterministic under the seed") {
    std::mt19937_64 r1(123), r2(123);
    auto [t1, v1] = split_train_val(samples, 0.2, r1);
    auto [t2, v2] = split_train_val(samples, 0.2, r2);
    REQUIRE(v1.size() == v2.size());
    for (std::size_t i = 0; i < v1.size(); ++i) CHECK(v1[i].sentence.text == v2[i].sentence.text);
  }
  SECTION("fraction bounds") {
    std::mt19937_64 r(1);
    CHECK_THROWS_AS(split_train_val(samples, 0.0, r), ConfigError);
    CHECK_THROWS_AS(split_train_val(samples, 1.0, r), ConfigError);
  }
}

TEST_CASE("samples round-trip through the internal jsonl") {
  AspectSet aspects = fixtures::rest14_aspects();
  std::filesystem::path p = fixtures::temp_dir("data") / "roundtrip.xml";
  fixtures::write_semeval_xml(p, {5, 3, 4, 3, 4, false, false}, aspects, 3);
  std::vector<LabeledSample> samples = load_semeval_xml(p.string(), aspects, "", 16);

  std::stringstream buf;
  write_samples_jsonl(buf, samples, aspects);
  std::vector<LabeledSample> back = read_samples_jsonl(buf, aspects);

  REQUIRE(back.size() == samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    CHECK(back[i].sentence.text == samples[i].sentence.text);
    CHECK(back[i].labels == samples[i].labels);
    REQUIRE(back[i].sentence.edus.size() == samples[i].sentence.edus.size());
    for (std::size_t j = 0; j < samples[i].sentence.edus.size(); ++j) {
      CHECK(back[i].sentence.edus[j].begin == samples[i].sentence.edus[j].begin);
      CHECK(back[i].sentence.edus[j].end == samples[i].sentence.edus[j].end);
      CHECK(back[i].sentence.edus[j].joined() == samples[i].sentence.edus[j].joined());
    }
  }
}

TEST_CASE("presegmented sidecar takes precedence over the heuristic") {
  AspectSet aspects = fixtures::rest14_aspects();
  const std::string text = "The food was great but the service was awfully slow.";
  std::filesystem::path xml = write_file("sidecar.xml", kMiniXml);

  // Sidecar marks the whole sentence as one EDU; the conjunction post-split
  // still applies, yielding exactly two.
  std::filesystem::path side = write_file("sidecar.jsonl",
                                          nlohmann::json{{"text", text},
                                                         {"edus", {{0, static_cast<int>(text.size())}}}}
                                                  .dump() +
                                              "\n");
  std::vector<LabeledSample> samples = load_semeval_xml(xml.string(), aspects, side.string(), 16);
  REQUIRE(samples.size() == 2);
  CHECK(samples[0].sentence.source == SegmentedSentence::Source::presegmented);
  CHECK(samples[0].sentence.edus.size() == 2);
  CHECK(samples[1].sentence.source == SegmentedSentence::Source::heuristic);
}
