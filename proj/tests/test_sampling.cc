#include <algorithm>
#include <cmath>
#include <set>

#include "doctest.h"
#include "test_util.h"
#include "verbknow/common.h"
#include "verbknow/embedding_space.h"
#include "verbknow/lexicon.h"
#include "verbknow/sampling.h"
#include "verbknow/synthetic.h"

using namespace verbknow;

namespace {

EmbeddingSpace Space2d(const std::vector<std::pair<std::string, std::pair<double, double>>>& words) {
  EmbeddingSpace s(2, "en");
  for (const auto& [w, v] : words) s.Add(w, Eigen::Vector2d(v.first, v.second));
  return s;
}

// Plain cosine from raw vectors.
double Cos(const EmbeddingSpace& s, const std::string& a, const std::string& b) {
  const Eigen::VectorXd x = s.Vector(a), y = s.Vector(b);
  return x.dot(y) / (x.norm() * y.norm());
}

struct SyntheticSetup {
  VerbLexicon lex = MakeSyntheticLexicon(SyntheticLexiconConfig{});
  ConstraintSet pairs = GeneratePositivePairs(lex);
  EmbeddingSpace space = MakeClusteredSpace(lex, ClusterSpaceConfig{});
};

}  // namespace

TEST_SUITE("sampling") {

TEST_CASE("nearest in batch follows cosine with lexicographic ties") {
  const EmbeddingSpace s = Space2d({{"b", {0.9, 0.1}}, {"c", {0, 1}}, {"d", {0.1, 0.9}},
                                    {"aa", {1, 1}}, {"zz", {2, 2}}, {"x", {-1, 0}}});
  CHECK(NearestInBatch("b", {"c", "d"}, s) == "d");
  CHECK(NearestInBatch("b", {"x"}, s) == "x");
  CHECK(NearestInBatch("b", {"zz", "aa"}, s) == "aa");
  CHECK_FALSE(NearestInBatch("b", {"missing"}, s).has_value());
  CHECK_FALSE(NearestInBatch("missing", {"c"}, s).has_value());
}

TEST_CASE("controlled negatives of the four-word example") {
  const EmbeddingSpace s = Space2d({{"a", {1, 0}}, {"b", {0.9, 0.1}}, {"c", {0, 1}}, {"d", {0.1, 0.9}}});
  ConstraintSet global("t", "en");
  global.Insert(VerbPair("a", "b"));
  global.Insert(VerbPair("c", "d"));
  std::mt19937_64 rng(1);
  const TrainingBatch batch = BuildTrainingBatch({VerbPair("a", "b"), VerbPair("c", "d")}, global, s,
                                                 SamplingConfig::FromScheme("cc", 2), rng);
  std::set<VerbPair> c1, c2;
  for (const auto& inst : batch.instances) {
    if (inst.provenance == Provenance::kControlled1) c1.insert(inst.pair);
    if (inst.provenance == Provenance::kControlled2) c2.insert(inst.pair);
  }
  CHECK(c1.count(VerbPair("d", "b")) == 1);
  CHECK(c2.count(VerbPair("a", "d")) == 1);
  CHECK(batch.CountLabel(1) == 2);
}

TEST_CASE("batch sizes follow B(1+k)") {
  SyntheticSetup s;
  std::vector<VerbPair> all = s.pairs.ToVector();
  std::mt19937_64 shuffle(3);
  DeterministicShuffle(all, shuffle);
  const std::vector<VerbPair> batch16(all.begin(), all.begin() + 16);
  for (auto [scheme, size] : std::vector<std::pair<std::string, size_t>>{{"ccr", 64}, {"cc", 48}, {"ccrr", 80}}) {
    std::mt19937_64 rng(5);
    const TrainingBatch b = BuildTrainingBatch(batch16, s.pairs, s.space, SamplingConfig::FromScheme(scheme, 16), rng);
    CHECK(b.instances.size() == size);
    CHECK(b.CountLabel(1) == 16);
  }
}

TEST_CASE("batches never contain global positives and controlled negatives are argmax") {
  SyntheticSetup s;
  BatchStream stream(s.pairs, s.pairs, s.space, SamplingConfig::ForK(3, 16, 9));
  for (int n = 0; n < 100; ++n) {
    const TrainingBatch b = stream.Next();
    REQUIRE(b.instances.size() == 64);
    std::vector<VerbPair> positives;
    std::set<std::string> lemmas;
    for (size_t i = 0; i < 16; ++i) {
      REQUIRE(b.instances[i].label == 1);
      positives.push_back(b.instances[i].pair);
      lemmas.insert(b.instances[i].pair.first);
      lemmas.insert(b.instances[i].pair.second);
    }
    for (size_t i = 16; i < 64; ++i) {
      CHECK(b.instances[i].label == 0);
      CHECK_FALSE(s.pairs.Contains(b.instances[i].pair));
    }
    // Slot 0 replaces w1 (anchor w2), slot 1 replaces w2 (anchor w1).
    for (int slot = 0; slot < 2; ++slot) {
      for (size_t i = 0; i < 16; ++i) {
        const BatchInstance& inst = b.instances[16 + static_cast<size_t>(slot) * 16 + i];
        const VerbPair& pos = positives[i];
        const std::string& anchor = slot == 0 ? pos.second : pos.first;
        const std::string chosen = inst.pair.first == anchor ? inst.pair.second : inst.pair.first;
        CHECK(inst.provenance == (slot == 0 ? Provenance::kControlled1 : Provenance::kControlled2));
        CHECK((chosen != pos.first && chosen != pos.second));
        for (const auto& v : lemmas) {
          if (v == pos.first || v == pos.second || s.pairs.Contains(v, anchor)) continue;
          CHECK(Cos(s.space, chosen, anchor) >= Cos(s.space, v, anchor) - 1e-12);
        }
      }
    }
  }
}

TEST_CASE("batch stream drops the remainder and is seeded") {
  SyntheticLexiconConfig cfg;
  cfg.classes = 2;
  cfg.verbs_per_class = 7;  // 42 pairs
  const VerbLexicon lex = MakeSyntheticLexicon(cfg);
  ConstraintSet all = GeneratePositivePairs(lex);
  ConstraintSet pairs("s", "en");
  for (const auto& p : all.pairs()) {
    if (pairs.size() < 33) pairs.Insert(p);
  }
  const EmbeddingSpace space = MakeClusteredSpace(lex, ClusterSpaceConfig{});
  BatchStream a(pairs, all, space, SamplingConfig::FromScheme("cc", 16, 4));
  CHECK(a.BatchesPerEpoch() == 2);
  CHECK(a.DroppedPerEpoch() == 1);

  auto dump = [&](uint64_t seed) {
    BatchStream st(pairs, all, space, SamplingConfig::FromScheme("ccr", 16, seed));
    std::vector<VerbPair> out;
    for (int e = 0; e < 2; ++e) {
      for (const auto& b : st.Epoch(e)) {
        for (const auto& inst : b.instances) out.push_back(inst.pair);
      }
    }
    return out;
  };
  CHECK(dump(4) == dump(4));
  CHECK(dump(4) != dump(5));
}

TEST_CASE("degenerate batches and bad configs are rejected") {
  const EmbeddingSpace s = Space2d({{"a", {1, 0}}, {"b", {0, 1}}});
  ConstraintSet global("t", "en");
  global.Insert(VerbPair("a", "b"));
  std::mt19937_64 rng(1);
  CHECK_THROWS_AS(BuildTrainingBatch({VerbPair("a", "b")}, global, s, SamplingConfig::ForK(3, 1), rng),
                  ValidationError);
  CHECK_THROWS_AS(BuildTrainingBatch({VerbPair("a", "b")}, global, s, SamplingConfig::ForK(3, 2), rng),
                  ValidationError);
  CHECK_THROWS_AS(SamplingConfig::FromScheme("cx"), ValidationError);
  CHECK_THROWS_AS(SamplingConfig::ForK(5), ValidationError);
  CHECK(SamplingConfig::ForK(4).SchemeString() == "ccrr");
  CHECK(SamplingConfig{}.BatchSize() == 64);
}

TEST_CASE("out-of-space lemmas fall back to random negatives") {
  const EmbeddingSpace s = Space2d({{"a", {1, 0}}, {"b", {0.9, 0.1}}, {"c", {0, 1}}});
  ConstraintSet global("t", "en");
  global.Insert(VerbPair("a", "b"));
  global.Insert(VerbPair("c", "oov"));
  std::mt19937_64 rng(2);
  const TrainingBatch b =
      BuildTrainingBatch(global.ToVector(), global, s, SamplingConfig::FromScheme("cc", 2), rng);
  CHECK(b.counters.oov_fallbacks >= 1);
  for (const auto& inst : b.instances) {
    if (inst.label == 0) CHECK_FALSE(global.Contains(inst.pair));
  }
}

TEST_CASE("embedding text round-trips and skips zero or duplicate rows") {
  testing::TempDir dir;
  testing::WriteFile(dir.File("v.vec"), "4 2\nwalk 1 0\nnil 0 0\nwalk 0 1\nrun 0.5 0.25\n");
  const EmbeddingSpace s = ReadEmbeddingText(dir.File("v.vec"), "en");
  CHECK(s.size() == 2);
  CHECK(s.Vector("walk")[0] == 1.0);
  WriteEmbeddingText(s, dir.File("w.vec"));
  const EmbeddingSpace t = ReadEmbeddingText(dir.File("w.vec"), "en");
  CHECK(t.ContentHash() == s.ContentHash());
  testing::WriteFile(dir.File("bad.vec"), "1 3\nwalk 1 0\n");
  CHECK_THROWS_AS(ReadEmbeddingText(dir.File("bad.vec"), "en"), ParseError);
  EmbeddingSpace e(2, "en");
  CHECK_THROWS_AS(e.Add("z", Eigen::Vector2d(0, 0)), ValidationError);
}

TEST_CASE("batch dump has four columns") {
  testing::TempDir dir;
  SyntheticSetup s;
  BatchStream stream(s.pairs, s.pairs, s.space, SamplingConfig::ForK(3, 16, 1));
  WriteBatchTsv({stream.Next()}, dir.File("b.tsv"));
  const std::string text = testing::ReadFile(dir.File("b.tsv"));
  const std::string first = text.substr(0, text.find('\n'));
  CHECK(std::count(first.begin(), first.end(), '\t') == 3);
  CHECK(first.find("positive") != std::string::npos);
}

}  // TEST_SUITE
