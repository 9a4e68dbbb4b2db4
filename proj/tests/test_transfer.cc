#include <map>

#include "doctest.h"
#include "test_util.h"
#include "verbknow/common.h"
#include "verbknow/synthetic.h"
#include "verbknow/transfer.h"

using namespace verbknow;

namespace {

struct Bilingual {
  VerbLexicon en;
  ConstraintSet pairs;
  EmbeddingSpace source;
  EmbeddingSpace target;

  Bilingual() {
    SyntheticLexiconConfig lc;
    lc.classes = 7;
    lc.verbs_per_class = 8;
    en = MakeSyntheticLexicon(lc);
    pairs = GeneratePositivePairs(en);
    source = MakeClusteredSpace(en, ClusterSpaceConfig{});
    target = MakeAlignedTargetSpace(source, "_es", 0.05, 9, "es");
  }
};

StmConfig FastStm() {
  StmConfig c;
  c.slices = 5;
  c.hidden = 32;
  c.adam.learning_rate = 3e-3;
  c.max_epochs = 30;
  c.seed = 3;
  return c;
}

// Class of the nearest class centroid, computed from raw vectors.
std::string NearestCentroid(const std::map<std::string, Eigen::VectorXd>& centroids, const Eigen::VectorXd& x) {
  std::string best;
  double best_cos = -2;
  for (const auto& [cls, c] : centroids) {
    const double cos = c.dot(x) / (c.norm() * x.norm());
    if (cos > best_cos) {
      best_cos = cos;
      best = cls;
    }
  }
  return best;
}

}  // namespace

TEST_SUITE("transfer") {

TEST_CASE("identity spaces translate every pair onto itself") {
  Bilingual b;
  const TranslationResult r = TranslatePairs(b.pairs, AlignedSpacePair{&b.source, &b.source});
  CHECK(r.pairs == b.pairs);
  CHECK(r.oov_dropped == 0);
  CHECK(r.collapsed_dropped == 0);
  for (const auto& [src, tgt] : r.dictionary) CHECK(src == tgt);
}

TEST_CASE("aligned toy spaces translate through the dictionary") {
  EmbeddingSpace en(2, "en", "toy"), es(2, "es", "toy");
  en.Add("walk", Eigen::Vector2d(1, 0));
  en.Add("march", Eigen::Vector2d(0.9, 0.2));
  en.Add("hit", Eigen::Vector2d(0, 1));
  es.Add("caminar", Eigen::Vector2d(1, 0.05));
  es.Add("marchar", Eigen::Vector2d(0.8, 0.25));
  es.Add("golpear", Eigen::Vector2d(0.05, 1));
  ConstraintSet c("vn", "en");
  c.Insert(VerbPair("walk", "march"));
  c.Insert(VerbPair("walk", "hit"));
  c.Insert(VerbPair("walk", "fly"));
  const TranslationResult r = TranslatePairs(c, AlignedSpacePair{&en, &es});
  CHECK(r.dictionary.at("walk") == "caminar");
  CHECK(r.dictionary.at("march") == "marchar");
  CHECK(r.pairs.Contains("caminar", "marchar"));
  CHECK(r.pairs.Contains("caminar", "golpear"));
  CHECK(r.oov_dropped == 1);
  const TranslationResult csls = TranslatePairs(c, AlignedSpacePair{&en, &es}, TranslateOptions{true, 1});
  CHECK(csls.pairs.size() == 2);

  EmbeddingSpace other(2, "es", "other");
  other.Add("x", Eigen::Vector2d(1, 0));
  CHECK_THROWS_AS(TranslatePairs(c, AlignedSpacePair{&en, &other}), ValidationError);
  ConstraintSet oov("vn", "en");
  oov.Insert(VerbPair("fly", "swim"));
  CHECK_THROWS_AS(TranslatePairs(oov, AlignedSpacePair{&en, &es}), ValidationError);
}

TEST_CASE("stm separates same-class pairs like a nearest-centroid oracle") {
  Bilingual b;
  const StmTrainResult t = TrainStm(b.pairs, b.source, FastStm());
  std::map<std::string, Eigen::VectorXd> centroids;
  for (const auto& [cls, members] : b.en.classes()) {
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(b.source.dim());
    for (const auto& m : members) sum += b.source.Vector(m);
    centroids[cls] = sum / static_cast<double>(members.size());
  }
  const auto& vocab = b.source.vocabulary();
  size_t agree = 0, total = 0;
  for (size_t i = 0; i < vocab.size(); ++i) {
    for (size_t j = i + 1; j < vocab.size(); ++j) {
      const Eigen::VectorXd x = b.source.Vector(vocab[i]), y = b.source.Vector(vocab[j]);
      const bool oracle = NearestCentroid(centroids, x) == NearestCentroid(centroids, y);
      const bool stm = t.model.IsPositive(x.normalized(), y.normalized());
      agree += oracle == stm;
      ++total;
    }
  }
  MESSAGE("stm/oracle agreement " << static_cast<double>(agree) / static_cast<double>(total));
  CHECK(static_cast<double>(agree) / static_cast<double>(total) >= 0.95);
}

TEST_CASE("constant filters keep everything or nothing") {
  Bilingual b;
  const FilterResult all = StmFilter(b.pairs, StmModel::Constant(true), b.source);
  CHECK(all.kept == b.pairs);
  CHECK(all.retention == 1.0);
  const FilterResult none = StmFilter(b.pairs, StmModel::Constant(false), b.source);
  CHECK(none.kept.empty());
  CHECK(none.retention == 0.0);
}

TEST_CASE("self-transfer retains constraints and planted noise is filtered") {
  Bilingual b;
  const StmModel stm = TrainStm(b.pairs, b.source, FastStm()).model;

  const TranslationResult self = TranslatePairs(b.pairs, AlignedSpacePair{&b.source, &b.source});
  const FilterResult kept = StmFilter(self.pairs, stm, b.source);
  CHECK(kept.retention >= 0.9);

  const TranslationResult tr = TranslatePairs(b.pairs, AlignedSpacePair{&b.source, &b.target});
  ConstraintSet noisy = tr.pairs;
  std::set<VerbPair> planted;
  std::mt19937_64 rng(12);
  const auto& words = b.target.vocabulary();
  while (planted.size() < tr.pairs.size() / 2) {
    const std::string& x = words[UniformIndex(rng, words.size())];
    const std::string& y = words[UniformIndex(rng, words.size())];
    const std::string sx = x.substr(0, x.size() - 3), sy = y.substr(0, y.size() - 3);
    if (x == y || b.en.ShareClass(sx, sy)) continue;
    if (noisy.Insert(VerbPair(x, y))) planted.insert(VerbPair(x, y));
  }
  const FilterResult f = StmFilter(noisy, stm, b.target);
  size_t true_kept = 0;
  for (const auto& p : f.kept.pairs()) true_kept += planted.count(p) == 0;
  const double precision = static_cast<double>(true_kept) / static_cast<double>(f.kept.size());
  MESSAGE("planted-noise precision " << precision << ", kept " << f.kept.size());
  CHECK(precision >= 0.9);
  CHECK(static_cast<double>(true_kept) / static_cast<double>(tr.pairs.size()) >= 0.9);
}

TEST_CASE("stm archives round-trip") {
  Bilingual b;
  StmConfig cfg = FastStm();
  cfg.max_epochs = 1;
  const StmModel m = TrainStm(b.pairs, b.source, cfg).model;
  testing::TempDir dir;
  m.Save(dir.File("stm.bin"));
  const StmModel back = StmModel::Load(dir.File("stm.bin"));
  const Eigen::VectorXd x = b.source.VectorAt(0).normalized(), y = b.source.VectorAt(5).normalized();
  CHECK(back.PositiveProbability(x, y) == m.PositiveProbability(x, y));
  StmModel::Constant(true).Save(dir.File("c.bin"));
  CHECK(StmModel::Load(dir.File("c.bin")).forced() == StmModel::Forced::kAlwaysPositive);
}

}  // TEST_SUITE
