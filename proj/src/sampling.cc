#include "verbknow/sampling.h"

#include <algorithm>
#include <fstream>
#include <limits>
#include <set>

#include "verbknow/common.h"

namespace verbknow {

uint64_t MixSeed(uint64_t seed, uint64_t stream) {
  uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

size_t UniformIndex(std::mt19937_64& rng, size_t n) {
  if (n <= 1) return 0;
  const uint64_t limit = std::numeric_limits<uint64_t>::max() -
                         std::numeric_limits<uint64_t>::max() % n;
  uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return static_cast<size_t>(x % n);
}

SamplingConfig SamplingConfig::ForK(int k, int batch_positives, uint64_t seed) {
  switch (k) {
    case 2: return FromScheme("cc", batch_positives, seed);
    case 3: return FromScheme("ccr", batch_positives, seed);
    case 4: return FromScheme("ccrr", batch_positives, seed);
  }
  throw ValidationError("k must be 2, 3 or 4 (got " + std::to_string(k) + ")");
}

SamplingConfig SamplingConfig::FromScheme(const std::string& scheme, int batch_positives,
                                          uint64_t seed) {
  SamplingConfig cfg;
  cfg.scheme.clear();
  for (char c : scheme) {
    if (c != 'c' && c != 'r') throw ValidationError("scheme symbols must be 'c' or 'r': " + scheme);
    cfg.scheme.push_back(static_cast<NegativeKind>(c));
  }
  cfg.k = static_cast<int>(cfg.scheme.size());
  cfg.batch_positives = batch_positives;
  cfg.seed = seed;
  cfg.Validate();
  return cfg;
}

std::string SamplingConfig::SchemeString() const {
  std::string s;
  for (auto kind : scheme) s.push_back(static_cast<char>(kind));
  return s;
}

void SamplingConfig::Validate() const {
  if (static_cast<int>(scheme.size()) != k) {
    throw ValidationError("scheme length " + std::to_string(scheme.size()) + " != k=" +
                          std::to_string(k));
  }
  const std::string s = SchemeString();
  if (!((k == 2 && s == "cc") || (k == 3 && s == "ccr") || (k == 4 && s == "ccrr"))) {
    throw ValidationError("unsupported negative sampling configuration k=" + std::to_string(k) +
                          " [" + s + "]; supported: k=2 [cc], k=3 [ccr], k=4 [ccrr]");
  }
  if (batch_positives < 1) throw ValidationError("batch_positives must be >= 1");
  if (batch_positives != 8 && batch_positives != 16) {
    LogWarning("batch_positives=" + std::to_string(batch_positives) +
               " is outside the explored grid {8, 16}");
  }
}

std::string ProvenanceName(Provenance p) {
  switch (p) {
    case Provenance::kPositive: return "positive";
    case Provenance::kControlled1: return "controlled-1";
    case Provenance::kControlled2: return "controlled-2";
    case Provenance::kRandom: return "random";
  }
  return "unknown";
}

size_t TrainingBatch::CountLabel(int label) const {
  return static_cast<size_t>(std::count_if(instances.begin(), instances.end(),
                                           [&](const BatchInstance& i) { return i.label == label; }));
}

std::vector<std::string> RankByCosine(const std::string& target,
                                      const std::vector<std::string>& candidates,
                                      const EmbeddingSpace& space) {
  auto t = space.IndexOf(target);
  if (!t) return {};
  const auto norm = space.normalized();
  std::vector<std::pair<double, const std::string*>> scored;
  scored.reserve(candidates.size());
  for (const auto& c : candidates) {
    auto idx = space.IndexOf(c);
    if (!idx) continue;
    scored.emplace_back(norm.row(*idx).dot(norm.row(*t)), &c);
  }
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return *a.second < *b.second;
  });
  std::vector<std::string> out;
  out.reserve(scored.size());
  for (const auto& s : scored) out.push_back(*s.second);
  return out;
}

std::optional<std::string> NearestInBatch(const std::string& target,
                                          const std::vector<std::string>& candidates,
                                          const EmbeddingSpace& space) {
  auto t = space.IndexOf(target);
  if (!t) return std::nullopt;
  const auto norm = space.normalized();
  const std::string* best = nullptr;
  double best_cos = 0.0;
  for (const auto& c : candidates) {
    auto idx = space.IndexOf(c);
    if (!idx) continue;
    const double cos = norm.row(*idx).dot(norm.row(*t));
    if (!best || cos > best_cos || (cos == best_cos && c < *best)) {
      best = &c;
      best_cos = cos;
    }
  }
  if (!best) return std::nullopt;
  return *best;
}

namespace {

constexpr int kMaxRandomAttempts = 100;

std::optional<VerbPair> DrawRandomNegative(const std::vector<std::string>& pool,
                                           const ConstraintSet& global, std::mt19937_64& rng) {
  if (pool.size() < 2) return std::nullopt;
  for (int attempt = 0; attempt < kMaxRandomAttempts; ++attempt) {
    const size_t i = UniformIndex(rng, pool.size());
    size_t j = UniformIndex(rng, pool.size() - 1);
    if (j >= i) ++j;
    VerbPair p(pool[i], pool[j]);
    if (!global.Contains(p)) return p;
  }
  return std::nullopt;
}

}  // namespace

TrainingBatch BuildTrainingBatch(const std::vector<VerbPair>& positives,
                                 const ConstraintSet& global_positives,
                                 const EmbeddingSpace& space, const SamplingConfig& cfg,
                                 std::mt19937_64& rng) {
  if (static_cast<int>(positives.size()) != cfg.batch_positives) {
    throw ValidationError("batch has " + std::to_string(positives.size()) +
                          " positives, expected B=" + std::to_string(cfg.batch_positives));
  }
  std::set<std::string> lemma_set;
  for (const auto& p : positives) {
    lemma_set.insert(p.first);
    lemma_set.insert(p.second);
  }
  if (lemma_set.size() < 3) {
    throw ValidationError("degenerate batch: controlled sampling needs >= 3 distinct lemmas, got " +
                          std::to_string(lemma_set.size()));
  }
  const std::vector<std::string> lemmas(lemma_set.begin(), lemma_set.end());

  TrainingBatch batch;
  batch.instances.reserve(static_cast<size_t>(cfg.BatchSize()));
  for (const auto& p : positives) batch.instances.push_back({p, 1, Provenance::kPositive});

  auto pool_for = [&](const VerbPair& p) {
    std::vector<std::string> pool;
    pool.reserve(lemmas.size());
    for (const auto& l : lemmas) {
      if (l != p.first && l != p.second) pool.push_back(l);
    }
    return pool;
  };

  auto add_random = [&](const std::vector<std::string>& pool) {
    if (auto neg = DrawRandomNegative(pool, global_positives, rng)) {
      batch.instances.push_back({*neg, 0, Provenance::kRandom});
    } else {
      ++batch.counters.skipped;
    }
  };

  int controlled_seen = 0;
  for (NegativeKind kind : cfg.scheme) {
    const bool controlled = kind == NegativeKind::kControlled;
    // First 'c' replaces w1 (nearest to w2); second 'c' replaces w2.
    const bool replace_first = controlled_seen == 0;
    if (controlled) ++controlled_seen;
    for (const auto& p : positives) {
      const auto pool = pool_for(p);
      if (!controlled) {
        add_random(pool);
        continue;
      }
      const std::string& anchor = replace_first ? p.second : p.first;
      const auto ranked = RankByCosine(anchor, pool, space);
      if (ranked.empty()) {
        ++batch.counters.oov_fallbacks;
        add_random(pool);
        continue;
      }
      bool placed = false;
      for (const auto& cand : ranked) {
        VerbPair neg(cand, anchor);
        if (global_positives.Contains(neg)) continue;
        batch.instances.push_back(
            {neg, 0, replace_first ? Provenance::kControlled1 : Provenance::kControlled2});
        placed = true;
        break;
      }
      if (!placed) {
        ++batch.counters.exhausted_fallbacks;
        add_random(pool);
      }
    }
  }
  if (batch.counters.skipped > 0) {
    LogWarning("negative sampling: " + std::to_string(batch.counters.skipped) +
               " negatives skipped after exhausting redraws");
  }
  return batch;
}

BatchStream::BatchStream(const ConstraintSet& train_positives,
                         const ConstraintSet& global_positives, const EmbeddingSpace& space,
                         SamplingConfig cfg)
    : positives_(train_positives.ToVector()),
      global_(global_positives),
      space_(space),
      cfg_(std::move(cfg)) {
  cfg_.Validate();
  if (positives_.size() < static_cast<size_t>(cfg_.batch_positives)) {
    throw ValidationError("need at least B=" + std::to_string(cfg_.batch_positives) +
                          " positive pairs, got " + std::to_string(positives_.size()));
  }
}

void BatchStream::StartEpoch(int epoch) {
  epoch_ = epoch;
  rng_.seed(MixSeed(cfg_.seed, static_cast<uint64_t>(epoch)));
  order_ = positives_;
  DeterministicShuffle(order_, rng_);
  cursor_ = 0;
}

TrainingBatch BatchStream::Next() {
  const size_t b = static_cast<size_t>(cfg_.batch_positives);
  if (epoch_ < 0 || cursor_ + b > order_.size()) StartEpoch(epoch_ + 1);
  std::vector<VerbPair> chunk(order_.begin() + static_cast<std::ptrdiff_t>(cursor_),
                              order_.begin() + static_cast<std::ptrdiff_t>(cursor_ + b));
  cursor_ += b;
  return BuildTrainingBatch(chunk, global_, space_, cfg_, rng_);
}

std::vector<TrainingBatch> BatchStream::Epoch(int epoch) {
  StartEpoch(epoch);
  std::vector<TrainingBatch> out;
  out.reserve(BatchesPerEpoch());
  for (size_t i = 0; i < BatchesPerEpoch(); ++i) out.push_back(Next());
  return out;
}

void WriteBatchTsv(const std::vector<TrainingBatch>& batches, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path);
  for (const auto& batch : batches) {
    for (const auto& inst : batch.instances) {
      out << inst.pair.first << '\t' << inst.pair.second << '\t' << inst.label << '\t'
          << ProvenanceName(inst.provenance) << '\n';
    }
  }
}

}  // namespace verbknow
