#ifndef VERBKNOW_SAMPLING_H_
#define VERBKNOW_SAMPLING_H_

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "verbknow/embedding_space.h"
#include "verbknow/lexicon.h"

namespace verbknow {

// Deterministic seed derivation (SplitMix64 finalizer).
uint64_t MixSeed(uint64_t seed, uint64_t stream);

// Uniform integer in [0, n) without relying on implementation-defined
// std::uniform_int_distribution.
size_t UniformIndex(std::mt19937_64& rng, size_t n);

template <typename T>
void DeterministicShuffle(std::vector<T>& v, std::mt19937_64& rng) {
  for (size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[UniformIndex(rng, i)]);
}

enum class NegativeKind : char { kControlled = 'c', kRandom = 'r' };

struct SamplingConfig {
  int k = 3;
  std::vector<NegativeKind> scheme{NegativeKind::kControlled, NegativeKind::kControlled,
                                   NegativeKind::kRandom};
  int batch_positives = 16;
  uint64_t seed = 0;

  // k=2 [cc], k=3 [ccr], k=4 [ccrr].
  static SamplingConfig ForK(int k, int batch_positives = 16, uint64_t seed = 0);
  // Parses "ccr" etc.; k is taken from the string length.
  static SamplingConfig FromScheme(const std::string& scheme, int batch_positives = 16,
                                   uint64_t seed = 0);

  std::string SchemeString() const;
  int BatchSize() const { return batch_positives * (1 + k); }
  // Throws ValidationError outside the supported grid.
  void Validate() const;
};

enum class Provenance { kPositive, kControlled1, kControlled2, kRandom };
std::string ProvenanceName(Provenance p);

struct BatchInstance {
  VerbPair pair;
  int label = 1;
  Provenance provenance = Provenance::kPositive;
};

struct SamplingCounters {
  size_t oov_fallbacks = 0;         // controlled slot replaced by random (OOV or empty pool)
  size_t exhausted_fallbacks = 0;   // every controlled candidate was a global positive
  size_t skipped = 0;               // random redraws exhausted; instance dropped

  SamplingCounters& operator+=(const SamplingCounters& o) {
    oov_fallbacks += o.oov_fallbacks;
    exhausted_fallbacks += o.exhausted_fallbacks;
    skipped += o.skipped;
    return *this;
  }
};

struct TrainingBatch {
  std::vector<BatchInstance> instances;  // positives first, then per scheme slot
  SamplingCounters counters;

  size_t CountLabel(int label) const;
};

// Cosine-nearest candidate to `target`; ties go to the lexicographically
// smaller lemma. Candidates absent from `space` are ignored. Returns nullopt
// when the target or every candidate is missing (caller falls back to a
// random negative).
std::optional<std::string> NearestInBatch(const std::string& target,
                                          const std::vector<std::string>& candidates,
                                          const EmbeddingSpace& space);

// All in-space candidates ordered by descending cosine to `target`, ties by
// lemma. Empty when `target` is out of vocabulary.
std::vector<std::string> RankByCosine(const std::string& target,
                                      const std::vector<std::string>& candidates,
                                      const EmbeddingSpace& space);

TrainingBatch BuildTrainingBatch(const std::vector<VerbPair>& positives,
                                 const ConstraintSet& global_positives,
                                 const EmbeddingSpace& space, const SamplingConfig& cfg,
                                 std::mt19937_64& rng);

// Epoch-wise iterator over batches: each epoch is a seeded permutation of the
// positives cut into batches of B (short remainder dropped).
class BatchStream {
 public:
  BatchStream(const ConstraintSet& train_positives, const ConstraintSet& global_positives,
              const EmbeddingSpace& space, SamplingConfig cfg);

  size_t BatchesPerEpoch() const { return positives_.size() / cfg_.batch_positives; }
  size_t DroppedPerEpoch() const { return positives_.size() % cfg_.batch_positives; }

  // Returns the next batch, moving on to the next epoch as needed.
  TrainingBatch Next();
  std::vector<TrainingBatch> Epoch(int epoch);
  int epoch() const { return epoch_; }

 private:
  void StartEpoch(int epoch);

  std::vector<VerbPair> positives_;
  const ConstraintSet& global_;
  const EmbeddingSpace& space_;
  SamplingConfig cfg_;
  std::vector<VerbPair> order_;
  std::mt19937_64 rng_;
  size_t cursor_ = 0;
  int epoch_ = -1;
};

// Debug dump: verb1<TAB>verb2<TAB>label<TAB>provenance.
void WriteBatchTsv(const std::vector<TrainingBatch>& batches, const std::string& path);

}  // namespace verbknow

#endif  // VERBKNOW_SAMPLING_H_
