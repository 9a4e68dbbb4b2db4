#ifndef VERBKNOW_VERB_TRAINING_H_
#define VERBKNOW_VERB_TRAINING_H_

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "verbknow/embedding_space.h"
#include "verbknow/encoder.h"
#include "verbknow/lexicon.h"
#include "verbknow/nn.h"
#include "verbknow/sampling.h"

namespace verbknow {

struct EncodedInput {
  std::vector<int> ids;
  std::vector<int> types;
  bool truncated = false;
};

// [CLS] first [SEP] second [SEP], segments 0/1. Underscores in multiword
// lemmas are read as spaces. Throws ValidationError on an empty lemma.
EncodedInput EncodePair(const std::string& first, const std::string& second,
                        const WordPieceTokenizer& tokenizer, int max_len);

// softmax(x_CLS W + b) over {negative, positive}.
struct PairClassifier {
  Linear proj;  // h x 2

  PairClassifier() = default;
  explicit PairClassifier(int hidden) : proj("head.pair", ParamGroup::kHead, hidden, 2) {}

  RowVector Logits(const Matrix& hidden_states) const;
  std::vector<Param*> Params() { return proj.Params(); }
  std::vector<const Param*> Params() const { return {&proj.weight, &proj.bias}; }
};

// (p_negative, p_positive) from the last-layer [CLS] state.
std::pair<double, double> ClassifyPair(const Encoder& encoder, const AdapterStack& stack,
                                       const PairClassifier& head, const VerbPair& pair);

// Mean of -log p(label) over instances.
double CrossEntropy(const Matrix& logits, const std::vector<int>& labels);

struct EarlyStopping {
  int patience = 2;                  // p in {2, 5}
  double validation_fraction = 0.05;
};

struct VerbTrainConfig {
  int epochs = 30;
  AdamConfig adam{};  // lr 1e-4; betas/eps at conventional defaults
  SamplingConfig sampling{};
  int reduction = 16;
  double adapter_init_std = 0.02;
  uint64_t seed = 0;
  std::optional<EarlyStopping> early_stopping;
  std::string checkpoint_dir;  // per-epoch checkpoints when non-empty
  std::string resource = "verb";
  std::string language = "en";

  // Hash over every field that influences training.
  std::string Hash() const;
};

struct EpochLog {
  int epoch = 0;
  double loss = 0.0;
  std::optional<double> val_loss;
};

struct VerbTrainResult {
  AdapterStack stack;
  PairClassifier head;
  std::vector<EpochLog> log;
  SamplingCounters counters;
  int epochs_run = 0;
};

// Trains a verb adapter (encoder frozen) on `constraints`. Negatives never
// collide with `global_positives` (defaults to `constraints`).
VerbTrainResult TrainVerbAdapter(const Encoder& encoder, const ConstraintSet& constraints,
                                 const EmbeddingSpace& space, const VerbTrainConfig& cfg,
                                 const ConstraintSet* global_positives = nullptr);

struct PairEvaluation {
  double accuracy = 0.0;
  double positive_accuracy = 0.0;
  double negative_accuracy = 0.0;
  size_t count = 0;
};
PairEvaluation EvaluatePairs(const Encoder& encoder, const AdapterStack& stack,
                             const PairClassifier& head, const std::vector<LabeledPair>& pairs);

void WriteTrainingLogCsv(const std::vector<EpochLog>& log, const std::string& path);

}  // namespace verbknow

#endif  // VERBKNOW_VERB_TRAINING_H_
