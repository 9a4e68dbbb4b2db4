#ifndef VERBKNOW_EVENT_MODEL_H_
#define VERBKNOW_EVENT_MODEL_H_

#include <optional>
#include <string>
#include <vector>

#include "verbknow/crf.h"
#include "verbknow/encoder.h"
#include "verbknow/event_data.h"
#include "verbknow/metrics.h"
#include "verbknow/verb_training.h"

namespace verbknow {

enum class AdapterSource { kFn, kVn, kRandom, kNone };
std::string AdapterSourceName(AdapterSource s);
AdapterSource ParseAdapterSource(const std::string& name);
// Column label used in reports: baseline, +Random, +FN, +VN.
std::string ConditionName(AdapterSource s);

struct FinetuneConfig {
  Regime regime = Regime::kTa;
  AdapterSource adapter_source = AdapterSource::kNone;
  int epochs = 10;
  int batch_size = 32;  // sentences
  AdamConfig adam{};
  int task_reduction = 16;   // halved for 2TA
  int random_reduction = 16; // size of the +Random adapter
  double adapter_init_std = 0.02;
  double head_init_std = 0.02;
  bool bio_mask = true;
  uint64_t seed = 0;
  // Extra epochs (1-based) after which `eval` is scored; the last epoch always is.
  std::vector<int> eval_at_epochs;

  int EffectiveTaskReduction() const;
  std::string Hash() const;
};

// Warns (never throws) when cfg leaves the default setting or grid.
void CheckFinetuneGrid(const FinetuneConfig& cfg, EventTask task);

// Word-aligned WordPiece encoding of one sentence.
struct EncodedSentence {
  std::vector<int> ids;
  std::vector<int> word_starts;  // first subword index per word, -1 when truncated away
  bool truncated = false;
};
EncodedSentence EncodeSentence(const std::vector<std::string>& tokens,
                               const WordPieceTokenizer& tokenizer, int max_len);

struct SentencePrediction {
  std::vector<std::string> labels;
  std::vector<double> probabilities;  // of the predicted label
  std::vector<std::vector<std::string>> argument_tags;
};

class EventModel {
 public:
  EventModel(Encoder encoder, AdapterStack stack, LabelSchema schema, EventTask task,
             const FinetuneConfig& cfg);

  EventTask task() const { return task_; }
  const LabelSchema& schema() const { return schema_; }
  const std::vector<std::string>& trigger_tags() const { return trigger_tags_; }
  const std::vector<std::string>& argument_tags() const { return arg_tags_; }

  // Per-word label distribution from the token head (rows sum to one).
  Matrix TokenDistribution(const std::vector<std::string>& tokens) const;
  SentencePrediction Predict(const std::vector<std::string>& tokens) const;
  EventDataset PredictDataset(const EventDataset& data,
                              std::vector<std::vector<double>>* probabilities = nullptr) const;

  // Loss on one sentence; accumulates grads scaled by `scale` when `backward`.
  double SentenceLoss(const Sentence& s, double scale, bool backward, bool train_encoder);

  std::vector<Param*> HeadParams();
  std::vector<Param*> TrainableParams(Regime regime);

  Encoder encoder;
  AdapterStack stack;
  Linear token_head;  // TempEval softmax logits or ACE trigger emissions
  CrfParams trigger_crf;
  Linear arg_head;  // [h_t; h_trigger; in-trigger] -> argument emissions
  CrfParams arg_crf;

 private:
  int TagIndex(const std::vector<std::string>& tags, const std::string& tag) const;
  Matrix WordStates(const EncodedSentence& enc, const Matrix& hidden) const;
  Matrix ArgumentFeatures(const Matrix& words, const Span& trigger) const;

  LabelSchema schema_;
  EventTask task_;
  std::vector<std::string> trigger_tags_;
  std::vector<std::string> arg_tags_;
};

// Stack for a regime/source combination. `verb_adapter` is required for
// FN/VN and ignored otherwise.
AdapterStack BuildDownstreamStack(const Encoder& encoder, const AdapterStack* verb_adapter,
                                  const FinetuneConfig& cfg);

struct FinetuneResult {
  std::optional<EventModel> model;
  std::vector<EpochLog> log;
  // (epoch, scores on the evaluation split); empty without one.
  std::vector<std::pair<int, std::vector<std::pair<std::string, Prf>>>> epoch_scores;
  const std::vector<std::pair<std::string, Prf>>& FinalScores() const;
};

// Trains heads (+ adapters/encoder per regime) and scores `eval` when given.
FinetuneResult FinetuneEventModel(const Encoder& encoder, const AdapterStack* verb_adapter,
                                  const EventDataset& train, const EventDataset* eval,
                                  const FinetuneConfig& cfg);

// TempEval: {T-ident&class}. ACE: the four subtasks.
std::vector<std::pair<std::string, Prf>> ScoreEventPredictions(const EventDataset& pred,
                                                               const EventDataset& gold);
std::vector<std::string> SubtaskNames(EventTask task);

struct GridSelection {
  double learning_rate = 0.0;
  int epochs = 0;
  std::string rule;  // "dev-f1" or "train-loss"
  double criterion = 0.0;
};

// ACE grid over learning rates x epoch counts. Each learning rate is trained
// once to the largest epoch count and read out at the smaller ones.
GridSelection AceGridSearch(const Encoder& encoder, const AdapterStack* verb_adapter,
                            const EventDataset& train, const EventDataset* dev,
                            const FinetuneConfig& base, const std::vector<double>& learning_rates,
                            const std::vector<int>& epochs);

void WritePredictionsConll(const EventDataset& pred,
                           const std::vector<std::vector<double>>& probabilities,
                           const std::string& path);
// Reads a WritePredictionsConll file: the trailing probability column is
// split off into `probabilities` when given.
EventDataset ReadPredictionsConll(const std::string& path, EventTask task,
                                  const std::string& language,
                                  std::vector<std::vector<double>>* probabilities = nullptr);

}  // namespace verbknow

#endif  // VERBKNOW_EVENT_MODEL_H_
