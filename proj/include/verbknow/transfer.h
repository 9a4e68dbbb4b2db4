#ifndef VERBKNOW_TRANSFER_H_
#define VERBKNOW_TRANSFER_H_

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "verbknow/embedding_space.h"
#include "verbknow/encoder.h"
#include "verbknow/lexicon.h"
#include "verbknow/nn.h"
#include "verbknow/sampling.h"
#include "verbknow/verb_training.h"

namespace verbknow {

// Source and target spaces sharing one (pre-aligned) coordinate system.
struct AlignedSpacePair {
  const EmbeddingSpace* source = nullptr;
  const EmbeddingSpace* target = nullptr;

  // Throws unless both are set, non-empty, of equal dimension and share an
  // alignment tag.
  void Validate() const;
};

struct TranslateOptions {
  bool csls = false;  // cross-domain similarity local scaling instead of cosine
  int csls_k = 10;
};

struct TranslationResult {
  ConstraintSet pairs;
  std::map<std::string, std::string> dictionary;  // source lemma -> target word
  size_t input_pairs = 0;
  size_t oov_dropped = 0;        // a member missing from the source space
  size_t collapsed_dropped = 0;  // both members map to one target word
  size_t duplicates_merged = 0;  // distinct source pairs mapping to one target pair
};

// Maps each verb to its nearest target word; ties go to the smaller word.
// Throws ValidationError("no translatable pairs") when nothing survives.
TranslationResult TranslatePairs(const ConstraintSet& constraints, const AlignedSpacePair& spaces,
                                 const TranslateOptions& options = {});

struct StmConfig {
  int slices = 5;    // K
  int hidden = 300;  // h_s
  AdamConfig adam{};
  int batch_size = 32;  // instances
  int max_epochs = 10;
  SamplingConfig sampling = SamplingConfig::ForK(2);
  double init_std = 1.0;  // on unit-normalized inputs
  uint64_t seed = 0;

  std::string Hash() const;
};

// Specialization tensor model: per slice k, u_k = tanh(A_k x_l) and
// v_k = tanh(B_k x_r); f_k = u_k . v_k; softmax(f W + b) over {neg, pos}.
// Inputs are unit-normalized word vectors.
class StmModel {
 public:
  enum class Forced { kNone, kAlwaysPositive, kAlwaysNegative };

  StmModel() = default;
  StmModel(int dim, const StmConfig& cfg);
  static StmModel Constant(bool positive);  // hard-wired filter

  RowVector Logits(const Vector& left, const Vector& right) const;
  double PositiveProbability(const Vector& left, const Vector& right) const;
  bool IsPositive(const Vector& left, const Vector& right) const;

  // Loss for one pair; grads scaled by `scale` when `backward`.
  double Loss(const Vector& left, const Vector& right, int label, double scale, bool backward);

  std::vector<Param*> Params();
  std::vector<const Param*> Params() const;
  int dim() const { return dim_; }
  int slices() const { return static_cast<int>(left_.size()); }
  int hidden() const { return hidden_; }
  Forced forced() const { return forced_; }

  void Save(const std::string& path) const;
  static StmModel Load(const std::string& path);

 private:
  int dim_ = 0;
  int hidden_ = 0;
  Forced forced_ = Forced::kNone;
  std::vector<Param> left_;   // A_k: h_s x d
  std::vector<Param> right_;  // B_k: h_s x d
  Linear classifier;          // K x 2
};

struct StmTrainResult {
  StmModel model;
  std::vector<double> epoch_accuracy;  // training accuracy after each epoch
  std::vector<double> epoch_loss;
  size_t oov_dropped = 0;
  size_t used_pairs = 0;
  double final_accuracy() const { return epoch_accuracy.empty() ? 0.0 : epoch_accuracy.back(); }
};

// Trains on positives from `constraints` (in `space`) plus [cc]-style
// negatives. Pairs with an OOV member are dropped and counted.
StmTrainResult TrainStm(const ConstraintSet& constraints, const EmbeddingSpace& space,
                        const StmConfig& cfg);

struct FilterResult {
  ConstraintSet kept;
  size_t input_pairs = 0;
  size_t oov_dropped = 0;
  double retention = 0.0;  // kept / input
};

// Keeps a pair iff the STM's argmax is positive.
FilterResult StmFilter(const ConstraintSet& noisy, const StmModel& model,
                       const EmbeddingSpace& target);

struct VtransConfig {
  TranslateOptions translate;
  StmConfig stm;
  VerbTrainConfig adapter;
  std::string output_dir;  // intermediate artifacts + manifest when non-empty
  // Replaces the trained STM, e.g. with StmModel::Constant.
  std::optional<StmModel> stm_override;
};

struct VtransResult {
  TranslationResult translation;
  StmTrainResult stm;
  FilterResult filtered;
  VerbTrainResult adapter;
};

// translate -> train STM -> filter -> train target-language verb adapter.
VtransResult RunVtrans(const ConstraintSet& source_constraints, const AlignedSpacePair& spaces,
                       const Encoder& target_encoder, const VtransConfig& cfg);

}  // namespace verbknow

#endif  // VERBKNOW_TRANSFER_H_
