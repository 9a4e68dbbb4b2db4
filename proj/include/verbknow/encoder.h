#ifndef VERBKNOW_ENCODER_H_
#define VERBKNOW_ENCODER_H_

#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "verbknow/embedding_space.h"
#include "verbknow/nn.h"
#include "verbknow/tokenizer.h"

namespace verbknow {

enum class EncoderFlavor { kTinyDesk, kPretrainedExternal };
std::string EncoderFlavorName(EncoderFlavor f);
EncoderFlavor ParseEncoderFlavor(const std::string& name);

// Tiny-desk layout constants.
inline constexpr double kTinyDeskClsMarker = 1.0;
inline constexpr double kTinyDeskSelfAttention = 1.0;
inline constexpr double kTinyDeskPoolGain = 2.0;
inline constexpr double kTinyDeskFfnScale = 0.1;

struct EncoderConfig {
  int num_layers = 2;
  int hidden = 32;
  int heads = 2;
  int intermediate = 128;
  int max_len = 128;  // T
  int type_vocab = 2;
  double layer_norm_eps = 1e-12;
  double init_std = 0.02;
  EncoderFlavor flavor = EncoderFlavor::kTinyDesk;

  void Validate() const;
};

// Bottleneck adapter: U(GeLU(D(h))) + r.
struct AdapterParams {
  int layer = 0;
  int bottleneck = 0;  // m
  Linear down;         // h x m
  Linear up;           // m x h

  AdapterParams() = default;
  AdapterParams(const std::string& prefix, ParamGroup group, int layer, int hidden, int bottleneck);

  ParamGroup group() const { return down.weight.group; }
  std::vector<Param*> Params() { return {&down.weight, &down.bias, &up.weight, &up.bias}; }
  std::vector<const Param*> Params() const {
    return {&down.weight, &down.bias, &up.weight, &up.bias};
  }
  Eigen::Index ParamCount() const;
};

// Position-wise adapter; throws ValidationError on shape mismatch.
Matrix AdapterForward(const Matrix& hidden, const Matrix& residual, const AdapterParams& params);

struct AdapterGrads {
  Matrix d_hidden;
  Matrix d_residual;
};
// Backward through AdapterForward; accumulates parameter grads when asked.
AdapterGrads AdapterBackward(const Matrix& hidden, const Matrix& d_out, AdapterParams& params,
                             bool accumulate);

struct LayerAdapters {
  std::optional<AdapterParams> verb;
  std::optional<AdapterParams> task;
};

enum class AdapterInit { kNearZeroUp, kRandom };
enum class AdapterPlacement { kAfterFfn };

// Per-layer adapter slots plus parameter-group freezing. When both adapters
// are present the task adapter consumes the verb adapter's output.
struct AdapterStack {
  std::vector<LayerAdapters> layers;
  FreezeFlags freeze;
  int verb_reduction = 0;  // 0 when absent
  int task_reduction = 0;
  std::string verb_source;  // "vn", "fn", "random", ... (metadata only)

  bool HasVerb() const;
  bool HasTask() const;
  std::vector<Param*> Params(ParamGroup group);
  std::vector<const Param*> Params(ParamGroup group) const;
};

class TransformerLayer {
 public:
  TransformerLayer() = default;
  TransformerLayer(const std::string& prefix, const EncoderConfig& cfg);

  Linear query, key, value, attn_out;
  LayerNorm attn_norm;
  Linear ffn_in, ffn_out;
  LayerNorm out_norm;
  int heads = 1;

  std::vector<Param*> Params();
};

struct AdapterCache {
  LayerNormCache norm;
  Matrix hidden;      // LN(stream + a): adapter input
  Matrix pre_gelu;    // D h + b
};

struct LayerCache {
  Matrix input;
  Matrix q, k, v;
  std::vector<Matrix> probs;  // per head, n x n
  Matrix context;             // concatenated heads
  LayerNormCache attn_norm;
  Matrix attn_normed;  // a
  Matrix ffn_pre;      // pre-GeLU
  Matrix ffn_act;
  std::vector<Matrix> streams;  // r_0 = FFN output, r_{i+1} = adapter_i output
  std::vector<AdapterCache> adapters;
  LayerNormCache out_norm;
};

struct EncoderCache {
  std::vector<int> ids;
  std::vector<int> types;
  LayerNormCache emb_norm;
  std::vector<LayerCache> layers;
};

// BERT-style post-LN transformer encoder. Weights are shared read-only by
// forward passes; Backward mutates gradients and needs exclusive access.
class Encoder {
 public:
  Encoder() = default;
  Encoder(EncoderConfig cfg, std::shared_ptr<const WordPieceTokenizer> tokenizer);

  // Desk-scale flavor: random weights plus a fixed attention layout ([CLS]
  // pools in the top layer, other tokens attend to themselves). The last
  // hidden coordinate is reserved as the [CLS] marker.
  static Encoder TinyDesk(const EncoderConfig& cfg,
                          std::shared_ptr<const WordPieceTokenizer> tokenizer, uint64_t seed);

  const EncoderConfig& config() const { return cfg_; }
  const WordPieceTokenizer& tokenizer() const { return *tokenizer_; }
  std::shared_ptr<const WordPieceTokenizer> tokenizer_ptr() const { return tokenizer_; }
  int hidden() const { return cfg_.hidden; }

  // `types` may be empty (all segment 0). Returns n x h last-layer states.
  Matrix Forward(const std::vector<int>& ids, const std::vector<int>& types,
                 const AdapterStack* stack, EncoderCache* cache) const;
  // Adapter grads accumulate per stack->freeze; encoder grads only when
  // `train_encoder`.
  void Backward(const EncoderCache& cache, const Matrix& d_out, AdapterStack* stack,
                bool train_encoder);
  // Backward with the encoder frozen; leaves encoder weights and grads untouched.
  void BackwardFrozen(const EncoderCache& cache, const Matrix& d_out, AdapterStack* stack) const;

  std::vector<Param*> Params();
  std::vector<const Param*> Params() const;
  Eigen::Index ParamCount() const;

  Param token_embeddings;     // V x h
  Param position_embeddings;  // T x h
  Param type_embeddings;      // types x h
  LayerNorm embedding_norm;
  std::vector<TransformerLayer> layers;

 private:
  Matrix LayerForward(int l, const Matrix& x, const LayerAdapters* adapters,
                      LayerCache* cache) const;
  Matrix LayerBackward(int l, const LayerCache& cache, const Matrix& d_out,
                       LayerAdapters* adapters, const FreezeFlags& freeze, bool train_encoder);

  EncoderConfig cfg_;
  std::shared_ptr<const WordPieceTokenizer> tokenizer_;
};

// One adapter per layer after the feed-forward sub-layer.
AdapterStack InsertAdapters(const Encoder& encoder, AdapterPlacement placement, int reduction,
                            AdapterInit init, uint64_t seed, const std::string& source = "verb",
                            double init_std = 0.02);

// Adds a near-zero-up task adapter downstream of any verb adapter in every
// layer. Throws when a task adapter is already present.
AdapterStack StackTaskAdapter(AdapterStack stack, const Encoder& encoder, int reduction,
                              uint64_t seed, double init_std = 0.02);

enum class Regime { kFft, kTa, k2Ta };
std::string RegimeName(Regime r);
Regime ParseRegime(const std::string& name);

// FFT: encoder + verb adapter + heads trainable. TA/2TA: task adapter + heads.
FreezeFlags SetFreezing(AdapterStack& stack, Regime regime);

// Overwrites token embeddings of words found in `space` (dimension hidden - 1,
// leaving the [CLS] marker coordinate free), rescaled to the init norm.
void SeedTokenEmbeddings(Encoder& encoder, const EmbeddingSpace& space);

// Trainable adapter parameter count for the group that the regime trains.
Eigen::Index TrainableAdapterParams(const AdapterStack& stack, Regime regime);

}  // namespace verbknow

#endif  // VERBKNOW_ENCODER_H_
