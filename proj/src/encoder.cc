#include "verbknow/encoder.h"

#include <cmath>

#include "verbknow/common.h"
#include "verbknow/sampling.h"

namespace verbknow {

std::string EncoderFlavorName(EncoderFlavor f) {
  return f == EncoderFlavor::kTinyDesk ? "tiny-desk" : "pretrained-external";
}

EncoderFlavor ParseEncoderFlavor(const std::string& name) {
  if (name == "tiny-desk") return EncoderFlavor::kTinyDesk;
  if (name == "pretrained-external") return EncoderFlavor::kPretrainedExternal;
  throw ValidationError("unknown encoder flavor '" + name + "'");
}

void EncoderConfig::Validate() const {
  if (num_layers < 1 || hidden < 1 || heads < 1 || intermediate < 1 || max_len < 1) {
    throw ValidationError("encoder dimensions must be positive");
  }
  if (hidden % heads != 0) {
    throw ValidationError("hidden size " + std::to_string(hidden) +
                          " is not divisible by heads " + std::to_string(heads));
  }
}

AdapterParams::AdapterParams(const std::string& prefix, ParamGroup group, int layer_index,
                             int hidden, int m)
    : layer(layer_index),
      bottleneck(m),
      down(prefix + ".down", group, hidden, m),
      up(prefix + ".up", group, m, hidden) {}

Eigen::Index AdapterParams::ParamCount() const {
  return down.weight.size() + down.bias.size() + up.weight.size() + up.bias.size();
}

Matrix AdapterForward(const Matrix& hidden, const Matrix& residual, const AdapterParams& params) {
  if (hidden.rows() != residual.rows() || hidden.cols() != residual.cols()) {
    throw ValidationError("adapter input and residual shapes differ");
  }
  if (hidden.cols() != params.down.weight.value.rows()) {
    throw ValidationError("adapter width " + std::to_string(params.down.weight.value.rows()) +
                          " does not match hidden width " + std::to_string(hidden.cols()));
  }
  return params.up.Forward(Gelu(params.down.Forward(hidden))) + residual;
}

AdapterGrads AdapterBackward(const Matrix& hidden, const Matrix& d_out, AdapterParams& params,
                             bool accumulate) {
  const Matrix pre = params.down.Forward(hidden);
  const Matrix act = Gelu(pre);
  const Matrix d_act = params.up.Backward(act, d_out, accumulate);
  const Matrix d_pre = GeluBackward(pre, d_act);
  return {params.down.Backward(hidden, d_pre, accumulate), d_out};
}

bool AdapterStack::HasVerb() const {
  for (const auto& l : layers) {
    if (l.verb) return true;
  }
  return false;
}

bool AdapterStack::HasTask() const {
  for (const auto& l : layers) {
    if (l.task) return true;
  }
  return false;
}

std::vector<Param*> AdapterStack::Params(ParamGroup group) {
  std::vector<Param*> out;
  for (auto& l : layers) {
    for (auto* slot : {&l.verb, &l.task}) {
      if (*slot && (*slot)->group() == group) {
        for (Param* p : (*slot)->Params()) out.push_back(p);
      }
    }
  }
  return out;
}

std::vector<const Param*> AdapterStack::Params(ParamGroup group) const {
  std::vector<const Param*> out;
  for (const auto& l : layers) {
    for (const auto* slot : {&l.verb, &l.task}) {
      if (*slot && (*slot)->group() == group) {
        for (const Param* p : static_cast<const AdapterParams&>(**slot).Params()) out.push_back(p);
      }
    }
  }
  return out;
}

TransformerLayer::TransformerLayer(const std::string& prefix, const EncoderConfig& cfg)
    : query(prefix + ".attention.query", ParamGroup::kEncoder, cfg.hidden, cfg.hidden),
      key(prefix + ".attention.key", ParamGroup::kEncoder, cfg.hidden, cfg.hidden),
      value(prefix + ".attention.value", ParamGroup::kEncoder, cfg.hidden, cfg.hidden),
      attn_out(prefix + ".attention.output", ParamGroup::kEncoder, cfg.hidden, cfg.hidden),
      attn_norm(prefix + ".attention.norm", ParamGroup::kEncoder, cfg.hidden, cfg.layer_norm_eps),
      ffn_in(prefix + ".ffn.in", ParamGroup::kEncoder, cfg.hidden, cfg.intermediate),
      ffn_out(prefix + ".ffn.out", ParamGroup::kEncoder, cfg.intermediate, cfg.hidden),
      out_norm(prefix + ".output.norm", ParamGroup::kEncoder, cfg.hidden, cfg.layer_norm_eps),
      heads(cfg.heads) {}

std::vector<Param*> TransformerLayer::Params() {
  std::vector<Param*> out;
  for (Linear* lin : {&query, &key, &value, &attn_out, &ffn_in, &ffn_out}) {
    for (Param* p : lin->Params()) out.push_back(p);
  }
  for (LayerNorm* ln : {&attn_norm, &out_norm}) {
    for (Param* p : ln->Params()) out.push_back(p);
  }
  return out;
}

Encoder::Encoder(EncoderConfig cfg, std::shared_ptr<const WordPieceTokenizer> tokenizer)
    : token_embeddings("embeddings.token", ParamGroup::kEncoder, tokenizer->size(), cfg.hidden),
      position_embeddings("embeddings.position", ParamGroup::kEncoder, cfg.max_len, cfg.hidden),
      type_embeddings("embeddings.type", ParamGroup::kEncoder, cfg.type_vocab, cfg.hidden),
      embedding_norm("embeddings.norm", ParamGroup::kEncoder, cfg.hidden, cfg.layer_norm_eps),
      cfg_(cfg),
      tokenizer_(std::move(tokenizer)) {
  cfg_.Validate();
  layers.reserve(static_cast<size_t>(cfg.num_layers));
  for (int l = 0; l < cfg.num_layers; ++l) {
    layers.emplace_back("layer." + std::to_string(l), cfg_);
  }
}

Encoder Encoder::TinyDesk(const EncoderConfig& cfg,
                          std::shared_ptr<const WordPieceTokenizer> tokenizer, uint64_t seed) {
  EncoderConfig c = cfg;
  c.flavor = EncoderFlavor::kTinyDesk;
  Encoder enc(c, std::move(tokenizer));
  std::mt19937_64 rng(MixSeed(seed, 0x656e63));
  for (Param* p : enc.Params()) {
    // LayerNorm gains stay at one, biases at zero.
    const bool is_norm = p->name.find(".norm.") != std::string::npos;
    const bool is_bias = p->name.size() > 5 && p->name.compare(p->name.size() - 5, 5, ".bias") == 0;
    if (!is_norm && !is_bias) InitNormal(p->value, c.init_std, rng);
  }

  // Stand-in for pretrained structure. The last coordinate marks [CLS]; the
  // top layer lets [CLS] pool the sequence while every other token attends
  // to itself, and lower layers stay close to pass-through.
  const int h = c.hidden;
  const int marker = h - 1;
  enc.token_embeddings.value.col(marker).setZero();
  enc.position_embeddings.value.col(marker).setZero();
  enc.type_embeddings.value.col(marker).setZero();
  const int cls = enc.tokenizer().cls_id();
  enc.token_embeddings.value.row(cls).setZero();
  enc.token_embeddings.value(cls, marker) = kTinyDeskClsMarker;
  for (auto& layer : enc.layers) {
    layer.ffn_in.weight.value *= kTinyDeskFfnScale;
    layer.ffn_out.weight.value *= kTinyDeskFfnScale;
  }
  TransformerLayer& top = enc.layers.back();
  for (Linear* proj : {&top.query, &top.key}) {
    proj->weight.value = Matrix::Identity(h, h) * kTinyDeskSelfAttention;
    proj->weight.value(marker, marker) = 0.0;
  }
  top.value.weight.value = Matrix::Identity(h, h) * kTinyDeskPoolGain;
  top.attn_out.weight.value = Matrix::Identity(h, h);
  return enc;
}

void SeedTokenEmbeddings(Encoder& encoder, const EmbeddingSpace& space) {
  const int h = encoder.hidden();
  if (space.dim() != h - 1) {
    throw ValidationError("seed space has dimension " + std::to_string(space.dim()) +
                          ", expected hidden - 1 = " + std::to_string(h - 1));
  }
  const WordPieceTokenizer& tok = encoder.tokenizer();
  const double target = encoder.config().init_std * std::sqrt(static_cast<double>(h));
  for (int id = 0; id < tok.size(); ++id) {
    const auto index = space.IndexOf(tok.TokenOf(id));
    if (!index) continue;
    RowVector row = RowVector::Zero(h);
    row.head(h - 1) = space.VectorAt(*index).transpose();
    const double norm = row.norm();
    if (norm == 0.0) continue;
    encoder.token_embeddings.value.row(id) = row * (target / norm);
  }
}

std::vector<Param*> Encoder::Params() {
  std::vector<Param*> out = {&token_embeddings, &position_embeddings, &type_embeddings,
                             &embedding_norm.gamma, &embedding_norm.beta};
  for (auto& layer : layers) {
    for (Param* p : layer.Params()) out.push_back(p);
  }
  return out;
}

std::vector<const Param*> Encoder::Params() const {
  std::vector<const Param*> out;
  for (Param* p : const_cast<Encoder*>(this)->Params()) out.push_back(p);
  return out;
}

Eigen::Index Encoder::ParamCount() const {
  Eigen::Index n = 0;
  for (const Param* p : Params()) n += p->size();
  return n;
}

Matrix Encoder::LayerForward(int l, const Matrix& x, const LayerAdapters* adapters,
                             LayerCache* cache) const {
  const TransformerLayer& layer = layers[static_cast<size_t>(l)];
  const Eigen::Index n = x.rows();
  const int h = cfg_.hidden;
  const int hd = h / layer.heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));

  Matrix q = layer.query.Forward(x);
  Matrix k = layer.key.Forward(x);
  Matrix v = layer.value.Forward(x);
  Matrix context(n, h);
  std::vector<Matrix> probs;
  probs.reserve(static_cast<size_t>(layer.heads));
  for (int head = 0; head < layer.heads; ++head) {
    const auto qh = q.middleCols(head * hd, hd);
    const auto kh = k.middleCols(head * hd, hd);
    const auto vh = v.middleCols(head * hd, hd);
    Matrix p = SoftmaxRows((qh * kh.transpose()) * scale);
    context.middleCols(head * hd, hd) = p * vh;
    probs.push_back(std::move(p));
  }
  Matrix attn = layer.attn_out.Forward(context);

  LayerNormCache attn_norm_cache;
  Matrix a = layer.attn_norm.Forward(x + attn, cache ? &attn_norm_cache : nullptr);
  Matrix ffn_pre = layer.ffn_in.Forward(a);
  Matrix ffn_act = Gelu(ffn_pre);
  Matrix stream = layer.ffn_out.Forward(ffn_act);

  std::vector<Matrix> streams;
  std::vector<AdapterCache> adapter_caches;
  if (cache) streams.push_back(stream);
  if (adapters) {
    for (const auto* slot : {&adapters->verb, &adapters->task}) {
      if (!*slot) continue;
      const AdapterParams& ap = **slot;
      AdapterCache ac;
      ac.hidden = layer.out_norm.Forward(stream + a, cache ? &ac.norm : nullptr);
      ac.pre_gelu = ap.down.Forward(ac.hidden);
      stream = ap.up.Forward(Gelu(ac.pre_gelu)) + stream;
      if (cache) {
        adapter_caches.push_back(std::move(ac));
        streams.push_back(stream);
      }
    }
  }
  LayerNormCache out_norm_cache;
  Matrix out = layer.out_norm.Forward(stream + a, cache ? &out_norm_cache : nullptr);

  if (cache) {
    cache->input = x;
    cache->q = std::move(q);
    cache->k = std::move(k);
    cache->v = std::move(v);
    cache->probs = std::move(probs);
    cache->context = std::move(context);
    cache->attn_norm = std::move(attn_norm_cache);
    cache->attn_normed = std::move(a);
    cache->ffn_pre = std::move(ffn_pre);
    cache->ffn_act = std::move(ffn_act);
    cache->streams = std::move(streams);
    cache->adapters = std::move(adapter_caches);
    cache->out_norm = std::move(out_norm_cache);
  }
  return out;
}

Matrix Encoder::Forward(const std::vector<int>& ids, const std::vector<int>& types,
                        const AdapterStack* stack, EncoderCache* cache) const {
  const Eigen::Index n = static_cast<Eigen::Index>(ids.size());
  if (n == 0) throw ValidationError("empty input sequence");
  if (n > cfg_.max_len) {
    throw ValidationError("sequence length " + std::to_string(n) + " exceeds T=" +
                          std::to_string(cfg_.max_len));
  }
  if (!types.empty() && types.size() != ids.size()) {
    throw ValidationError("segment ids length differs from token ids");
  }
  if (stack && !stack->layers.empty() &&
      stack->layers.size() != static_cast<size_t>(cfg_.num_layers)) {
    throw ValidationError("adapter stack depth does not match encoder layers");
  }
  Matrix e(n, cfg_.hidden);
  for (Eigen::Index i = 0; i < n; ++i) {
    const int id = ids[static_cast<size_t>(i)];
    if (id < 0 || id >= token_embeddings.value.rows()) {
      throw ValidationError("token id out of range: " + std::to_string(id));
    }
    const int type = types.empty() ? 0 : types[static_cast<size_t>(i)];
    if (type < 0 || type >= type_embeddings.value.rows()) {
      throw ValidationError("segment id out of range: " + std::to_string(type));
    }
    e.row(i) = token_embeddings.value.row(id) + position_embeddings.value.row(i) +
               type_embeddings.value.row(type);
  }
  Matrix x = embedding_norm.Forward(e, cache ? &cache->emb_norm : nullptr);
  if (cache) {
    cache->ids = ids;
    cache->types = types;
    cache->layers.assign(static_cast<size_t>(cfg_.num_layers), LayerCache{});
  }
  for (int l = 0; l < cfg_.num_layers; ++l) {
    const LayerAdapters* adapters =
        (stack && !stack->layers.empty()) ? &stack->layers[static_cast<size_t>(l)] : nullptr;
    x = LayerForward(l, x, adapters, cache ? &cache->layers[static_cast<size_t>(l)] : nullptr);
  }
  return x;
}

Matrix Encoder::LayerBackward(int l, const LayerCache& c, const Matrix& d_out,
                              LayerAdapters* adapters, const FreezeFlags& freeze,
                              bool train_encoder) {
  TransformerLayer& layer = layers[static_cast<size_t>(l)];
  const int h = cfg_.hidden;
  const int hd = h / layer.heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));

  Matrix d_sum = layer.out_norm.Backward(c.out_norm, d_out, train_encoder);
  Matrix d_stream = d_sum;
  Matrix d_a = d_sum;

  if (adapters) {
    std::vector<AdapterParams*> present;
    for (auto* slot : {&adapters->verb, &adapters->task}) {
      if (*slot) present.push_back(&**slot);
    }
    for (size_t i = present.size(); i-- > 0;) {
      AdapterParams& ap = *present[i];
      const AdapterCache& ac = c.adapters[i];
      const bool acc = freeze.Trainable(ap.group());
      const Matrix d_act = ap.up.Backward(Gelu(ac.pre_gelu), d_stream, acc);
      const Matrix d_pre = GeluBackward(ac.pre_gelu, d_act);
      const Matrix d_hidden = ap.down.Backward(ac.hidden, d_pre, acc);
      const Matrix d_norm_in = layer.out_norm.Backward(ac.norm, d_hidden, train_encoder);
      d_stream += d_norm_in;
      d_a += d_norm_in;
    }
  }

  const Matrix d_act = layer.ffn_out.Backward(c.ffn_act, d_stream, train_encoder);
  const Matrix d_pre = GeluBackward(c.ffn_pre, d_act);
  d_a += layer.ffn_in.Backward(c.attn_normed, d_pre, train_encoder);

  const Matrix d_sum1 = layer.attn_norm.Backward(c.attn_norm, d_a, train_encoder);
  Matrix d_x = d_sum1;
  const Matrix d_context = layer.attn_out.Backward(c.context, d_sum1, train_encoder);

  const Eigen::Index n = c.input.rows();
  Matrix dq(n, h), dk(n, h), dv(n, h);
  for (int head = 0; head < layer.heads; ++head) {
    const Matrix& p = c.probs[static_cast<size_t>(head)];
    const auto dc = d_context.middleCols(head * hd, hd);
    const Matrix dp = dc * c.v.middleCols(head * hd, hd).transpose();
    dv.middleCols(head * hd, hd) = p.transpose() * dc;
    const Eigen::VectorXd row_dot = dp.cwiseProduct(p).rowwise().sum();
    const Matrix ds = p.cwiseProduct(dp.colwise() - row_dot) * scale;
    dq.middleCols(head * hd, hd) = ds * c.k.middleCols(head * hd, hd);
    dk.middleCols(head * hd, hd) = ds.transpose() * c.q.middleCols(head * hd, hd);
  }
  d_x += layer.query.Backward(c.input, dq, train_encoder);
  d_x += layer.key.Backward(c.input, dk, train_encoder);
  d_x += layer.value.Backward(c.input, dv, train_encoder);
  return d_x;
}

void Encoder::Backward(const EncoderCache& cache, const Matrix& d_out, AdapterStack* stack,
                       bool train_encoder) {
  const FreezeFlags freeze = stack ? stack->freeze : FreezeFlags{};
  Matrix d = d_out;
  for (int l = cfg_.num_layers - 1; l >= 0; --l) {
    LayerAdapters* adapters =
        (stack && !stack->layers.empty()) ? &stack->layers[static_cast<size_t>(l)] : nullptr;
    d = LayerBackward(l, cache.layers[static_cast<size_t>(l)], d, adapters, freeze, train_encoder);
  }
  if (!train_encoder) return;
  const Matrix d_e = embedding_norm.Backward(cache.emb_norm, d, true);
  for (Eigen::Index i = 0; i < d_e.rows(); ++i) {
    token_embeddings.grad.row(cache.ids[static_cast<size_t>(i)]) += d_e.row(i);
    position_embeddings.grad.row(i) += d_e.row(i);
    const int type = cache.types.empty() ? 0 : cache.types[static_cast<size_t>(i)];
    type_embeddings.grad.row(type) += d_e.row(i);
  }
}

void Encoder::BackwardFrozen(const EncoderCache& cache, const Matrix& d_out,
                             AdapterStack* stack) const {
  // With train_encoder=false no encoder member is written.
  const_cast<Encoder*>(this)->Backward(cache, d_out, stack, false);
}

namespace {

void InitAdapter(AdapterParams& ap, AdapterInit init, double init_std, std::mt19937_64& rng) {
  InitNormal(ap.down.weight.value, init_std, rng);
  if (init == AdapterInit::kRandom) {
    InitNormal(ap.up.weight.value, init_std, rng);
  } else {
    ap.up.weight.value.setZero();
  }
}

int Bottleneck(int hidden, int reduction) {
  if (reduction < 1 || hidden % reduction != 0) {
    throw ValidationError("adapter reduction factor " + std::to_string(reduction) +
                          " does not divide hidden size " + std::to_string(hidden));
  }
  return hidden / reduction;
}

}  // namespace

AdapterStack InsertAdapters(const Encoder& encoder, AdapterPlacement placement, int reduction,
                            AdapterInit init, uint64_t seed, const std::string& source,
                            double init_std) {
  if (placement != AdapterPlacement::kAfterFfn) throw ValidationError("unsupported placement");
  const int m = Bottleneck(encoder.hidden(), reduction);
  AdapterStack stack;
  stack.verb_reduction = reduction;
  stack.verb_source = source;
  std::mt19937_64 rng(MixSeed(seed, 0x766164));
  stack.layers.resize(static_cast<size_t>(encoder.config().num_layers));
  for (int l = 0; l < encoder.config().num_layers; ++l) {
    AdapterParams ap("adapter.verb.layer." + std::to_string(l), ParamGroup::kVerbAdapter, l,
                     encoder.hidden(), m);
    InitAdapter(ap, init, init_std, rng);
    stack.layers[static_cast<size_t>(l)].verb = std::move(ap);
  }
  return stack;
}

AdapterStack StackTaskAdapter(AdapterStack stack, const Encoder& encoder, int reduction,
                              uint64_t seed, double init_std) {
  if (stack.HasTask()) throw ValidationError("task adapter already present");
  const int m = Bottleneck(encoder.hidden(), reduction);
  if (stack.layers.empty()) stack.layers.resize(static_cast<size_t>(encoder.config().num_layers));
  std::mt19937_64 rng(MixSeed(seed, 0x746164));
  for (int l = 0; l < encoder.config().num_layers; ++l) {
    AdapterParams ap("adapter.task.layer." + std::to_string(l), ParamGroup::kTaskAdapter, l,
                     encoder.hidden(), m);
    InitAdapter(ap, AdapterInit::kNearZeroUp, init_std, rng);
    stack.layers[static_cast<size_t>(l)].task = std::move(ap);
  }
  stack.task_reduction = reduction;
  return stack;
}

std::string RegimeName(Regime r) {
  switch (r) {
    case Regime::kFft: return "fft";
    case Regime::kTa: return "ta";
    case Regime::k2Ta: return "2ta";
  }
  return "unknown";
}

Regime ParseRegime(const std::string& name) {
  const std::string n = ToLower(name);
  if (n == "fft") return Regime::kFft;
  if (n == "ta") return Regime::kTa;
  if (n == "2ta") return Regime::k2Ta;
  throw ValidationError("unknown regime '" + name + "' (expected fft, ta or 2ta)");
}

FreezeFlags SetFreezing(AdapterStack& stack, Regime regime) {
  FreezeFlags f;
  if (regime == Regime::kFft) {
    f.encoder = false;
    f.verb_adapter = false;
    f.task_adapter = false;
    f.heads = false;
  } else {
    if (!stack.HasTask()) {
      throw ValidationError("regime " + RegimeName(regime) + " requires a task adapter");
    }
    f.encoder = true;
    f.verb_adapter = true;
    f.task_adapter = false;
    f.heads = false;
  }
  stack.freeze = f;
  return f;
}

Eigen::Index TrainableAdapterParams(const AdapterStack& stack, Regime regime) {
  const ParamGroup g = regime == Regime::kFft ? ParamGroup::kVerbAdapter : ParamGroup::kTaskAdapter;
  Eigen::Index n = 0;
  for (const Param* p : stack.Params(g)) n += p->size();
  return n;
}

}  // namespace verbknow
