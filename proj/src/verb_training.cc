#include "verbknow/verb_training.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <random>
#include <sstream>

#include "verbknow/checkpoint.h"
#include "verbknow/common.h"

namespace verbknow {
namespace {

std::string Spaced(const std::string& lemma) {
  std::string s = lemma;
  for (char& c : s) {
    if (c == '_') c = ' ';
  }
  return s;
}

std::vector<Param*> Trainable(AdapterStack& stack, PairClassifier& head) {
  std::vector<Param*> out = stack.Params(ParamGroup::kVerbAdapter);
  for (Param* p : head.Params()) out.push_back(p);
  return out;
}

// Forward + backward over one batch; grads accumulate into stack/head.
double RunBatch(const Encoder& encoder, AdapterStack& stack, PairClassifier& head,
                const std::vector<BatchInstance>& instances, bool backward) {
  const int max_len = encoder.config().max_len;
  const double inv_n = 1.0 / static_cast<double>(instances.size());
  double loss = 0.0;
  EncoderCache cache;
  for (const auto& inst : instances) {
    EncodedInput in = EncodePair(inst.pair.first, inst.pair.second, encoder.tokenizer(), max_len);
    const Matrix hidden = encoder.Forward(in.ids, in.types, &stack, backward ? &cache : nullptr);
    const RowVector logits = head.Logits(hidden);
    const double lse = LogSumExp(logits);
    loss += (lse - logits[inst.label]) * inv_n;
    if (!backward) continue;
    RowVector d_logits = (logits.array() - lse).exp().matrix();
    d_logits[inst.label] -= 1.0;
    d_logits *= inv_n;
    const Matrix cls = hidden.topRows(1);
    const Matrix d_cls = head.proj.Backward(cls, d_logits, true);
    Matrix d_hidden = Matrix::Zero(hidden.rows(), hidden.cols());
    d_hidden.row(0) = d_cls.row(0);
    encoder.BackwardFrozen(cache, d_hidden, &stack);
  }
  return loss;
}

}  // namespace

EncodedInput EncodePair(const std::string& first, const std::string& second,
                        const WordPieceTokenizer& tokenizer, int max_len) {
  if (Trim(first).empty() || Trim(second).empty()) {
    throw ValidationError("cannot encode a pair with an empty lemma");
  }
  const auto a = tokenizer.ConvertToIds(tokenizer.Tokenize(Spaced(first)));
  const auto b = tokenizer.ConvertToIds(tokenizer.Tokenize(Spaced(second)));
  if (a.empty() || b.empty()) throw ValidationError("lemma produced no tokens");
  EncodedInput out;
  out.ids.push_back(tokenizer.cls_id());
  out.types.push_back(0);
  for (int id : a) {
    out.ids.push_back(id);
    out.types.push_back(0);
  }
  out.ids.push_back(tokenizer.sep_id());
  out.types.push_back(0);
  for (int id : b) {
    out.ids.push_back(id);
    out.types.push_back(1);
  }
  out.ids.push_back(tokenizer.sep_id());
  out.types.push_back(1);
  if (static_cast<int>(out.ids.size()) > max_len) {
    LogWarning("pair (" + first + ", " + second + ") truncated to " + std::to_string(max_len) +
               " tokens");
    out.ids.resize(static_cast<size_t>(max_len));
    out.types.resize(static_cast<size_t>(max_len));
    out.ids.back() = tokenizer.sep_id();
    out.truncated = true;
  }
  return out;
}

RowVector PairClassifier::Logits(const Matrix& hidden_states) const {
  return proj.Forward(hidden_states.topRows(1)).row(0);
}

std::pair<double, double> ClassifyPair(const Encoder& encoder, const AdapterStack& stack,
                                       const PairClassifier& head, const VerbPair& pair) {
  EncodedInput in = EncodePair(pair.first, pair.second, encoder.tokenizer(), encoder.config().max_len);
  const RowVector logits = head.Logits(encoder.Forward(in.ids, in.types, &stack, nullptr));
  const RowVector p = SoftmaxRows(logits);
  return {p[0], p[1]};
}

double CrossEntropy(const Matrix& logits, const std::vector<int>& labels) {
  if (logits.rows() != static_cast<Eigen::Index>(labels.size())) {
    throw ValidationError("logits/labels size mismatch");
  }
  double loss = 0.0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    loss += LogSumExp(logits.row(i)) - logits(i, labels[static_cast<size_t>(i)]);
  }
  return loss / static_cast<double>(labels.size());
}

std::string VerbTrainConfig::Hash() const {
  std::ostringstream s;
  s << std::setprecision(17) << "epochs=" << epochs << ";lr=" << adam.learning_rate
    << ";b1=" << adam.beta1 << ";b2=" << adam.beta2 << ";eps=" << adam.epsilon
    << ";k=" << sampling.k << ";scheme=" << sampling.SchemeString()
    << ";B=" << sampling.batch_positives << ";sampling_seed=" << sampling.seed
    << ";reduction=" << reduction << ";init_std=" << adapter_init_std << ";seed=" << seed;
  if (early_stopping) {
    s << ";patience=" << early_stopping->patience << ";val=" << early_stopping->validation_fraction;
  }
  return HexDigest(Fnv1a64(s.str()));
}

VerbTrainResult TrainVerbAdapter(const Encoder& encoder, const ConstraintSet& constraints,
                                 const EmbeddingSpace& space, const VerbTrainConfig& cfg,
                                 const ConstraintSet* global_positives) {
  if (constraints.empty()) throw ValidationError("cannot train a verb adapter on empty constraints");
  if (cfg.epochs < 1) throw ValidationError("epochs must be >= 1");
  const ConstraintSet& global = global_positives ? *global_positives : constraints;

  VerbTrainResult result;
  result.stack = InsertAdapters(encoder, AdapterPlacement::kAfterFfn, cfg.reduction,
                                AdapterInit::kNearZeroUp, cfg.seed, cfg.resource,
                                cfg.adapter_init_std);
  result.stack.freeze = FreezeFlags{true, false, true, false};
  result.head = PairClassifier(encoder.hidden());
  {
    std::mt19937_64 rng(MixSeed(cfg.seed, 0x68656164));
    InitNormal(result.head.proj.weight.value, 0.02, rng);
  }

  ConstraintSet train = constraints;
  ConstraintSet validation;
  if (cfg.early_stopping) {
    std::vector<VerbPair> all = constraints.ToVector();
    std::mt19937_64 rng(MixSeed(cfg.seed, 0x76616c));
    DeterministicShuffle(all, rng);
    const size_t n_val = static_cast<size_t>(
        std::ceil(cfg.early_stopping->validation_fraction * static_cast<double>(all.size())));
    train = ConstraintSet(constraints.resource(), constraints.language());
    for (size_t i = 0; i < all.size(); ++i) {
      if (i < n_val) {
        validation.Insert(all[i]);
      } else {
        train.Insert(all[i]);
      }
    }
  }

  SamplingConfig sampling = cfg.sampling;
  sampling.seed = MixSeed(cfg.seed, 0x73616d70 + cfg.sampling.seed);
  BatchStream stream(train, global, space, sampling);

  std::vector<TrainingBatch> val_batches;
  if (cfg.early_stopping) {
    SamplingConfig vcfg = sampling;
    vcfg.batch_positives = static_cast<int>(
        std::min<size_t>(validation.size(), static_cast<size_t>(sampling.batch_positives)));
    if (vcfg.batch_positives < 2) {
      throw ValidationError("validation split too small for early stopping");
    }
    vcfg.seed = MixSeed(cfg.seed, 0x7662);
    BatchStream vstream(validation, global, space, vcfg);
    val_batches = vstream.Epoch(0);
  }

  Adam adam(cfg.adam);
  const std::vector<Param*> params = Trainable(result.stack, result.head);
  double best_val = std::numeric_limits<double>::infinity();
  int bad_epochs = 0;
  std::vector<Matrix> best_values;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const std::vector<TrainingBatch> batches = stream.Epoch(epoch);
    double epoch_loss = 0.0;
    for (const auto& batch : batches) {
      result.counters += batch.counters;
      ZeroGrads(params);
      const double loss = RunBatch(encoder, result.stack, result.head, batch.instances, true);
      if (!std::isfinite(loss)) {
        std::ostringstream msg;
        msg << "non-finite verb-adapter loss at epoch " << epoch + 1 << " (loss=" << loss
            << ", grad norm=" << GradNorm(params) << ", lr=" << cfg.adam.learning_rate << ")";
        throw DivergenceError(msg.str());
      }
      epoch_loss += loss;
      adam.Step(params);
    }
    EpochLog entry;
    entry.epoch = epoch + 1;
    entry.loss = epoch_loss / static_cast<double>(batches.size());
    result.epochs_run = epoch + 1;

    bool stop = false;
    if (cfg.early_stopping) {
      double val = 0.0;
      for (const auto& batch : val_batches) {
        val += RunBatch(encoder, result.stack, result.head, batch.instances, false);
      }
      val /= static_cast<double>(val_batches.size());
      entry.val_loss = val;
      if (val < best_val) {
        best_val = val;
        bad_epochs = 0;
        best_values.clear();
        for (const Param* p : params) best_values.push_back(p->value);
      } else if (++bad_epochs >= cfg.early_stopping->patience) {
        stop = true;
      }
    }
    result.log.push_back(entry);

    if (!cfg.checkpoint_dir.empty()) {
      std::filesystem::create_directories(cfg.checkpoint_dir);
      AdapterCheckpointInfo info{cfg.resource, cfg.language, cfg.reduction, encoder.hidden(),
                                 encoder.config().num_layers, cfg.Hash()};
      std::ostringstream name;
      name << cfg.checkpoint_dir << "/epoch_" << std::setw(3) << std::setfill('0') << epoch + 1
           << ".adapter";
      SaveAdapterCheckpoint(name.str(), result.stack, info, std::as_const(result.head).Params());
    }
    if (stop) break;
  }
  if (!best_values.empty()) {
    for (size_t i = 0; i < params.size(); ++i) params[i]->value = best_values[i];
  }
  if (result.counters.oov_fallbacks > 0) {
    LogWarning(std::to_string(result.counters.oov_fallbacks) +
               " controlled negatives replaced by random ones (lemma missing from embedding space)");
  }
  return result;
}

PairEvaluation EvaluatePairs(const Encoder& encoder, const AdapterStack& stack,
                             const PairClassifier& head, const std::vector<LabeledPair>& pairs) {
  PairEvaluation ev;
  size_t pos = 0, neg = 0, pos_ok = 0, neg_ok = 0;
  for (const auto& lp : pairs) {
    const auto [p_neg, p_pos] = ClassifyPair(encoder, stack, head, lp.pair);
    const bool predicted_pos = p_pos > p_neg;
    if (lp.label == PairLabel::kPositive) {
      ++pos;
      pos_ok += predicted_pos ? 1 : 0;
    } else {
      ++neg;
      neg_ok += predicted_pos ? 0 : 1;
    }
  }
  ev.count = pairs.size();
  if (ev.count) ev.accuracy = static_cast<double>(pos_ok + neg_ok) / static_cast<double>(ev.count);
  if (pos) ev.positive_accuracy = static_cast<double>(pos_ok) / static_cast<double>(pos);
  if (neg) ev.negative_accuracy = static_cast<double>(neg_ok) / static_cast<double>(neg);
  return ev;
}

void WriteTrainingLogCsv(const std::vector<EpochLog>& log, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path);
  out << "epoch,loss,val_loss\n" << std::setprecision(10);
  for (const auto& e : log) {
    out << e.epoch << ',' << e.loss << ',';
    if (e.val_loss) out << *e.val_loss;
    out << '\n';
  }
}

}  // namespace verbknow
