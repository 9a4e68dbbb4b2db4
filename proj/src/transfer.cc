#include "verbknow/transfer.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "verbknow/checkpoint.h"
#include "verbknow/common.h"

namespace verbknow {
namespace {

Vector Unit(const EmbeddingSpace& space, const std::string& word) {
  return space.normalized().row(*space.IndexOf(word)).transpose();
}

// Index of the best score; ties go to the lexicographically smaller word.
int BestIndex(const Vector& scores, const std::vector<std::string>& words) {
  int best = -1;
  for (Eigen::Index i = 0; i < scores.size(); ++i) {
    if (best < 0 || scores[i] > scores[best] ||
        (scores[i] == scores[best] && words[static_cast<size_t>(i)] < words[static_cast<size_t>(best)])) {
      best = static_cast<int>(i);
    }
  }
  return best;
}

// Mean of the k largest entries of each row of `sims`.
Vector MeanTopK(const Matrix& sims, int k) {
  Vector out(sims.rows());
  const int kk = std::min<int>(k, static_cast<int>(sims.cols()));
  std::vector<double> row;
  for (Eigen::Index r = 0; r < sims.rows(); ++r) {
    row.resize(static_cast<size_t>(sims.cols()));
    for (Eigen::Index c = 0; c < sims.cols(); ++c) row[static_cast<size_t>(c)] = sims(r, c);
    std::partial_sort(row.begin(), row.begin() + kk, row.end(), std::greater<>());
    double s = 0.0;
    for (int i = 0; i < kk; ++i) s += row[static_cast<size_t>(i)];
    out[r] = kk ? s / kk : 0.0;
  }
  return out;
}

void WriteText(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path);
  out << text;
}

}  // namespace

void AlignedSpacePair::Validate() const {
  if (!source || !target) throw ValidationError("aligned space pair is incomplete");
  if (source->empty() || target->empty()) throw ValidationError("embedding space is empty");
  if (source->dim() != target->dim()) {
    throw ValidationError("source dimension " + std::to_string(source->dim()) +
                          " differs from target dimension " + std::to_string(target->dim()));
  }
  if (source->alignment_tag() != target->alignment_tag()) {
    throw ValidationError("spaces are not aligned to each other (tags '" + source->alignment_tag() +
                          "' vs '" + target->alignment_tag() + "')");
  }
}

TranslationResult TranslatePairs(const ConstraintSet& constraints, const AlignedSpacePair& spaces,
                                 const TranslateOptions& options) {
  spaces.Validate();
  const EmbeddingSpace& src = *spaces.source;
  const EmbeddingSpace& tgt = *spaces.target;
  TranslationResult result;
  result.pairs = ConstraintSet(constraints.resource(), tgt.language());
  result.input_pairs = constraints.size();

  std::vector<std::string> lemmas;
  for (const auto& l : constraints.Lemmas()) {
    if (src.Contains(l)) lemmas.push_back(l);
  }
  if (!lemmas.empty()) {
    Matrix queries(static_cast<Eigen::Index>(lemmas.size()), src.dim());
    for (size_t i = 0; i < lemmas.size(); ++i) queries.row(static_cast<Eigen::Index>(i)) = Unit(src, lemmas[i]).transpose();
    Matrix sims = queries * tgt.normalized().transpose();
    if (options.csls) {
      if (options.csls_k < 1) throw ValidationError("csls_k must be >= 1");
      // r_T(x): source query to its target neighbourhood; r_S(y): target word to source.
      const Vector r_t = MeanTopK(sims, options.csls_k);
      const Vector r_s = MeanTopK(tgt.normalized() * src.normalized().transpose(), options.csls_k);
      sims = 2.0 * sims;
      sims.colwise() -= r_t;
      sims.rowwise() -= r_s.transpose();
    }
    for (size_t i = 0; i < lemmas.size(); ++i) {
      const int best = BestIndex(sims.row(static_cast<Eigen::Index>(i)).transpose(), tgt.vocabulary());
      result.dictionary[lemmas[i]] = tgt.vocabulary()[static_cast<size_t>(best)];
    }
  }

  for (const auto& p : constraints.pairs()) {
    auto a = result.dictionary.find(p.first);
    auto b = result.dictionary.find(p.second);
    if (a == result.dictionary.end() || b == result.dictionary.end()) {
      ++result.oov_dropped;
      continue;
    }
    if (a->second == b->second) {
      ++result.collapsed_dropped;
      continue;
    }
    if (!result.pairs.Insert(VerbPair(a->second, b->second))) ++result.duplicates_merged;
  }
  if (result.pairs.empty()) {
    throw ValidationError("no translatable pairs (" + std::to_string(result.oov_dropped) +
                          " OOV, " + std::to_string(result.collapsed_dropped) + " collapsed)");
  }
  return result;
}

std::string StmConfig::Hash() const {
  std::ostringstream s;
  s << std::setprecision(17) << "K=" << slices << ";hs=" << hidden << ";lr=" << adam.learning_rate
    << ";b1=" << adam.beta1 << ";b2=" << adam.beta2 << ";eps=" << adam.epsilon
    << ";batch=" << batch_size << ";epochs=" << max_epochs << ";scheme=" << sampling.SchemeString()
    << ";B=" << sampling.batch_positives << ";init=" << init_std << ";seed=" << seed;
  return HexDigest(Fnv1a64(s.str()));
}

StmModel::StmModel(int dim, const StmConfig& cfg)
    : dim_(dim), hidden_(cfg.hidden), classifier("stm.classifier", ParamGroup::kHead, cfg.slices, 2) {
  if (dim < 1 || cfg.slices < 1 || cfg.hidden < 1) throw ValidationError("STM dimensions must be positive");
  std::mt19937_64 rng(MixSeed(cfg.seed, 0x73746d));
  for (int k = 0; k < cfg.slices; ++k) {
    Param a("stm.slice." + std::to_string(k) + ".left", ParamGroup::kHead, cfg.hidden, dim);
    InitNormal(a.value, cfg.init_std, rng);
    // Right projections start equal to the left ones so f_k begins as a
    // similarity; training decouples them.
    Param b = a;
    b.name = "stm.slice." + std::to_string(k) + ".right";
    left_.push_back(std::move(a));
    right_.push_back(std::move(b));
  }
}

StmModel StmModel::Constant(bool positive) {
  StmModel m;
  m.forced_ = positive ? Forced::kAlwaysPositive : Forced::kAlwaysNegative;
  return m;
}

RowVector StmModel::Logits(const Vector& left, const Vector& right) const {
  if (forced_ != Forced::kNone) {
    RowVector l(2);
    l << (forced_ == Forced::kAlwaysNegative ? 1.0 : 0.0), (forced_ == Forced::kAlwaysPositive ? 1.0 : 0.0);
    return l;
  }
  if (left.size() != dim_ || right.size() != dim_) throw ValidationError("STM input dimension mismatch");
  RowVector f(slices());
  for (int k = 0; k < slices(); ++k) {
    const Vector u = (left_[static_cast<size_t>(k)].value * left).array().tanh().matrix();
    const Vector v = (right_[static_cast<size_t>(k)].value * right).array().tanh().matrix();
    f[k] = u.dot(v);
  }
  return classifier.Forward(f).row(0);
}

double StmModel::PositiveProbability(const Vector& left, const Vector& right) const {
  return SoftmaxRows(Logits(left, right))(0, 1);
}

bool StmModel::IsPositive(const Vector& left, const Vector& right) const {
  const RowVector l = Logits(left, right);
  return l[1] > l[0];
}

double StmModel::Loss(const Vector& left, const Vector& right, int label, double scale,
                      bool backward) {
  if (forced_ != Forced::kNone) throw ValidationError("a hard-wired STM cannot be trained");
  const int n = slices();
  std::vector<Vector> us(static_cast<size_t>(n)), vs(static_cast<size_t>(n));
  RowVector f(n);
  for (int k = 0; k < n; ++k) {
    us[static_cast<size_t>(k)] = (left_[static_cast<size_t>(k)].value * left).array().tanh().matrix();
    vs[static_cast<size_t>(k)] = (right_[static_cast<size_t>(k)].value * right).array().tanh().matrix();
    f[k] = us[static_cast<size_t>(k)].dot(vs[static_cast<size_t>(k)]);
  }
  const RowVector logits = classifier.Forward(f).row(0);
  const double lse = LogSumExp(logits);
  const double loss = lse - logits[label];
  if (!backward) return loss;
  RowVector d_logits = (logits.array() - lse).exp().matrix();
  d_logits[label] -= 1.0;
  d_logits *= scale;
  const RowVector df = classifier.Backward(f, d_logits, true).row(0);
  for (int k = 0; k < n; ++k) {
    const Vector& u = us[static_cast<size_t>(k)];
    const Vector& v = vs[static_cast<size_t>(k)];
    const Vector dz = (df[k] * v).cwiseProduct((1.0 - u.array().square()).matrix());
    const Vector dw = (df[k] * u).cwiseProduct((1.0 - v.array().square()).matrix());
    left_[static_cast<size_t>(k)].grad += dz * left.transpose();
    right_[static_cast<size_t>(k)].grad += dw * right.transpose();
  }
  return loss;
}

std::vector<Param*> StmModel::Params() {
  std::vector<Param*> out;
  for (auto& p : left_) out.push_back(&p);
  for (auto& p : right_) out.push_back(&p);
  for (Param* p : classifier.Params()) out.push_back(p);
  return out;
}

std::vector<const Param*> StmModel::Params() const {
  std::vector<const Param*> out;
  for (Param* p : const_cast<StmModel*>(this)->Params()) out.push_back(p);
  return out;
}

void StmModel::Save(const std::string& path) const {
  Archive a;
  a.meta["kind"] = "stm";
  a.meta["forced"] = forced_ == Forced::kNone ? "none" : (forced_ == Forced::kAlwaysPositive ? "positive" : "negative");
  a.meta["dim"] = std::to_string(dim_);
  a.meta["slices"] = std::to_string(slices());
  a.meta["hidden"] = std::to_string(hidden_);
  if (forced_ == Forced::kNone) CopyTensors(Params(), &a);
  WriteArchive(path, a);
}

StmModel StmModel::Load(const std::string& path) {
  const Archive a = ReadArchive(path);
  if (a.Meta("kind") != "stm") throw ValidationError(path + " is not an STM archive");
  const std::string forced = a.Meta("forced");
  if (forced != "none") return Constant(forced == "positive");
  StmConfig cfg;
  cfg.slices = std::stoi(a.Meta("slices"));
  cfg.hidden = std::stoi(a.Meta("hidden"));
  StmModel m(std::stoi(a.Meta("dim")), cfg);
  LoadTensors(a, m.Params());
  return m;
}

StmTrainResult TrainStm(const ConstraintSet& constraints, const EmbeddingSpace& space,
                        const StmConfig& cfg) {
  if (constraints.empty()) throw ValidationError("cannot train the STM on empty constraints");
  if (cfg.batch_size < 1 || cfg.max_epochs < 1) throw ValidationError("STM batch size and epochs must be >= 1");
  StmTrainResult result;
  ConstraintSet usable(constraints.resource(), constraints.language());
  for (const auto& p : constraints.pairs()) {
    if (space.Contains(p.first) && space.Contains(p.second)) {
      usable.Insert(p);
    } else {
      ++result.oov_dropped;
    }
  }
  if (usable.empty()) throw ValidationError("all STM training pairs are out of vocabulary");
  if (result.oov_dropped > 0) {
    LogWarning("STM training dropped " + std::to_string(result.oov_dropped) + " OOV pairs");
  }
  result.used_pairs = usable.size();

  SamplingConfig sampling = cfg.sampling;
  sampling.batch_positives = static_cast<int>(
      std::min<size_t>(usable.size(), static_cast<size_t>(sampling.batch_positives)));
  sampling.seed = MixSeed(cfg.seed, 0x73616d);
  BatchStream stream(usable, constraints, space, sampling);
  result.model = StmModel(space.dim(), cfg);
  StmModel& model = result.model;
  const std::vector<Param*> params = model.Params();
  Adam adam(cfg.adam);

  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    std::vector<BatchInstance> pool;
    for (auto& b : stream.Epoch(epoch)) {
      pool.insert(pool.end(), b.instances.begin(), b.instances.end());
    }
    std::mt19937_64 rng(MixSeed(cfg.seed, 0x706f6f6c + static_cast<uint64_t>(epoch)));
    DeterministicShuffle(pool, rng);
    double total = 0.0;
    for (size_t start = 0; start < pool.size(); start += static_cast<size_t>(cfg.batch_size)) {
      const size_t stop = std::min(pool.size(), start + static_cast<size_t>(cfg.batch_size));
      const double scale = 1.0 / static_cast<double>(stop - start);
      ZeroGrads(params);
      double loss = 0.0;
      for (size_t i = start; i < stop; ++i) {
        const auto& inst = pool[i];
        loss += model.Loss(Unit(space, inst.pair.first), Unit(space, inst.pair.second), inst.label,
                           scale, true);
      }
      if (!std::isfinite(loss)) {
        throw DivergenceError("non-finite STM loss at epoch " + std::to_string(epoch + 1));
      }
      total += loss;
      adam.Step(params);
    }
    size_t correct = 0;
    for (const auto& inst : pool) {
      const bool pos = model.IsPositive(Unit(space, inst.pair.first), Unit(space, inst.pair.second));
      correct += (pos == (inst.label == 1)) ? 1 : 0;
    }
    result.epoch_loss.push_back(total / static_cast<double>(pool.size()));
    result.epoch_accuracy.push_back(static_cast<double>(correct) / static_cast<double>(pool.size()));
  }
  return result;
}

FilterResult StmFilter(const ConstraintSet& noisy, const StmModel& model,
                       const EmbeddingSpace& target) {
  FilterResult r;
  r.kept = ConstraintSet(noisy.resource(), noisy.language());
  r.input_pairs = noisy.size();
  for (const auto& p : noisy.pairs()) {
    if (!target.Contains(p.first) || !target.Contains(p.second)) {
      ++r.oov_dropped;
      continue;
    }
    if (model.forced() == StmModel::Forced::kAlwaysPositive ||
        (model.forced() == StmModel::Forced::kNone &&
         model.IsPositive(Unit(target, p.first), Unit(target, p.second)))) {
      r.kept.Insert(p);
    }
  }
  r.retention = r.input_pairs ? static_cast<double>(r.kept.size()) / static_cast<double>(r.input_pairs) : 0.0;
  if (r.kept.empty()) LogWarning("STM filter retained no pairs");
  return r;
}

VtransResult RunVtrans(const ConstraintSet& source_constraints, const AlignedSpacePair& spaces,
                       const Encoder& target_encoder, const VtransConfig& cfg) {
  spaces.Validate();
  VtransResult r;
  const std::string& dir = cfg.output_dir;
  if (!dir.empty()) {
    std::filesystem::create_directories(dir);
    std::ostringstream m;
    m << "stage=started\n"
      << "source_language=" << spaces.source->language() << '\n'
      << "target_language=" << spaces.target->language() << '\n'
      << "source_space_hash=" << spaces.source->ContentHash() << '\n'
      << "target_space_hash=" << spaces.target->ContentHash() << '\n'
      << "constraints_hash=" << source_constraints.ContentHash() << '\n'
      << "stm_config_hash=" << cfg.stm.Hash() << '\n'
      << "adapter_config_hash=" << cfg.adapter.Hash() << '\n'
      << "retrieval=" << (cfg.translate.csls ? "csls" : "cosine") << '\n';
    WriteText(dir + "/manifest.txt", m.str());
  }

  r.translation = TranslatePairs(source_constraints, spaces, cfg.translate);
  if (cfg.stm_override) {
    r.stm.model = *cfg.stm_override;
  } else {
    r.stm = TrainStm(source_constraints, *spaces.source, cfg.stm);
  }
  r.filtered = StmFilter(r.translation.pairs, r.stm.model, *spaces.target);

  if (!dir.empty()) {
    WriteConstraintsTsv(r.translation.pairs, dir + "/translated.tsv");
    WriteConstraintsTsv(r.filtered.kept, dir + "/purified.tsv");
    r.stm.model.Save(dir + "/stm.archive");
  }

  VerbTrainConfig acfg = cfg.adapter;
  acfg.language = spaces.target->language();
  if (!dir.empty() && acfg.checkpoint_dir.empty()) acfg.checkpoint_dir = dir + "/adapter_epochs";
  r.adapter = TrainVerbAdapter(target_encoder, r.filtered.kept, *spaces.target, acfg);

  if (!dir.empty()) {
    AdapterCheckpointInfo info{acfg.resource, acfg.language, acfg.reduction,
                               target_encoder.hidden(), target_encoder.config().num_layers,
                               acfg.Hash()};
    SaveAdapterCheckpoint(dir + "/adapter.ckpt", r.adapter.stack, info,
                          std::as_const(r.adapter.head).Params());
    std::ostringstream m;
    m << std::setprecision(10) << "translated_pairs=" << r.translation.pairs.size() << '\n'
      << "translation_oov_dropped=" << r.translation.oov_dropped << '\n'
      << "translation_collapsed_dropped=" << r.translation.collapsed_dropped << '\n'
      << "translation_duplicates_merged=" << r.translation.duplicates_merged << '\n'
      << "stm_train_accuracy=" << r.stm.final_accuracy() << '\n'
      << "filter_oov_dropped=" << r.filtered.oov_dropped << '\n'
      << "purified_pairs=" << r.filtered.kept.size() << '\n'
      << "retention=" << r.filtered.retention << '\n'
      << "purified_hash=" << r.filtered.kept.ContentHash() << '\n'
      << "stage=complete\n";
    std::ofstream out(dir + "/manifest.txt", std::ios::app);
    out << m.str();
  }
  return r;
}

}  // namespace verbknow
