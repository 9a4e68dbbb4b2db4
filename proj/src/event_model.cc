#include "verbknow/event_model.h"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <future>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "verbknow/common.h"
#include "verbknow/sampling.h"

namespace verbknow {
namespace {

bool Contains(const std::vector<double>& v, double x) {
  return std::any_of(v.begin(), v.end(), [x](double y) { return std::fabs(x - y) <= 1e-12 * y; });
}

std::vector<const Sentence*> Flatten(const EventDataset& data) {
  std::vector<const Sentence*> out;
  for (const auto& d : data.documents) {
    for (const auto& s : d.sentences) out.push_back(&s);
  }
  return out;
}

}  // namespace

std::string AdapterSourceName(AdapterSource s) {
  switch (s) {
    case AdapterSource::kFn: return "fn";
    case AdapterSource::kVn: return "vn";
    case AdapterSource::kRandom: return "random";
    case AdapterSource::kNone: return "none";
  }
  return "?";
}

AdapterSource ParseAdapterSource(const std::string& name) {
  const std::string n = ToLower(name);
  if (n == "fn") return AdapterSource::kFn;
  if (n == "vn") return AdapterSource::kVn;
  if (n == "random") return AdapterSource::kRandom;
  if (n == "none") return AdapterSource::kNone;
  throw ValidationError("unknown adapter source '" + name + "' (expected fn, vn, random, none)");
}

std::string ConditionName(AdapterSource s) {
  switch (s) {
    case AdapterSource::kFn: return "+FN";
    case AdapterSource::kVn: return "+VN";
    case AdapterSource::kRandom: return "+Random";
    case AdapterSource::kNone: return "baseline";
  }
  return "?";
}

int FinetuneConfig::EffectiveTaskReduction() const {
  if (regime != Regime::k2Ta) return task_reduction;
  if (task_reduction < 2 || task_reduction % 2 != 0) {
    throw ValidationError("2TA needs an even task reduction factor, got " +
                          std::to_string(task_reduction));
  }
  return task_reduction / 2;
}

std::string FinetuneConfig::Hash() const {
  std::ostringstream s;
  s << std::setprecision(17) << "regime=" << RegimeName(regime)
    << ";source=" << AdapterSourceName(adapter_source) << ";epochs=" << epochs
    << ";batch=" << batch_size << ";lr=" << adam.learning_rate << ";b1=" << adam.beta1
    << ";b2=" << adam.beta2 << ";eps=" << adam.epsilon << ";task_reduction=" << task_reduction
    << ";random_reduction=" << random_reduction << ";adapter_std=" << adapter_init_std
    << ";head_std=" << head_init_std << ";bio_mask=" << bio_mask << ";seed=" << seed;
  return HexDigest(Fnv1a64(s.str()));
}

void CheckFinetuneGrid(const FinetuneConfig& cfg, EventTask task) {
  // Each warning is printed once per process, not once per run.
  static std::atomic<bool> warned_tempeval{false}, warned_ace{false};
  if (task == EventTask::kTempEvalTrigger) {
    if ((cfg.epochs != 10 || cfg.batch_size != 32 || std::fabs(cfg.adam.learning_rate - 1e-4) > 1e-16) &&
        !warned_tempeval.exchange(true)) {
      LogWarning("TempEval fine-tuning outside the default setting (10 epochs, batch 32, lr 1e-4)");
    }
    return;
  }
  static const std::vector<double> lrs = {1e-5, 1e-6};
  static const std::vector<int> epochs = {3, 5, 10, 25, 50};
  if ((!Contains(lrs, cfg.adam.learning_rate) ||
       std::find(epochs.begin(), epochs.end(), cfg.epochs) == epochs.end()) &&
      !warned_ace.exchange(true)) {
    LogWarning("ACE fine-tuning outside the standard grid (lr {1e-5, 1e-6}, epochs {3,5,10,25,50})");
  }
}

EncodedSentence EncodeSentence(const std::vector<std::string>& tokens,
                               const WordPieceTokenizer& tokenizer, int max_len) {
  if (max_len < 3) throw ValidationError("max_len too small to encode a sentence");
  EncodedSentence out;
  out.ids.push_back(tokenizer.cls_id());
  out.word_starts.assign(tokens.size(), -1);
  for (size_t w = 0; w < tokens.size(); ++w) {
    std::vector<int> ids = tokenizer.ConvertToIds(tokenizer.Tokenize(tokens[w]));
    if (ids.empty()) ids.push_back(tokenizer.unk_id());
    // Keep room for the closing [SEP].
    if (static_cast<int>(out.ids.size()) + 1 > max_len - 1) {
      out.truncated = true;
      break;
    }
    out.word_starts[w] = static_cast<int>(out.ids.size());
    for (int id : ids) {
      if (static_cast<int>(out.ids.size()) >= max_len - 1) {
        out.truncated = true;
        break;
      }
      out.ids.push_back(id);
    }
  }
  out.ids.push_back(tokenizer.sep_id());
  if (out.truncated) {
    LogWarning("sentence of " + std::to_string(tokens.size()) + " words truncated to " +
               std::to_string(max_len) + " subword tokens");
  }
  return out;
}

EventModel::EventModel(Encoder enc, AdapterStack adapters, LabelSchema schema, EventTask task,
                       const FinetuneConfig& cfg)
    : encoder(std::move(enc)),
      stack(std::move(adapters)),
      schema_(std::move(schema)),
      task_(task) {
  trigger_tags_ = schema_.TriggerTags(task_);
  const int h = encoder.hidden();
  const int n_trig = static_cast<int>(trigger_tags_.size());
  token_head = Linear("head.token", ParamGroup::kHead, h, n_trig);
  std::mt19937_64 rng(MixSeed(cfg.seed, 0x686561));
  InitNormal(token_head.weight.value, cfg.head_init_std, rng);
  if (task_ == EventTask::kAceSequence) {
    arg_tags_ = schema_.ArgumentTags();
    trigger_crf = CrfParams("head.trigger_crf", ParamGroup::kHead, n_trig);
    arg_head = Linear("head.argument", ParamGroup::kHead, 2 * h + 1,
                      static_cast<int>(arg_tags_.size()));
    InitNormal(arg_head.weight.value, cfg.head_init_std, rng);
    arg_crf = CrfParams("head.argument_crf", ParamGroup::kHead, static_cast<int>(arg_tags_.size()));
    if (cfg.bio_mask) {
      ApplyBioMask(trigger_crf, trigger_tags_);
      ApplyBioMask(arg_crf, arg_tags_);
    }
  }
}

int EventModel::TagIndex(const std::vector<std::string>& tags, const std::string& tag) const {
  auto it = std::find(tags.begin(), tags.end(), tag);
  if (it == tags.end()) throw ValidationError("label '" + tag + "' not in the model's tag set");
  return static_cast<int>(it - tags.begin());
}

Matrix EventModel::WordStates(const EncodedSentence& enc, const Matrix& hidden) const {
  int n = 0;
  while (n < static_cast<int>(enc.word_starts.size()) && enc.word_starts[static_cast<size_t>(n)] >= 0) ++n;
  Matrix words(n, hidden.cols());
  for (int w = 0; w < n; ++w) words.row(w) = hidden.row(enc.word_starts[static_cast<size_t>(w)]);
  return words;
}

Matrix EventModel::ArgumentFeatures(const Matrix& words, const Span& trigger) const {
  const Eigen::Index n = words.rows();
  const Eigen::Index h = words.cols();
  Matrix x(n, 2 * h + 1);
  x.leftCols(h) = words;
  x.middleCols(h, h) = words.row(trigger.begin).replicate(n, 1);
  for (Eigen::Index t = 0; t < n; ++t) {
    x(t, 2 * h) = (t >= trigger.begin && t < trigger.end) ? 1.0 : 0.0;
  }
  return x;
}

Matrix EventModel::TokenDistribution(const std::vector<std::string>& tokens) const {
  const EncodedSentence enc = EncodeSentence(tokens, encoder.tokenizer(), encoder.config().max_len);
  const Matrix words = WordStates(enc, encoder.Forward(enc.ids, {}, &stack, nullptr));
  Matrix dist = Matrix::Zero(static_cast<Eigen::Index>(tokens.size()),
                             static_cast<Eigen::Index>(trigger_tags_.size()));
  if (words.rows() > 0) dist.topRows(words.rows()) = SoftmaxRows(token_head.Forward(words));
  // Words cut by truncation are certainly O.
  for (Eigen::Index w = words.rows(); w < dist.rows(); ++w) dist(w, 0) = 1.0;
  return dist;
}

SentencePrediction EventModel::Predict(const std::vector<std::string>& tokens) const {
  SentencePrediction out;
  out.labels.assign(tokens.size(), "O");
  out.probabilities.assign(tokens.size(), 1.0);
  if (tokens.empty()) return out;
  if (task_ == EventTask::kTempEvalTrigger) {
    const Matrix dist = TokenDistribution(tokens);
    for (Eigen::Index w = 0; w < dist.rows(); ++w) {
      Eigen::Index arg = 0;
      const double p = dist.row(w).maxCoeff(&arg);
      out.labels[static_cast<size_t>(w)] = trigger_tags_[static_cast<size_t>(arg)];
      out.probabilities[static_cast<size_t>(w)] = p;
    }
    return out;
  }
  const EncodedSentence enc = EncodeSentence(tokens, encoder.tokenizer(), encoder.config().max_len);
  const Matrix words = WordStates(enc, encoder.Forward(enc.ids, {}, &stack, nullptr));
  if (words.rows() == 0) return out;
  const Matrix em = token_head.Forward(words);
  const ViterbiResult best = CrfViterbi(trigger_crf, em);
  const Matrix marg = CrfMarginals(trigger_crf, em);
  std::vector<std::string> trig(static_cast<size_t>(words.rows()));
  for (size_t w = 0; w < trig.size(); ++w) {
    trig[w] = trigger_tags_[static_cast<size_t>(best.path[w])];
    out.labels[w] = trig[w];
    out.probabilities[w] = marg(static_cast<Eigen::Index>(w), best.path[w]);
  }
  for (const Span& span : BioToSpans(trig)) {
    const Matrix ae = arg_head.Forward(ArgumentFeatures(words, span));
    const ViterbiResult arg = CrfViterbi(arg_crf, ae);
    std::vector<std::string> col(tokens.size(), "O");
    for (size_t w = 0; w < arg.path.size(); ++w) col[w] = arg_tags_[static_cast<size_t>(arg.path[w])];
    out.argument_tags.push_back(std::move(col));
  }
  return out;
}

EventDataset EventModel::PredictDataset(const EventDataset& data,
                                        std::vector<std::vector<double>>* probabilities) const {
  EventDataset pred = data;
  if (probabilities) probabilities->clear();
  for (auto& doc : pred.documents) {
    for (auto& s : doc.sentences) {
      SentencePrediction p = Predict(s.tokens);
      s.labels = std::move(p.labels);
      s.argument_tags = std::move(p.argument_tags);
      if (probabilities) probabilities->push_back(std::move(p.probabilities));
    }
  }
  return pred;
}

double EventModel::SentenceLoss(const Sentence& s, double scale, bool backward, bool train_encoder) {
  if (s.tokens.empty()) return 0.0;
  const EncodedSentence enc = EncodeSentence(s.tokens, encoder.tokenizer(), encoder.config().max_len);
  EncoderCache cache;
  const Matrix hidden = encoder.Forward(enc.ids, {}, &stack, backward ? &cache : nullptr);
  const Matrix words = WordStates(enc, hidden);
  const Eigen::Index n = words.rows();
  if (n == 0) return 0.0;
  const int h = encoder.hidden();
  Matrix d_words = Matrix::Zero(n, h);
  double loss = 0.0;

  if (task_ == EventTask::kTempEvalTrigger) {
    const Matrix logits = token_head.Forward(words);
    Matrix d_logits = SoftmaxRows(logits);
    for (Eigen::Index w = 0; w < n; ++w) {
      const int gold = TagIndex(trigger_tags_, s.labels[static_cast<size_t>(w)]);
      loss += LogSumExp(logits.row(w)) - logits(w, gold);
      d_logits(w, gold) -= 1.0;
    }
    if (backward) d_words = token_head.Backward(words, d_logits * scale, true);
  } else {
    const std::vector<std::string> gold_tags(s.labels.begin(), s.labels.begin() + n);
    std::vector<int> path(static_cast<size_t>(n));
    for (Eigen::Index w = 0; w < n; ++w) path[static_cast<size_t>(w)] = TagIndex(trigger_tags_, gold_tags[static_cast<size_t>(w)]);
    const Matrix em = token_head.Forward(words);
    loss -= CrfLogLikelihood(trigger_crf, em, path);
    if (backward) {
      const Matrix d_em = CrfNllBackward(trigger_crf, em, path, true, scale);
      d_words = token_head.Backward(words, d_em, true);
    }
    // Argument pass conditioned on gold triggers.
    const auto triggers = BioToSpans(gold_tags);
    for (size_t t = 0; t < triggers.size() && t < s.argument_tags.size(); ++t) {
      const Span& span = triggers[t];
      std::vector<int> apath(static_cast<size_t>(n));
      for (Eigen::Index w = 0; w < n; ++w) {
        apath[static_cast<size_t>(w)] = TagIndex(arg_tags_, s.argument_tags[t][static_cast<size_t>(w)]);
      }
      const Matrix x = ArgumentFeatures(words, span);
      const Matrix ae = arg_head.Forward(x);
      loss -= CrfLogLikelihood(arg_crf, ae, apath);
      if (backward) {
        const Matrix d_ae = CrfNllBackward(arg_crf, ae, apath, true, scale);
        const Matrix dx = arg_head.Backward(x, d_ae, true);
        d_words += dx.leftCols(h);
        d_words.row(span.begin) += dx.middleCols(h, h).colwise().sum();
      }
    }
  }

  if (backward) {
    Matrix d_hidden = Matrix::Zero(hidden.rows(), hidden.cols());
    for (Eigen::Index w = 0; w < n; ++w) d_hidden.row(enc.word_starts[static_cast<size_t>(w)]) = d_words.row(w);
    if (train_encoder) {
      encoder.Backward(cache, d_hidden, &stack, true);
    } else {
      encoder.BackwardFrozen(cache, d_hidden, &stack);
    }
  }
  return loss;
}

std::vector<Param*> EventModel::HeadParams() {
  std::vector<Param*> out = token_head.Params();
  if (task_ == EventTask::kAceSequence) {
    for (Param* p : trigger_crf.Params()) out.push_back(p);
    for (Param* p : arg_head.Params()) out.push_back(p);
    for (Param* p : arg_crf.Params()) out.push_back(p);
  }
  return out;
}

std::vector<Param*> EventModel::TrainableParams(Regime regime) {
  std::vector<Param*> out;
  if (regime == Regime::kFft) {
    out = encoder.Params();
    for (Param* p : stack.Params(ParamGroup::kVerbAdapter)) out.push_back(p);
  }
  for (Param* p : stack.Params(ParamGroup::kTaskAdapter)) out.push_back(p);
  for (Param* p : HeadParams()) out.push_back(p);
  return out;
}

AdapterStack BuildDownstreamStack(const Encoder& encoder, const AdapterStack* verb_adapter,
                                  const FinetuneConfig& cfg) {
  AdapterStack stack;
  switch (cfg.adapter_source) {
    case AdapterSource::kFn:
    case AdapterSource::kVn:
      if (!verb_adapter || !verb_adapter->HasVerb()) {
        throw ValidationError("adapter source " + AdapterSourceName(cfg.adapter_source) +
                              " needs a trained verb adapter");
      }
      stack = *verb_adapter;
      break;
    case AdapterSource::kRandom:
      stack = InsertAdapters(encoder, AdapterPlacement::kAfterFfn, cfg.random_reduction,
                             AdapterInit::kRandom, MixSeed(cfg.seed, 0x726e64), "random",
                             cfg.adapter_init_std);
      break;
    case AdapterSource::kNone:
      break;
  }
  if (cfg.regime != Regime::kFft) {
    stack = StackTaskAdapter(std::move(stack), encoder, cfg.EffectiveTaskReduction(),
                             MixSeed(cfg.seed, 0x7461736b), cfg.adapter_init_std);
  }
  SetFreezing(stack, cfg.regime);
  return stack;
}

const std::vector<std::pair<std::string, Prf>>& FinetuneResult::FinalScores() const {
  if (epoch_scores.empty()) throw ValidationError("fine-tuning ran without an evaluation split");
  return epoch_scores.back().second;
}

std::vector<std::string> SubtaskNames(EventTask task) {
  if (task == EventTask::kTempEvalTrigger) return {"T-ident&class"};
  std::vector<std::string> out;
  for (AceSubtask s : AllAceSubtasks()) out.push_back(AceSubtaskName(s));
  return out;
}

std::vector<std::pair<std::string, Prf>> ScoreEventPredictions(const EventDataset& pred,
                                                               const EventDataset& gold) {
  if (pred.task != gold.task) throw ValidationError("prediction/gold task mismatch");
  std::vector<std::pair<std::string, Prf>> out;
  if (gold.task == EventTask::kTempEvalTrigger) {
    std::vector<std::string> p, g;
    for (const auto* s : Flatten(pred)) p.insert(p.end(), s->labels.begin(), s->labels.end());
    for (const auto* s : Flatten(gold)) g.insert(g.end(), s->labels.begin(), s->labels.end());
    out.emplace_back("T-ident&class", TokenF1(p, g));
    return out;
  }
  const auto pe = ExtractEvents(pred);
  const auto ge = ExtractEvents(gold);
  for (AceSubtask s : AllAceSubtasks()) out.emplace_back(AceSubtaskName(s), AceSpanF1(pe, ge, s));
  return out;
}

FinetuneResult FinetuneEventModel(const Encoder& encoder, const AdapterStack* verb_adapter,
                                  const EventDataset& train, const EventDataset* eval,
                                  const FinetuneConfig& cfg) {
  if (cfg.epochs < 1 || cfg.batch_size < 1) throw ValidationError("epochs and batch size must be >= 1");
  if (eval && eval->task != train.task) throw ValidationError("train/eval task mismatch");
  CheckFinetuneGrid(cfg, train.task);
  FinetuneResult result;
  result.model.emplace(encoder, BuildDownstreamStack(encoder, verb_adapter, cfg),
                       LabelSchema::FromData(train), train.task, cfg);
  EventModel& model = *result.model;
  const bool train_encoder = cfg.regime == Regime::kFft;
  const std::vector<Param*> params = model.TrainableParams(cfg.regime);
  const std::vector<const Sentence*> sentences = Flatten(train);
  if (sentences.empty()) throw ValidationError("training split has no sentences");
  Adam adam(cfg.adam);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<size_t> order(sentences.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(MixSeed(cfg.seed, 0x65706f63 + static_cast<uint64_t>(epoch)));
    DeterministicShuffle(order, rng);
    double epoch_loss = 0.0;
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.batch_size)) {
      const size_t stop = std::min(order.size(), start + static_cast<size_t>(cfg.batch_size));
      const double scale = 1.0 / static_cast<double>(stop - start);
      ZeroGrads(params);
      double loss = 0.0;
      for (size_t i = start; i < stop; ++i) {
        loss += model.SentenceLoss(*sentences[order[i]], scale, true, train_encoder);
      }
      if (!std::isfinite(loss)) {
        std::ostringstream msg;
        msg << "non-finite fine-tuning loss at epoch " << epoch + 1 << " (grad norm "
            << GradNorm(params) << ", lr " << cfg.adam.learning_rate << ")";
        throw DivergenceError(msg.str());
      }
      epoch_loss += loss;
      adam.Step(params);
    }
    result.log.push_back({epoch + 1, epoch_loss / static_cast<double>(sentences.size()), std::nullopt});
    const bool last = epoch + 1 == cfg.epochs;
    const bool requested = std::find(cfg.eval_at_epochs.begin(), cfg.eval_at_epochs.end(),
                                     epoch + 1) != cfg.eval_at_epochs.end();
    if (eval && (last || requested)) {
      result.epoch_scores.emplace_back(epoch + 1,
                                       ScoreEventPredictions(model.PredictDataset(*eval), *eval));
    }
  }
  return result;
}

GridSelection AceGridSearch(const Encoder& encoder, const AdapterStack* verb_adapter,
                            const EventDataset& train, const EventDataset* dev,
                            const FinetuneConfig& base, const std::vector<double>& learning_rates,
                            const std::vector<int>& epochs) {
  if (learning_rates.empty() || epochs.empty()) throw ValidationError("empty hyperparameter grid");
  const int max_epochs = *std::max_element(epochs.begin(), epochs.end());
  std::vector<std::future<FinetuneResult>> jobs;
  for (double lr : learning_rates) {
    FinetuneConfig cfg = base;
    cfg.adam.learning_rate = lr;
    cfg.epochs = max_epochs;
    cfg.eval_at_epochs = epochs;
    jobs.push_back(std::async(std::launch::async, [&, cfg]() {
      return FinetuneEventModel(encoder, verb_adapter, train, dev, cfg);
    }));
  }
  GridSelection best;
  best.rule = dev ? "dev-f1" : "train-loss";
  bool have = false;
  for (size_t i = 0; i < jobs.size(); ++i) {
    const FinetuneResult r = jobs[i].get();
    for (int n : epochs) {
      double criterion = 0.0;
      if (dev) {
        auto it = std::find_if(r.epoch_scores.begin(), r.epoch_scores.end(),
                               [n](const auto& e) { return e.first == n; });
        double sum = 0.0;
        for (const auto& [name, prf] : it->second) sum += prf.f1;
        criterion = sum / static_cast<double>(it->second.size());
      } else {
        criterion = -r.log[static_cast<size_t>(n - 1)].loss;
      }
      if (!have || criterion > best.criterion) {
        best.learning_rate = learning_rates[i];
        best.epochs = n;
        best.criterion = criterion;
        have = true;
      }
    }
  }
  std::ostringstream msg;
  msg << "grid search selected lr=" << best.learning_rate << " epochs=" << best.epochs << " by "
      << (dev ? "mean dev F1 over subtasks" : "final-epoch training loss (no dev split)");
  LogInfo(msg.str());
  return best;
}

void WritePredictionsConll(const EventDataset& pred,
                           const std::vector<std::vector<double>>& probabilities,
                           const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path);
  size_t si = 0;
  out << std::setprecision(6);
  for (const auto& doc : pred.documents) {
    out << "-DOCSTART- " << doc.id << "\n\n";
    for (const auto& s : doc.sentences) {
      const auto* probs = si < probabilities.size() ? &probabilities[si] : nullptr;
      for (size_t i = 0; i < s.tokens.size(); ++i) {
        out << s.tokens[i] << '\t' << s.labels[i];
        for (const auto& col : s.argument_tags) out << '\t' << col[i];
        out << '\t' << (probs ? (*probs)[i] : 1.0) << '\n';
      }
      out << '\n';
      ++si;
    }
  }
}

EventDataset ReadPredictionsConll(const std::string& path, EventTask task,
                                  const std::string& language,
                                  std::vector<std::vector<double>>* probabilities) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read " + path);
  std::string line, text;
  std::vector<std::vector<double>> probs;
  std::vector<double> current;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (Trim(line).empty() || line.rfind("-DOCSTART-", 0) == 0) {
      if (!current.empty()) probs.push_back(std::move(current));
      current.clear();
      text += line + '\n';
      continue;
    }
    const auto tab = line.rfind('\t');
    const std::string locus = path + ":" + std::to_string(line_no);
    if (tab == std::string::npos) throw ParseError(locus, "missing probability column");
    try {
      size_t used = 0;
      const std::string field = line.substr(tab + 1);
      current.push_back(std::stod(field, &used));
      if (used != field.size()) throw std::invalid_argument(field);
    } catch (const std::exception&) {
      throw ParseError(locus, "bad probability '" + line.substr(tab + 1) + "'");
    }
    text += line.substr(0, tab) + '\n';
  }
  if (!current.empty()) probs.push_back(std::move(current));
  if (probabilities) *probabilities = std::move(probs);
  return ParseEventConll(text, path, task, Split::kTest, language);
}

}  // namespace verbknow
