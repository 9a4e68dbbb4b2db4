// verbknow: command-line front end for constraint extraction, verb-adapter
// training, event fine-tuning, cross-lingual transfer and scoring.

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "verbknow/checkpoint.h"
#include "verbknow/common.h"
#include "verbknow/event_model.h"
#include "verbknow/lexicon.h"
#include "verbknow/pipeline.h"
#include "verbknow/sampling.h"
#include "verbknow/synthetic.h"
#include "verbknow/transfer.h"
#include "verbknow/verb_training.h"

namespace fs = std::filesystem;
using namespace verbknow;

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitDivergence = 3;

// Options that locate or parallelize a run without changing its results.
const std::set<std::string> kUnhashedOptions = {"out-dir", "threads"};

void RequireFile(const std::string& path, const std::string& what) {
  if (!fs::is_regular_file(path)) throw ValidationError(what + " not found: " + path);
}

std::vector<std::string> SplitList(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (!Trim(item).empty()) out.push_back(Trim(item));
  }
  return out;
}

std::vector<double> ParseDoubles(const std::string& s) {
  std::vector<double> out;
  for (const auto& t : SplitList(s)) {
    try {
      out.push_back(std::stod(t));
    } catch (const std::exception&) {
      throw ValidationError("not a number: '" + t + "'");
    }
  }
  return out;
}

std::vector<int> ParseInts(const std::string& s) {
  std::vector<int> out;
  for (double d : ParseDoubles(s)) out.push_back(static_cast<int>(d));
  return out;
}

// Effective values of every named option as <command>.<option>=value, the
// form the --config reader accepts, so config.txt re-runs the command.
KvConfig OptionsConfig(const CLI::App& app) {
  KvConfig cfg;
  const std::string prefix = app.get_name() + ".";
  for (const CLI::Option* opt : app.get_options()) {
    if (opt->get_lnames().empty()) continue;
    const std::string& name = opt->get_lnames().front();
    if (name == "help" || name == "config" || kUnhashedOptions.count(name)) continue;
    if (opt->get_expected_max() == 0) {
      cfg.Set(prefix + name, opt->count() > 0 && opt->as<bool>());
      continue;
    }
    std::string value;
    if (opt->count() > 0) {
      for (const auto& r : opt->results()) value += (value.empty() ? "" : ",") + r;
    } else {
      value = opt->get_default_str();
    }
    if (!Trim(value).empty()) cfg.Set(prefix + name, Trim(value));
  }
  return cfg;
}

std::string ResolveOutDir(const std::string& out_dir, const std::string& command,
                          const KvConfig& cfg) {
  if (!out_dir.empty()) return out_dir;
  return OutputRoot() + "/" + command + "-" + cfg.Hash().substr(0, 8);
}

// First column of every token row of a CoNLL file.
std::vector<std::string> ConllTokens(const std::string& path) {
  RequireFile(path, "data file");
  std::ifstream in(path);
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    if (Trim(line).empty() || line.rfind("-DOCSTART-", 0) == 0) continue;
    out.push_back(line.substr(0, line.find('\t')));
  }
  return out;
}

struct EncoderOptions {
  std::string flavor = "tiny-desk";
  std::string checkpoint;
  uint64_t seed = 7;
  std::string seed_vectors;
  std::string vocab_data;

  void Add(CLI::App* app) {
    app->add_option("--encoder", flavor, "Encoder flavor; pretrained-external needs --encoder-checkpoint")
        ->check(CLI::IsMember({"tiny-desk", "pretrained-external"}));
    app->add_option("--encoder-checkpoint", checkpoint, "Load the encoder from a checkpoint");
    app->add_option("--encoder-seed", seed, "Initialization seed of a fresh tiny-desk encoder");
    app->add_option("--seed-vectors", seed_vectors,
                    "Word vectors copied into the token embeddings (dim = hidden - 1)");
    app->add_option("--vocab-data", vocab_data,
                    "Comma-separated CoNLL files whose tokens join the tiny-desk vocabulary");
  }

  void AddInputs(RunInputs* inputs) const {
    if (!checkpoint.empty()) inputs->paths["encoder"] = checkpoint;
    if (!seed_vectors.empty()) inputs->paths["seed_vectors"] = seed_vectors;
    int i = 0;
    for (const auto& f : SplitList(vocab_data)) inputs->paths["vocab_data." + std::to_string(i++)] = f;
  }

  // Loads the checkpoint, or builds a tiny-desk encoder over `words` plus the
  // tokens of --vocab-data.
  Encoder Resolve(std::vector<std::string> words) const {
    if (!checkpoint.empty()) {
      RequireFile(checkpoint, "encoder checkpoint");
      Encoder enc = LoadEncoder(checkpoint);
      if (EncoderFlavorName(enc.config().flavor) != flavor) {
        throw ValidationError(checkpoint + " holds a " + EncoderFlavorName(enc.config().flavor) +
                              " encoder but --encoder is " + flavor);
      }
      return enc;
    }
    if (flavor != "tiny-desk") {
      throw ValidationError("--encoder " + flavor + " needs --encoder-checkpoint (see tools/convert_bert.py)");
    }
    for (const auto& f : SplitList(vocab_data)) {
      const auto t = ConllTokens(f);
      words.insert(words.end(), t.begin(), t.end());
    }
    std::vector<std::string> pieces;
    for (const auto& w : words) {
      std::string spaced = w;
      for (char& c : spaced) {
        if (c == '_') c = ' ';
      }
      std::istringstream in(ToLower(spaced));
      std::string p;
      while (in >> p) pieces.push_back(p);
    }
    auto tok = std::make_shared<const WordPieceTokenizer>(BuildWordVocabulary(pieces));
    Encoder enc = Encoder::TinyDesk(TinyDeskConfig(), tok, seed);
    if (!seed_vectors.empty()) {
      RequireFile(seed_vectors, "seed vectors");
      SeedTokenEmbeddings(enc, ReadEmbeddingText(seed_vectors, "seed"));
    }
    return enc;
  }
};

struct AdapterOptions {
  int epochs = 30;
  double lr = 1e-4;
  int reduction = 16;
  std::string scheme = "ccr";
  int batch_positives = 16;
  uint64_t seed = 0;
  int patience = 0;
  double validation_fraction = 0.05;
  double init_std = 0.02;

  void Add(CLI::App* app) {
    app->add_option("--epochs", epochs, "Training epochs")->check(CLI::PositiveNumber);
    app->add_option("--lr", lr, "Adam learning rate");
    app->add_option("--reduction", reduction, "Adapter reduction factor")->check(CLI::PositiveNumber);
    app->add_option("--scheme", scheme, "Negative scheme: cc, ccr or ccrr");
    app->add_option("--batch-positives", batch_positives, "Positive pairs per batch");
    app->add_option("--seed", seed, "Training seed");
    app->add_option("--patience", patience, "Early-stopping patience in epochs (0 disables)");
    app->add_option("--validation-fraction", validation_fraction, "Held-out share for early stopping");
    app->add_option("--init-std", init_std, "Adapter initialization std");
  }

  VerbTrainConfig Config(const std::string& resource, const std::string& language) const {
    VerbTrainConfig cfg;
    cfg.epochs = epochs;
    cfg.adam.learning_rate = lr;
    cfg.reduction = reduction;
    cfg.sampling = SamplingConfig::FromScheme(scheme, batch_positives);
    cfg.seed = seed;
    if (patience > 0) cfg.early_stopping = EarlyStopping{patience, validation_fraction};
    cfg.adapter_init_std = init_std;
    cfg.resource = resource;
    cfg.language = language;
    return cfg;
  }
};

struct StmOptions {
  int slices = StmConfig{}.slices;
  int hidden = StmConfig{}.hidden;
  int epochs = StmConfig{}.max_epochs;
  double lr = StmConfig{}.adam.learning_rate;
  int batch_size = StmConfig{}.batch_size;
  uint64_t seed = 0;

  void Add(CLI::App* app) {
    app->add_option("--stm-slices", slices, "STM slices");
    app->add_option("--stm-hidden", hidden, "STM projection size");
    app->add_option("--stm-epochs", epochs, "STM training epochs");
    app->add_option("--stm-lr", lr, "STM learning rate");
    app->add_option("--stm-batch-size", batch_size, "STM batch size");
    app->add_option("--stm-seed", seed, "STM seed");
  }

  StmConfig Config() const {
    StmConfig cfg;
    cfg.slices = slices;
    cfg.hidden = hidden;
    cfg.max_epochs = epochs;
    cfg.adam.learning_rate = lr;
    cfg.batch_size = batch_size;
    cfg.seed = seed;
    return cfg;
  }
};

struct SpaceOptions {
  std::string source_vectors;
  std::string target_vectors;
  std::string source_language = "en";
  std::string target_language;
  std::string alignment_tag = "aligned";

  void Add(CLI::App* app, bool need_source) {
    auto* s = app->add_option("--source-vectors", source_vectors, "Source-language word vectors");
    if (need_source) s->required();
    app->add_option("--target-vectors", target_vectors, "Target-language word vectors")->required();
    app->add_option("--source-language", source_language, "Source language code");
    app->add_option("--target-language", target_language, "Target language code")->required();
    app->add_option("--alignment-tag", alignment_tag, "Shared space tag of both vector files");
  }
  EmbeddingSpace Source() const {
    RequireFile(source_vectors, "source vectors");
    return ReadEmbeddingText(source_vectors, source_language, alignment_tag);
  }
  EmbeddingSpace Target() const {
    RequireFile(target_vectors, "target vectors");
    return ReadEmbeddingText(target_vectors, target_language, alignment_tag);
  }
};

std::string Fixed(double v, int digits = 2) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << v;
  return s.str();
}

// ---- commands ----

struct ExtractArgs {
  std::string format = "generic-class-map", in, out, language = "en", resource;
  bool stats = false;
};

void RunExtract(const ExtractArgs& a) {
  if (!fs::exists(a.in)) throw ValidationError("lexicon input not found: " + a.in);
  LoadOptions opts;
  opts.language = a.language;
  opts.resource_name = a.resource;
  const LoadResult loaded = LoadLexicon(a.in, ParseLexiconFormat(a.format), opts);
  const ConstraintSet pairs = GeneratePositivePairs(loaded.lexicon);
  WriteConstraintsTsv(pairs, a.out);
  if (a.stats) std::cout << FormatLexiconStats(ComputeLexiconStats(loaded.lexicon));
  std::cerr << "wrote " << pairs.size() << " pairs to " << a.out << "\n";
}

struct SampleArgs {
  std::string constraints, embeddings, language = "en", scheme = "ccr", out;
  int batch_positives = 16, batches = 10;
  uint64_t seed = 0;
};

void RunSampleDebug(const SampleArgs& a) {
  RequireFile(a.constraints, "constraints");
  RequireFile(a.embeddings, "embeddings");
  const ConstraintSet pairs = ReadConstraintsTsv(a.constraints);
  const EmbeddingSpace space = ReadEmbeddingText(a.embeddings, a.language);
  BatchStream stream(pairs, pairs, space, SamplingConfig::FromScheme(a.scheme, a.batch_positives, a.seed));
  if (stream.BatchesPerEpoch() == 0) throw ValidationError("fewer positives than one batch");
  std::vector<TrainingBatch> batches;
  SamplingCounters counters;
  for (int i = 0; i < a.batches; ++i) {
    batches.push_back(stream.Next());
    counters += batches.back().counters;
  }
  WriteBatchTsv(batches, a.out);
  std::cout << "batches=" << batches.size() << " batch_size=" << batches.front().instances.size()
            << " oov_fallbacks=" << counters.oov_fallbacks
            << " exhausted_fallbacks=" << counters.exhausted_fallbacks
            << " skipped=" << counters.skipped << "\n";
}

struct TrainArgs {
  std::string constraints, embeddings, language = "en", resource = "verb", out_dir;
  bool save_epochs = false;
  EncoderOptions encoder;
  AdapterOptions adapter;
};

void RunTrainAdapter(const TrainArgs& a, const KvConfig& cfg) {
  RequireFile(a.constraints, "constraints");
  RequireFile(a.embeddings, "embeddings");
  const std::string dir = ResolveOutDir(a.out_dir, "train-adapter", cfg);
  RunInputs inputs;
  inputs.paths["constraints"] = a.constraints;
  inputs.paths["embeddings"] = a.embeddings;
  a.encoder.AddInputs(&inputs);
  BeginRun(dir, "train-adapter", cfg, inputs);

  const ConstraintSet pairs = ReadConstraintsTsv(a.constraints);
  const EmbeddingSpace space = ReadEmbeddingText(a.embeddings, a.language);
  const auto lemmas = pairs.Lemmas();
  const Encoder enc = a.encoder.Resolve({lemmas.begin(), lemmas.end()});
  SaveEncoder(dir + "/encoder.ckpt", enc);

  VerbTrainConfig tc = a.adapter.Config(a.resource, a.language);
  if (a.save_epochs) tc.checkpoint_dir = dir + "/epochs";
  const VerbTrainResult r = TrainVerbAdapter(enc, pairs, space, tc);
  AdapterCheckpointInfo info{a.resource, a.language, tc.reduction, enc.hidden(),
                             enc.config().num_layers, tc.Hash()};
  SaveAdapterCheckpoint(dir + "/adapter.ckpt", r.stack, info, r.head.Params());
  WriteTrainingLogCsv(r.log, dir + "/train_log.csv");

  KvConfig out;
  out.Set("encoder", dir + "/encoder.ckpt");
  out.Set("adapter", dir + "/adapter.ckpt");
  out.Set("adapter_hash", HashFile(dir + "/adapter.ckpt"));
  out.Set("epochs_run", r.epochs_run);
  out.Set("final_loss", r.log.back().loss);
  out.Set("train_config_hash", tc.Hash());
  FinishRun(dir, out);
  std::cout << "trained " << r.epochs_run << " epochs, final loss " << Fixed(r.log.back().loss, 4)
            << "\nrun directory: " << dir << "\n";
}

struct FinetuneArgs {
  std::string task, train, test, dev, language = "en", regime = "ta", adapter = "none", adapter_ckpt;
  std::string seeds = "auto", grid_lrs, grid_epochs, out_dir;
  int runs = 1, epochs = 10, batch_size = 32, task_reduction = 16, random_reduction = 16;
  double lr = 1e-4;
  uint64_t base_seed = 0;
  bool no_bio_mask = false;
  int threads = 0;
  EncoderOptions encoder;
};

void RunFinetune(const FinetuneArgs& a, const KvConfig& cfg) {
  const EventTask task = ParseEventTask(a.task);
  FinetuneConfig fc;
  fc.regime = ParseRegime(a.regime);
  fc.adapter_source = ParseAdapterSource(a.adapter);
  fc.epochs = a.epochs;
  fc.batch_size = a.batch_size;
  fc.adam.learning_rate = a.lr;
  fc.task_reduction = a.task_reduction;
  fc.random_reduction = a.random_reduction;
  fc.bio_mask = !a.no_bio_mask;
  const bool needs_adapter =
      fc.adapter_source == AdapterSource::kFn || fc.adapter_source == AdapterSource::kVn;
  if (needs_adapter && a.adapter_ckpt.empty()) {
    throw ValidationError("--adapter " + a.adapter + " needs --adapter-ckpt");
  }
  if (!a.adapter_ckpt.empty() && a.encoder.checkpoint.empty()) {
    throw ValidationError("an adapter checkpoint is tied to its encoder; pass --encoder-checkpoint");
  }
  RequireFile(a.train, "training data");
  RequireFile(a.test, "test data");
  if (!a.dev.empty()) RequireFile(a.dev, "dev data");
  const std::vector<uint64_t> seeds = ResolveSeeds(a.seeds, a.runs, a.base_seed);

  const std::string dir = ResolveOutDir(a.out_dir, "finetune", cfg);
  RunInputs inputs;
  inputs.paths["train"] = a.train;
  inputs.paths["test"] = a.test;
  if (!a.dev.empty()) inputs.paths["dev"] = a.dev;
  if (!a.adapter_ckpt.empty()) inputs.paths["adapter"] = a.adapter_ckpt;
  a.encoder.AddInputs(&inputs);
  BeginRun(dir, "finetune", cfg, inputs);

  std::string seed_list;
  for (uint64_t s : seeds) seed_list += (seed_list.empty() ? "" : ",") + std::to_string(s);
  LogInfo("seeds: " + seed_list);

  const EventDataset train = ReadEventConll(a.train, task, Split::kTrain, "en");
  const EventDataset test = ReadEventConll(a.test, task, Split::kTest, a.language);
  std::optional<EventDataset> dev;
  if (!a.dev.empty()) dev = ReadEventConll(a.dev, task, Split::kDev, "en");

  std::vector<std::string> words = ConllTokens(a.train);
  for (const auto& t : ConllTokens(a.test)) words.push_back(t);
  if (dev) {
    for (const auto& t : ConllTokens(a.dev)) words.push_back(t);
  }
  const Encoder enc = a.encoder.Resolve(words);
  if (a.encoder.checkpoint.empty()) SaveEncoder(dir + "/encoder.ckpt", enc);
  std::optional<AdapterStack> verb;
  if (needs_adapter) verb = LoadAdapterCheckpoint(a.adapter_ckpt, enc);

  KvConfig out;
  if (!a.grid_lrs.empty() || !a.grid_epochs.empty()) {
    const auto lrs = a.grid_lrs.empty() ? std::vector<double>{a.lr} : ParseDoubles(a.grid_lrs);
    const auto eps = a.grid_epochs.empty() ? std::vector<int>{a.epochs} : ParseInts(a.grid_epochs);
    FinetuneConfig gc = fc;
    gc.seed = seeds.front();
    const GridSelection sel =
        AceGridSearch(enc, verb ? &*verb : nullptr, train, dev ? &*dev : nullptr, gc, lrs, eps);
    fc.adam.learning_rate = sel.learning_rate;
    fc.epochs = sel.epochs;
    out.Set("grid.learning_rate", sel.learning_rate);
    out.Set("grid.epochs", sel.epochs);
    out.Set("grid.rule", sel.rule);
    LogInfo("grid search picked lr=" + std::to_string(sel.learning_rate) +
            " epochs=" + std::to_string(sel.epochs) + " by " + sel.rule);
  }

  fs::create_directories(dir + "/predictions");
  const int threads = a.threads > 0 ? a.threads : WorkerThreads();
  ScoreReport report;
  report.task = EventTaskName(task);
  report.language = a.language;
  report.regime = RegimeName(fc.regime);
  report.scorer = task == EventTask::kTempEvalTrigger ? "token-f1" : "span-f1";
  report.baseline = ConditionName(AdapterSource::kNone);
  report.subtasks = SubtaskNames(task);
  report.conditions.push_back(RunCondition(
      enc, verb ? &*verb : nullptr, train, test, fc, seeds, threads,
      [&](size_t i, const EventModel& model) {
        std::vector<std::vector<double>> probs;
        const EventDataset pred = model.PredictDataset(test, &probs);
        std::ostringstream name;
        name << dir << "/predictions/run_" << std::setw(2) << std::setfill('0') << i << ".conll";
        WritePredictionsConll(pred, probs, name.str());
      }));
  WriteReport(report, dir + "/report.txt");

  out.Set("seeds", seed_list);
  out.Set("report", dir + "/report.txt");
  for (const auto& sub : report.subtasks) {
    out.Set("mean_f1." + sub, report.conditions.front().MeanF1(sub));
  }
  FinishRun(dir, out);
  std::cout << "seeds: " << seed_list << "\n" << FormatReportTable(report) << "run directory: " << dir << "\n";
}

struct TranslateArgs {
  std::string constraints, out, dictionary_out;
  bool csls = false;
  int csls_k = 10;
  SpaceOptions spaces;
};

void RunTranslate(const TranslateArgs& a) {
  RequireFile(a.constraints, "constraints");
  const ConstraintSet pairs = ReadConstraintsTsv(a.constraints);
  const EmbeddingSpace src = a.spaces.Source(), tgt = a.spaces.Target();
  const TranslationResult r = TranslatePairs(pairs, AlignedSpacePair{&src, &tgt},
                                             TranslateOptions{a.csls, a.csls_k});
  ConstraintSet translated = r.pairs;
  translated.set_language(a.spaces.target_language);
  WriteConstraintsTsv(translated, a.out);
  if (!a.dictionary_out.empty()) {
    std::ofstream d(a.dictionary_out);
    if (!d) throw ValidationError("cannot write " + a.dictionary_out);
    for (const auto& [s, t] : r.dictionary) d << s << '\t' << t << '\n';
  }
  std::cout << "input=" << r.input_pairs << " translated=" << r.pairs.size()
            << " oov_dropped=" << r.oov_dropped << " collapsed_dropped=" << r.collapsed_dropped
            << " duplicates_merged=" << r.duplicates_merged << "\n";
}

struct FilterArgs {
  std::string constraints, target_vectors, target_language, alignment_tag = "aligned", stm;
  std::string train_constraints, source_vectors, source_language = "en", out, stm_out;
  StmOptions stm_opts;
};

void RunFilter(const FilterArgs& a) {
  RequireFile(a.constraints, "constraints");
  RequireFile(a.target_vectors, "target vectors");
  const ConstraintSet noisy = ReadConstraintsTsv(a.constraints);
  const EmbeddingSpace tgt = ReadEmbeddingText(a.target_vectors, a.target_language, a.alignment_tag);
  StmModel model;
  if (!a.stm.empty()) {
    RequireFile(a.stm, "STM archive");
    model = StmModel::Load(a.stm);
  } else {
    if (a.train_constraints.empty() || a.source_vectors.empty()) {
      throw ValidationError("pass --stm, or --train-constraints with --source-vectors");
    }
    RequireFile(a.train_constraints, "training constraints");
    RequireFile(a.source_vectors, "source vectors");
    const EmbeddingSpace src = ReadEmbeddingText(a.source_vectors, a.source_language, a.alignment_tag);
    const StmTrainResult t = TrainStm(ReadConstraintsTsv(a.train_constraints), src, a.stm_opts.Config());
    std::cout << "stm train accuracy=" << Fixed(t.final_accuracy(), 4) << "\n";
    model = t.model;
  }
  if (!a.stm_out.empty()) model.Save(a.stm_out);
  const FilterResult r = StmFilter(noisy, model, tgt);
  ConstraintSet kept = r.kept;
  kept.set_language(a.target_language);
  WriteConstraintsTsv(kept, a.out);
  std::cout << "input=" << r.input_pairs << " kept=" << r.kept.size() << " oov_dropped=" << r.oov_dropped
            << " retention=" << Fixed(r.retention, 4) << "\n";
}

struct VtransArgs {
  std::string constraints, resource = "verb", out_dir;
  bool csls = false;
  int csls_k = 10;
  SpaceOptions spaces;
  StmOptions stm;
  AdapterOptions adapter;
  EncoderOptions encoder;
};

void RunVtransCommand(const VtransArgs& a, const KvConfig& cfg) {
  RequireFile(a.constraints, "constraints");
  const std::string dir = ResolveOutDir(a.out_dir, "vtrans", cfg);
  RunInputs inputs;
  inputs.paths["constraints"] = a.constraints;
  inputs.paths["source_vectors"] = a.spaces.source_vectors;
  inputs.paths["target_vectors"] = a.spaces.target_vectors;
  a.encoder.AddInputs(&inputs);
  BeginRun(dir, "vtrans", cfg, inputs);

  const ConstraintSet pairs = ReadConstraintsTsv(a.constraints);
  const EmbeddingSpace src = a.spaces.Source(), tgt = a.spaces.Target();
  const Encoder enc = a.encoder.Resolve(tgt.vocabulary());
  SaveEncoder(dir + "/encoder.ckpt", enc);

  VtransConfig vc;
  vc.translate = TranslateOptions{a.csls, a.csls_k};
  vc.stm = a.stm.Config();
  vc.adapter = a.adapter.Config(a.resource, a.spaces.target_language);
  vc.output_dir = dir + "/stages";
  const VtransResult r = RunVtrans(pairs, AlignedSpacePair{&src, &tgt}, enc, vc);

  KvConfig out;
  out.Set("encoder", dir + "/encoder.ckpt");
  out.Set("adapter", vc.output_dir + "/adapter.ckpt");
  out.Set("translated_pairs", static_cast<uint64_t>(r.translation.pairs.size()));
  out.Set("purified_pairs", static_cast<uint64_t>(r.filtered.kept.size()));
  out.Set("retention", r.filtered.retention);
  FinishRun(dir, out);
  std::cout << "translated=" << r.translation.pairs.size() << " purified=" << r.filtered.kept.size()
            << " retention=" << Fixed(r.filtered.retention, 4) << "\nrun directory: " << dir << "\n";
}

struct EvaluateArgs {
  std::string task, pred, gold, language = "en", report_out, condition = "baseline", regime = "ta";
};

void RunEvaluate(const EvaluateArgs& a) {
  RequireFile(a.pred, "predictions");
  RequireFile(a.gold, "gold data");
  const EventTask task = ParseEventTask(a.task);
  const EventDataset pred = ReadPredictionsConll(a.pred, task, a.language);
  const EventDataset gold = ReadEventConll(a.gold, task, Split::kTest, a.language);
  const auto scores = ScoreEventPredictions(pred, gold);
  for (const auto& [name, prf] : scores) {
    std::cout << name << "\tP=" << Fixed(prf.precision) << "\tR=" << Fixed(prf.recall)
              << "\tF1=" << Fixed(prf.f1) << "\n";
  }
  if (!a.report_out.empty()) {
    ScoreReport report;
    report.task = EventTaskName(task);
    report.language = a.language;
    report.regime = a.regime;
    report.scorer = task == EventTask::kTempEvalTrigger ? "token-f1" : "span-f1";
    report.baseline = "baseline";
    report.subtasks = SubtaskNames(task);
    report.conditions.push_back(ConditionResult{a.condition, {RunScore{0, scores}}});
    WriteReport(report, a.report_out);
  }
}

struct ReportArgs {
  std::vector<std::string> inputs;
  std::string baseline, out;
};

void RunReport(const ReportArgs& a) {
  ScoreReport merged;
  for (size_t i = 0; i < a.inputs.size(); ++i) {
    RequireFile(a.inputs[i], "report");
    const ScoreReport r = ReadReport(a.inputs[i]);
    if (i == 0) {
      merged = r;
      merged.conditions.clear();
    } else if (r.task != merged.task || r.language != merged.language || r.subtasks != merged.subtasks) {
      throw ValidationError(a.inputs[i] + " scores a different task, language or subtask set");
    } else if (r.regime != merged.regime) {
      merged.regime = "mixed";
    }
    for (const auto& c : r.conditions) {
      if (merged.Find(c.name)) throw ValidationError("condition '" + c.name + "' appears twice");
      merged.conditions.push_back(c);
    }
  }
  if (!a.baseline.empty()) merged.baseline = a.baseline;
  std::cout << FormatReportTable(merged);
  if (!a.out.empty()) WriteReport(merged, a.out);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Verb-knowledge adapters for event extraction"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);
  bool quiet = false;
  app.add_flag("-q,--quiet", quiet, "Silence warnings and progress");

  std::function<void()> run;
  app.set_config("--config", "",
                 "Read <command>.<option>=value lines, e.g. a run's config.txt");

  ExtractArgs ex;
  auto* c_ex = app.add_subcommand("extract-constraints", "Lexicon -> positive pair TSV");
  c_ex->add_option("--format", ex.format, "generic-class-map, verbnet-xml or framenet-lu");
  c_ex->add_option("--in", ex.in, "Lexicon file or directory")->required();
  c_ex->add_option("--out", ex.out, "Output TSV")->required();
  c_ex->add_option("--language", ex.language, "Language code");
  c_ex->add_option("--resource", ex.resource, "Resource name (defaults to the format)");
  c_ex->add_flag("--stats", ex.stats, "Print class and pair counts");
  c_ex->callback([&] { run = [&] { RunExtract(ex); }; });

  SampleArgs sa;
  auto* c_sa = app.add_subcommand("sample-debug", "Dump training batches as TSV");
  c_sa->add_option("--constraints", sa.constraints, "Positive pair TSV")->required();
  c_sa->add_option("--embeddings", sa.embeddings, "Word vectors for controlled negatives")->required();
  c_sa->add_option("--language", sa.language, "Language code");
  c_sa->add_option("--scheme", sa.scheme, "Negative scheme: cc, ccr or ccrr");
  c_sa->add_option("--batch-positives", sa.batch_positives, "Positive pairs per batch");
  c_sa->add_option("--batches", sa.batches, "Batches to dump")->check(CLI::PositiveNumber);
  c_sa->add_option("--seed", sa.seed, "Sampling seed");
  c_sa->add_option("--out", sa.out, "Output TSV")->required();
  c_sa->callback([&] { run = [&] { RunSampleDebug(sa); }; });

  TrainArgs tr;
  auto* c_tr = app.add_subcommand("train-adapter", "Train a verb adapter on constraints");
  c_tr->add_option("--constraints", tr.constraints, "Positive pair TSV")->required();
  c_tr->add_option("--embeddings", tr.embeddings, "Word vectors for controlled negatives")->required();
  c_tr->add_option("--language", tr.language, "Language code");
  c_tr->add_option("--resource", tr.resource, "Resource tag stored in the checkpoint (fn, vn, ...)");
  c_tr->add_option("--out-dir", tr.out_dir, "Run directory");
  c_tr->add_flag("--save-epochs", tr.save_epochs, "Keep a checkpoint per epoch");
  tr.encoder.Add(c_tr);
  tr.adapter.Add(c_tr);
  c_tr->callback([&] { run = [&, c_tr] { RunTrainAdapter(tr, OptionsConfig(*c_tr)); }; });

  FinetuneArgs ft;
  auto* c_ft = app.add_subcommand("finetune", "Fine-tune and score an event model");
  c_ft->add_option("--task", ft.task, "tempeval or ace")->required();
  c_ft->add_option("--train", ft.train, "Training CoNLL")->required();
  c_ft->add_option("--test", ft.test, "Test CoNLL")->required();
  c_ft->add_option("--dev", ft.dev, "Dev CoNLL for the grid search");
  c_ft->add_option("--language", ft.language, "Language of the test data");
  c_ft->add_option("--regime", ft.regime, "Training regime")->check(CLI::IsMember({"fft", "ta", "2ta"}));
  c_ft->add_option("--adapter", ft.adapter, "Verb adapter source")
      ->check(CLI::IsMember({"fn", "vn", "random", "none"}));
  c_ft->add_option("--adapter-ckpt", ft.adapter_ckpt, "Verb adapter checkpoint (fn/vn)");
  c_ft->add_option("--runs", ft.runs, "Number of runs")->check(CLI::PositiveNumber);
  c_ft->add_option("--seeds", ft.seeds, "'auto' or a comma list of seeds");
  c_ft->add_option("--base-seed", ft.base_seed, "Base of the derived seeds");
  c_ft->add_option("--epochs", ft.epochs, "Epochs")->check(CLI::PositiveNumber);
  c_ft->add_option("--lr", ft.lr, "Adam learning rate");
  c_ft->add_option("--batch-size", ft.batch_size, "Sentences per batch");
  c_ft->add_option("--task-reduction", ft.task_reduction, "Task adapter reduction factor");
  c_ft->add_option("--random-reduction", ft.random_reduction, "Reduction of the +Random adapter");
  c_ft->add_flag("--no-bio-mask", ft.no_bio_mask, "Allow invalid BIO transitions");
  c_ft->add_option("--grid-lrs", ft.grid_lrs, "Grid-search learning rates (comma list)");
  c_ft->add_option("--grid-epochs", ft.grid_epochs, "Grid-search epoch counts (comma list)");
  c_ft->add_option("--threads", ft.threads, "Parallel runs (default: VERBKNOW_THREADS or cores)");
  c_ft->add_option("--out-dir", ft.out_dir, "Run directory");
  ft.encoder.Add(c_ft);
  c_ft->callback([&] { run = [&, c_ft] { RunFinetune(ft, OptionsConfig(*c_ft)); }; });

  TranslateArgs tl;
  auto* c_tl = app.add_subcommand("translate-constraints", "Map constraints into a target language");
  c_tl->add_option("--constraints", tl.constraints, "Source pair TSV")->required();
  tl.spaces.Add(c_tl, true);
  c_tl->add_flag("--csls", tl.csls, "Use CSLS retrieval instead of cosine");
  c_tl->add_option("--csls-k", tl.csls_k, "CSLS neighbourhood size");
  c_tl->add_option("--out", tl.out, "Output TSV")->required();
  c_tl->add_option("--dictionary-out", tl.dictionary_out, "Write the induced word dictionary");
  c_tl->callback([&] { run = [&] { RunTranslate(tl); }; });

  FilterArgs fl;
  auto* c_fl = app.add_subcommand("filter-constraints", "Keep pairs an STM scores positive");
  c_fl->add_option("--constraints", fl.constraints, "Noisy target pair TSV")->required();
  c_fl->add_option("--target-vectors", fl.target_vectors, "Target word vectors")->required();
  c_fl->add_option("--target-language", fl.target_language, "Target language code")->required();
  c_fl->add_option("--alignment-tag", fl.alignment_tag, "Shared space tag");
  c_fl->add_option("--stm", fl.stm, "Trained STM archive");
  c_fl->add_option("--train-constraints", fl.train_constraints, "Source pairs to train an STM on");
  c_fl->add_option("--source-vectors", fl.source_vectors, "Source word vectors for STM training");
  c_fl->add_option("--source-language", fl.source_language, "Source language code");
  c_fl->add_option("--stm-out", fl.stm_out, "Save the STM used");
  c_fl->add_option("--out", fl.out, "Output TSV")->required();
  fl.stm_opts.Add(c_fl);
  c_fl->callback([&] { run = [&] { RunFilter(fl); }; });

  VtransArgs vt;
  auto* c_vt = app.add_subcommand("vtrans", "Translate, filter and retrain a target-language adapter");
  c_vt->add_option("--constraints", vt.constraints, "Source pair TSV")->required();
  c_vt->add_option("--resource", vt.resource, "Resource tag stored in the checkpoint");
  c_vt->add_flag("--csls", vt.csls, "Use CSLS retrieval instead of cosine");
  c_vt->add_option("--csls-k", vt.csls_k, "CSLS neighbourhood size");
  c_vt->add_option("--out-dir", vt.out_dir, "Run directory");
  vt.spaces.Add(c_vt, true);
  vt.stm.Add(c_vt);
  vt.adapter.Add(c_vt);
  vt.encoder.Add(c_vt);
  c_vt->callback([&] { run = [&, c_vt] { RunVtransCommand(vt, OptionsConfig(*c_vt)); }; });

  EvaluateArgs ev;
  auto* c_ev = app.add_subcommand("evaluate", "Score a predictions file against gold data");
  c_ev->add_option("--task", ev.task, "tempeval or ace")->required();
  c_ev->add_option("--pred", ev.pred, "Predictions CoNLL (with probability column)")->required();
  c_ev->add_option("--gold", ev.gold, "Gold CoNLL")->required();
  c_ev->add_option("--language", ev.language, "Language code");
  c_ev->add_option("--condition", ev.condition, "Condition name in the written report");
  c_ev->add_option("--regime", ev.regime, "Regime recorded in the written report");
  c_ev->add_option("--report-out", ev.report_out, "Write a one-run score report");
  c_ev->callback([&] { run = [&] { RunEvaluate(ev); }; });

  ReportArgs rp;
  auto* c_rp = app.add_subcommand("report", "Merge score reports into one table");
  c_rp->add_option("reports", rp.inputs, "Report files")->required();
  c_rp->add_option("--baseline", rp.baseline, "Condition to test significance against");
  c_rp->add_option("--out", rp.out, "Write the merged report");
  c_rp->callback([&] { run = [&] { RunReport(rp); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  SetLogQuiet(quiet);
  try {
    run();
  } catch (const DivergenceError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitDivergence;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
