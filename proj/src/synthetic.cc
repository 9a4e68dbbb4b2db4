#include "verbknow/synthetic.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <random>
#include <set>

#include "verbknow/common.h"
#include "verbknow/nn.h"
#include "verbknow/sampling.h"

namespace verbknow {
namespace {

constexpr const char* kConsonants = "bdfgklmnprstvz";
constexpr const char* kVowels = "aeiou";

std::string PseudoWord(std::mt19937_64& rng, int syllables) {
  std::string w;
  for (int s = 0; s < syllables; ++s) {
    w.push_back(kConsonants[UniformIndex(rng, 14)]);
    w.push_back(kVowels[UniformIndex(rng, 5)]);
  }
  return w;
}

Eigen::VectorXd Gaussian(int dim, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, stddev);
  Eigen::VectorXd v(dim);
  for (int i = 0; i < dim; ++i) v[i] = n(rng);
  return v;
}

const std::vector<std::string>& AceTypes() {
  static const std::vector<std::string> types = {
      "Conflict:Attack", "Movement:Transport", "Life:Die", "Contact:Meet",
      "Justice:Trial-Hearing", "Business:Merge-Org", "Transaction:Transfer-Money"};
  return types;
}

int ClassIndex(const VerbLexicon& lexicon, const std::string& verb) {
  auto it = lexicon.entries().find(verb);
  if (it == lexicon.entries().end()) throw ValidationError("'" + verb + "' is not in the lexicon");
  const std::string& cls = *it->second.begin();
  const auto& classes = lexicon.classes();
  return static_cast<int>(std::distance(classes.begin(), classes.find(cls)));
}

std::string PickFiller(std::mt19937_64& rng) {
  const auto& f = SyntheticFillers();
  return f[UniformIndex(rng, f.size())];
}

}  // namespace

VerbLexicon MakeSyntheticLexicon(const SyntheticLexiconConfig& cfg) {
  if (cfg.classes < 1 || cfg.verbs_per_class < 2) {
    throw ValidationError("synthetic lexicon needs >= 1 class of >= 2 verbs");
  }
  VerbLexicon lex(cfg.resource, cfg.language);
  std::mt19937_64 rng(MixSeed(cfg.seed, 0x6c6578));
  std::set<std::string> used(SyntheticFillers().begin(), SyntheticFillers().end());
  char id[32];
  std::vector<std::vector<std::string>> members(static_cast<size_t>(cfg.classes));
  for (int c = 0; c < cfg.classes; ++c) {
    std::snprintf(id, sizeof(id), "class-%02d", c);
    for (int v = 0; v < cfg.verbs_per_class; ++v) {
      std::string w;
      do {
        w = PseudoWord(rng, 3);
      } while (!used.insert(w).second);
      w += cfg.suffix;
      lex.Add(w, id);
      members[static_cast<size_t>(c)].push_back(w);
    }
  }
  // Shared verbs: the first members of class c also join class c+1.
  for (int s = 0; s < cfg.shared_verbs && cfg.classes > 1; ++s) {
    const int c = s % cfg.classes;
    const auto& m = members[static_cast<size_t>(c)];
    std::snprintf(id, sizeof(id), "class-%02d", (c + 1) % cfg.classes);
    lex.Add(m[static_cast<size_t>((s / cfg.classes) % static_cast<int>(m.size()))], id);
  }
  return lex;
}

std::vector<std::string> ClassMembers(const VerbLexicon& lexicon, const std::string& class_id) {
  auto it = lexicon.classes().find(class_id);
  if (it == lexicon.classes().end()) throw ValidationError("unknown class '" + class_id + "'");
  return {it->second.begin(), it->second.end()};
}

EmbeddingSpace MakeClusteredSpace(const VerbLexicon& lexicon, const ClusterSpaceConfig& cfg,
                                  const std::vector<std::string>& extra) {
  EmbeddingSpace space(cfg.dim, cfg.language, cfg.alignment_tag);
  std::mt19937_64 rng(MixSeed(cfg.seed, 0x737063));
  std::map<std::string, Eigen::VectorXd> centroids;
  for (const auto& [cls, members] : lexicon.classes()) {
    Eigen::VectorXd c = Gaussian(cfg.dim, 1.0, rng);
    centroids[cls] = c / c.norm();
  }
  for (const auto& [lemma, classes] : lexicon.entries()) {
    Eigen::VectorXd v = Eigen::VectorXd::Zero(cfg.dim);
    for (const auto& c : classes) v += centroids[c];
    v /= static_cast<double>(classes.size());
    v += Gaussian(cfg.dim, cfg.noise / std::sqrt(static_cast<double>(cfg.dim)), rng);
    space.Add(lemma, v);
  }
  for (const auto& w : extra) {
    if (!space.Contains(w)) {
      Eigen::VectorXd v = Gaussian(cfg.dim, 1.0, rng);
      space.Add(w, v / v.norm());
    }
  }
  return space;
}

EmbeddingSpace MakeAlignedTargetSpace(const EmbeddingSpace& source, const std::string& suffix,
                                      double noise, uint64_t seed, const std::string& language) {
  EmbeddingSpace target(source.dim(), language, source.alignment_tag());
  std::mt19937_64 rng(MixSeed(seed, 0x746774));
  for (size_t i = 0; i < source.size(); ++i) {
    Eigen::VectorXd v = source.VectorAt(static_cast<int>(i));
    v += Gaussian(source.dim(), noise * v.norm() / std::sqrt(static_cast<double>(source.dim())), rng);
    target.Add(source.vocabulary()[i] + suffix, v);
  }
  return target;
}

const std::vector<std::string>& SyntheticFillers() {
  static const std::vector<std::string> fillers = {
      "the",    "a",     "of",   "and",    "in",    "on",      "with",   "after",
      "before", "today", "city", "people", "group", "officials", "report", "two",
      "its",    "new",   "said", "week",   "that",  "for",     "by",     "from"};
  return fillers;
}

std::string SyntheticEventType(const VerbLexicon& lexicon, const std::string& verb) {
  const auto& types = LabelSchema::TempEvalTypes();
  return types[static_cast<size_t>(ClassIndex(lexicon, verb)) % types.size()];
}

EventDataset MakeSyntheticTempEval(const VerbLexicon& lexicon, const std::vector<std::string>& verbs,
                                   const SyntheticEventConfig& cfg, Split split) {
  if (verbs.empty()) throw ValidationError("no verbs for the synthetic event data");
  EventDataset data;
  data.task = EventTask::kTempEvalTrigger;
  data.language = cfg.language;
  data.split = split;
  std::mt19937_64 rng(MixSeed(cfg.seed, 0x74656d70));
  std::vector<std::string> order;
  const int span = cfg.max_fillers - cfg.min_fillers + 1;
  for (int i = 0; i < cfg.sentences; ++i) {
    if (order.empty()) {
      order = verbs;
      DeterministicShuffle(order, rng);
    }
    const std::string verb = order.back();
    order.pop_back();
    if (i % 10 == 0) {
      data.documents.push_back({"synth-" + SplitName(split) + "-" + std::to_string(i / 10), {}});
    }
    Sentence s;
    const int total = cfg.min_fillers + static_cast<int>(UniformIndex(rng, static_cast<size_t>(span)));
    const int pos = static_cast<int>(UniformIndex(rng, static_cast<size_t>(total + 1)));
    for (int t = 0; t <= total; ++t) {
      if (t == pos) {
        s.tokens.push_back(verb);
        s.labels.push_back(SyntheticEventType(lexicon, verb));
      } else {
        s.tokens.push_back(PickFiller(rng));
        s.labels.push_back("O");
      }
    }
    data.documents.back().sentences.push_back(std::move(s));
  }
  return data;
}

EventDataset MakeSyntheticAce(const VerbLexicon& lexicon, const std::vector<std::string>& verbs,
                              const SyntheticEventConfig& cfg, Split split) {
  if (verbs.empty()) throw ValidationError("no verbs for the synthetic event data");
  static const std::vector<std::string> agents = {"people", "officials", "group"};
  static const std::vector<std::string> targets = {"city", "report", "week"};
  EventDataset data;
  data.task = EventTask::kAceSequence;
  data.language = cfg.language;
  data.split = split;
  std::mt19937_64 rng(MixSeed(cfg.seed, 0x616365));
  for (int i = 0; i < cfg.sentences; ++i) {
    const std::string& verb = verbs[UniformIndex(rng, verbs.size())];
    const std::string type =
        AceTypes()[static_cast<size_t>(ClassIndex(lexicon, verb)) % AceTypes().size()];
    if (i % 10 == 0) {
      data.documents.push_back({"synth-ace-" + SplitName(split) + "-" + std::to_string(i / 10), {}});
    }
    Sentence s;
    std::vector<std::string> args;
    auto add = [&](const std::string& tok, const std::string& label, const std::string& arg) {
      s.tokens.push_back(tok);
      s.labels.push_back(label);
      args.push_back(arg);
    };
    add("the", "O", "O");
    add(agents[UniformIndex(rng, agents.size())], "O", "B-Agent");
    add(verb, "B-" + type, "O");
    add("the", "O", "O");
    add(targets[UniformIndex(rng, targets.size())], "O", "B-Target");
    if (UniformIndex(rng, 2) == 0) {
      add("in", "O", "O");
      add("city", "O", "B-Place");
    }
    if (UniformIndex(rng, 2) == 0) add("today", "O", "B-Time");
    s.argument_tags.push_back(std::move(args));
    data.documents.back().sentences.push_back(std::move(s));
  }
  return data;
}

std::shared_ptr<const WordPieceTokenizer> MakeSyntheticTokenizer(
    const VerbLexicon& lexicon, const std::vector<std::string>& extra) {
  std::vector<std::string> words = SyntheticFillers();
  for (const auto& [lemma, classes] : lexicon.entries()) words.push_back(lemma);
  words.insert(words.end(), extra.begin(), extra.end());
  return std::make_shared<const WordPieceTokenizer>(BuildWordVocabulary(words));
}

EncoderConfig TinyDeskConfig() {
  EncoderConfig c;
  c.num_layers = 2;
  c.hidden = 32;
  c.heads = 2;
  c.intermediate = 128;
  c.max_len = 128;
  c.flavor = EncoderFlavor::kTinyDesk;
  return c;
}

}  // namespace verbknow
