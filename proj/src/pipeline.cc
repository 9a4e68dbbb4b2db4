#include "verbknow/pipeline.h"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "verbknow/sampling.h"
#include "verbknow/synthetic.h"

namespace verbknow {
namespace {

namespace fs = std::filesystem;

std::string ReadText(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot read " + path);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// Write to a sibling temp file, then rename, so readers never see a torn file.
void WriteAtomically(const std::string& path, const std::string& text) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw ValidationError("cannot write " + path);
    out << text;
    out.flush();
    if (!out) throw ValidationError("short write to " + path);
  }
  fs::rename(tmp, path);
}

std::string ManifestPath(const std::string& dir) { return dir + "/manifest.txt"; }

void WriteClassMap(const VerbLexicon& lexicon, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path);
  out << "# class_id: member lemmas\n";
  for (const auto& [cls, members] : lexicon.classes()) {
    out << cls << ':';
    for (const auto& m : members) out << ' ' << m;
    out << '\n';
  }
}

}  // namespace

KvConfig KvConfig::Parse(const std::string& text, const std::string& source) {
  KvConfig cfg;
  std::istringstream in(text);
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string body = Trim(line);
    if (body.empty() || body[0] == '#') continue;
    const auto eq = body.find('=');
    const std::string locus = source + ":" + std::to_string(line_no);
    if (eq == std::string::npos) throw ParseError(locus, "expected key=value");
    const std::string key = Trim(body.substr(0, eq));
    if (key.empty()) throw ParseError(locus, "empty key");
    if (cfg.Has(key)) throw ParseError(locus, "duplicate key '" + key + "'");
    std::string value = Trim(body.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') {
      value = value.substr(1, value.size() - 2);
    }
    cfg.values_[key] = value;
  }
  return cfg;
}

KvConfig KvConfig::Read(const std::string& path) { return Parse(ReadText(path), path); }

void KvConfig::Write(const std::string& path) const { WriteAtomically(path, Serialize()); }

std::string KvConfig::Serialize() const {
  std::string out;
  for (const auto& [k, v] : values_) {
    // Lists are quoted so option parsers read them as one value.
    const bool quote = v.find_first_of(",#\"") != std::string::npos;
    out += k + "=" + (quote ? "\"" + v + "\"" : v) + "\n";
  }
  return out;
}

void KvConfig::Set(const std::string& key, const std::string& value) {
  if (Trim(key).empty() || key.find_first_of("=\n#") != std::string::npos) {
    throw ValidationError("invalid config key '" + key + "'");
  }
  if (value.find_first_of("\n\"") != std::string::npos || Trim(value) != value) {
    throw ValidationError("config value for '" + key + "' has quotes, newlines or edge whitespace");
  }
  values_[key] = value;
}

void KvConfig::Set(const std::string& key, double value) {
  std::ostringstream s;
  s << std::setprecision(17) << value;
  Set(key, s.str());
}

const std::string& KvConfig::Get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ValidationError("config key '" + key + "' is missing");
  return it->second;
}

std::string KvConfig::GetOr(const std::string& key, const std::string& fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

std::string KvConfig::Hash() const { return HexDigest(Fnv1a64(Serialize())); }

void BeginRun(const std::string& dir, const std::string& command, const KvConfig& config,
              const RunInputs& inputs) {
  fs::create_directories(dir);
  KvConfig manifest;
  manifest.Set("command", command);
  manifest.Set("config_hash", config.Hash());
  for (const auto& [role, path] : inputs.paths) {
    if (!fs::is_regular_file(path)) throw ValidationError("input '" + role + "' not found: " + path);
    manifest.Set("input." + role + ".path", path);
    manifest.Set("input." + role + ".hash", HashFile(path));
  }

  if (fs::exists(ManifestPath(dir))) {
    const KvConfig old = ReadManifest(dir);
    if (old.GetOr("config_hash", "") != manifest.Get("config_hash")) {
      throw ValidationError("refusing to resume " + dir + ": it was created with config hash " +
                            old.GetOr("config_hash", "<none>") + " but the current config hashes to " +
                            manifest.Get("config_hash") +
                            "; restore the original config or choose a new output directory");
    }
    for (const auto& [key, value] : manifest.values()) {
      if (key.rfind("input.", 0) == 0 && old.GetOr(key, "") != value) {
        throw ValidationError("refusing to resume " + dir + ": " + key + " changed from '" +
                              old.GetOr(key, "<none>") + "' to '" + value + "'");
      }
    }
    LogInfo("resuming run in " + dir);
  }
  manifest.Set("status", "running");
  config.Write(dir + "/config.txt");
  manifest.Write(ManifestPath(dir));
}

void FinishRun(const std::string& dir, const KvConfig& outputs) {
  KvConfig manifest = ReadManifest(dir);
  for (const auto& [k, v] : outputs.values()) manifest.Set("output." + k, v);
  manifest.Set("status", "completed");
  manifest.Write(ManifestPath(dir));
}

KvConfig ReadManifest(const std::string& dir) { return KvConfig::Read(ManifestPath(dir)); }

std::vector<uint64_t> DeriveSeeds(uint64_t base, int n) {
  if (n < 1) throw ValidationError("--runs must be >= 1");
  std::vector<uint64_t> seeds;
  // Keep seeds below 2^31 so they print and parse the same everywhere.
  for (int i = 0; i < n; ++i) seeds.push_back(MixSeed(base, 0x72756e00u + i) & 0x7fffffffu);
  return seeds;
}

std::vector<uint64_t> ResolveSeeds(const std::string& list, int runs, uint64_t base) {
  if (Trim(list) == "auto") return DeriveSeeds(base, runs < 1 ? 1 : runs);
  std::vector<uint64_t> seeds;
  std::istringstream in(list);
  std::string item;
  while (std::getline(in, item, ',')) {
    const std::string t = Trim(item);
    size_t used = 0;
    unsigned long long v = 0;
    try {
      v = std::stoull(t, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (t.empty() || used != t.size() || t[0] == '-') {
      throw ValidationError("invalid seed '" + t + "' in --seeds");
    }
    seeds.push_back(v);
  }
  if (seeds.empty()) throw ValidationError("--seeds is empty");
  if (runs > 0 && static_cast<int>(seeds.size()) != runs) {
    throw ValidationError("--seeds lists " + std::to_string(seeds.size()) + " seeds but --runs is " +
                          std::to_string(runs));
  }
  return seeds;
}

std::string OutputRoot() {
  const char* v = std::getenv("VERBKNOW_OUTPUT_ROOT");
  return v && *v ? std::string(v) : std::string("runs");
}

int WorkerThreads() {
  if (const char* v = std::getenv("VERBKNOW_THREADS"); v && *v) {
    try {
      const int n = std::stoi(v);
      if (n >= 1) return n;
    } catch (const std::exception&) {
    }
    LogWarning(std::string("ignoring VERBKNOW_THREADS=") + v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

ConditionResult RunCondition(const Encoder& encoder, const AdapterStack* verb_adapter,
                             const EventDataset& train, const EventDataset& test,
                             const FinetuneConfig& base, const std::vector<uint64_t>& seeds,
                             int threads, const RunObserver& observer) {
  ConditionResult result;
  result.name = ConditionName(base.adapter_source);
  result.runs = ParallelMap<RunScore>(seeds.size(), threads, [&](size_t i) {
    FinetuneConfig cfg = base;
    cfg.seed = seeds[i];
    FinetuneResult r = FinetuneEventModel(encoder, verb_adapter, train, &test, cfg);
    if (observer) observer(i, *r.model);
    return RunScore{seeds[i], r.FinalScores()};
  });
  return result;
}

std::map<std::string, std::string> WriteSyntheticFixtures(const std::string& dir) {
  fs::create_directories(dir);
  std::map<std::string, std::string> files;
  auto path = [&](const std::string& role, const std::string& name) {
    return files[role] = dir + "/" + name;
  };

  SyntheticLexiconConfig lc;
  lc.classes = 7;
  lc.verbs_per_class = 8;
  lc.resource = "generic-class-map";
  const VerbLexicon en = MakeSyntheticLexicon(lc);
  lc.suffix = "_es";
  lc.language = "es";
  const VerbLexicon es = MakeSyntheticLexicon(lc);
  WriteClassMap(en, path("lexicon_en", "lexicon_en.txt"));

  const EmbeddingSpace en_space = MakeClusteredSpace(en, ClusterSpaceConfig{});
  WriteEmbeddingText(en_space, path("vectors_en", "vectors_en.vec"));
  WriteEmbeddingText(MakeAlignedTargetSpace(en_space, "_es", 0.05, 9, "es"),
                     path("vectors_es", "vectors_es.vec"));

  // Event verbs: the first half of every class trains, the rest is held out.
  auto split_verbs = [](const VerbLexicon& lex, bool first_half) {
    std::vector<std::string> out;
    for (const auto& c : lex.classes()) {
      const auto m = ClassMembers(lex, c.first);
      for (size_t i = 0; i < m.size(); ++i) {
        if ((i < m.size() / 2) == first_half) out.push_back(m[i]);
      }
    }
    return out;
  };
  SyntheticEventConfig ec;
  ec.sentences = 1000;
  ec.seed = 3;
  WriteEventConll(MakeSyntheticTempEval(en, split_verbs(en, true), ec, Split::kTrain),
                  path("tempeval_en_train", "tempeval_en_train.conll"));
  ec.sentences = 200;
  ec.seed = 4;
  WriteEventConll(MakeSyntheticTempEval(en, split_verbs(en, false), ec, Split::kTest),
                  path("tempeval_en_test", "tempeval_en_test.conll"));
  ec.seed = 5;
  ec.language = "es";
  WriteEventConll(MakeSyntheticTempEval(es, split_verbs(es, false), ec, Split::kTest),
                  path("tempeval_es_test", "tempeval_es_test.conll"));

  ec.language = "en";
  ec.sentences = 300;
  ec.seed = 6;
  WriteEventConll(MakeSyntheticAce(en, split_verbs(en, true), ec, Split::kTrain),
                  path("ace_en_train", "ace_en_train.conll"));
  ec.sentences = 80;
  ec.seed = 7;
  WriteEventConll(MakeSyntheticAce(en, split_verbs(en, false), ec, Split::kTest),
                  path("ace_en_test", "ace_en_test.conll"));
  return files;
}

}  // namespace verbknow
