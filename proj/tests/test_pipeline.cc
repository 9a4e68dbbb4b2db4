#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <stdexcept>

#include "doctest.h"
#include "test_util.h"
#include "verbknow/common.h"
#include "verbknow/pipeline.h"
#include "verbknow/synthetic.h"

using namespace verbknow;

namespace {

const std::string kCli = VERBKNOW_CLI;
const std::string kFixtures = VERBKNOW_FIXTURES;

// Runs the CLI inside `dir`; returns its exit status.
int Cli(const testing::TempDir& dir, const std::string& args) {
  const std::string cmd = "cd '" + dir.path() + "' && '" + kCli + "' -q " + args + " >> cli.log 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string Fixture(const std::string& name) { return kFixtures + "/" + name; }

}  // namespace

TEST_SUITE("pipeline") {

TEST_CASE("key-value configs round-trip and quote lists") {
  KvConfig c;
  c.Set("finetune.lr", 1e-4);
  c.Set("finetune.seeds", "1,2,3");
  c.Set("finetune.no-bio-mask", false);
  c.Set("finetune.runs", 5);
  const std::string text = c.Serialize();
  CHECK(text.find("finetune.seeds=\"1,2,3\"") != std::string::npos);
  const KvConfig back = KvConfig::Parse(text);
  CHECK(back == c);
  CHECK(back.Get("finetune.seeds") == "1,2,3");
  CHECK(back.GetOr("missing", "x") == "x");
  CHECK(back.Hash() == c.Hash());
  CHECK_THROWS_AS(back.Get("missing"), ValidationError);
  CHECK_THROWS_AS(KvConfig::Parse("a=1\na=2\n"), ParseError);
  CHECK_THROWS_AS(KvConfig::Parse("# note\nnovalue\n"), ParseError);
  CHECK_THROWS_AS(c.Set("bad=key", "1"), ValidationError);
  CHECK(KvConfig::Parse("# comment\n\n k = v w \n").Get("k") == "v w");
}

TEST_CASE("run manifests resume only under the same config and inputs") {
  testing::TempDir dir;
  testing::WriteFile(dir.File("in.txt"), "hello\n");
  KvConfig cfg;
  cfg.Set("train-adapter.epochs", 3);
  const RunInputs inputs{{{"data", dir.File("in.txt")}}};
  const std::string run = dir.File("run");
  BeginRun(run, "train-adapter", cfg, inputs);
  CHECK(ReadManifest(run).Get("status") == "running");
  CHECK(ReadManifest(run).Get("input.data.hash") == HashFile(dir.File("in.txt")));
  CHECK(KvConfig::Read(run + "/config.txt") == cfg);
  KvConfig out;
  out.Set("loss", 0.5);
  FinishRun(run, out);
  CHECK(ReadManifest(run).Get("status") == "completed");
  CHECK(ReadManifest(run).Get("output.loss") == "0.5");

  CHECK_NOTHROW(BeginRun(run, "train-adapter", cfg, inputs));
  KvConfig changed = cfg;
  changed.Set("train-adapter.epochs", 4);
  CHECK_THROWS_AS(BeginRun(run, "train-adapter", changed, inputs), ValidationError);
  testing::WriteFile(dir.File("in.txt"), "changed\n");
  CHECK_THROWS_AS(BeginRun(run, "train-adapter", cfg, inputs), ValidationError);
  CHECK_THROWS_AS(BeginRun(dir.File("other"), "x", cfg, RunInputs{{{"data", dir.File("nope")}}}),
                  ValidationError);
}

TEST_CASE("derived seeds are stable, distinct and 31-bit") {
  const auto a = DeriveSeeds(0, 5);
  CHECK(a == DeriveSeeds(0, 5));
  CHECK(a != DeriveSeeds(1, 5));
  CHECK(std::set<uint64_t>(a.begin(), a.end()).size() == 5);
  for (uint64_t s : a) CHECK(s < (1ull << 31));
  CHECK(std::vector<uint64_t>(a.begin(), a.begin() + 3) == DeriveSeeds(0, 3));
  CHECK(ResolveSeeds("auto", 5, 0) == a);
  CHECK(ResolveSeeds(" 4, 8 ", 2, 0) == std::vector<uint64_t>{4, 8});
  CHECK_THROWS_AS(ResolveSeeds("4,8", 3, 0), ValidationError);
  CHECK_THROWS_AS(ResolveSeeds("4,x", 2, 0), ValidationError);
  CHECK_THROWS_AS(ResolveSeeds("-1", 1, 0), ValidationError);
  CHECK_THROWS_AS(DeriveSeeds(0, 0), ValidationError);
}

TEST_CASE("parallel map keeps index order and rethrows the first failure") {
  const auto squares = ParallelMap<int>(50, 4, [](size_t i) { return static_cast<int>(i * i); });
  for (size_t i = 0; i < squares.size(); ++i) CHECK(squares[i] == static_cast<int>(i * i));
  auto failing = [](size_t i) -> int {
    if (i == 7 || i == 30) throw std::runtime_error("run " + std::to_string(i));
    return 0;
  };
  try {
    ParallelMap<int>(40, 3, failing);
    FAIL("expected an exception");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()) == "run 7");
  }
}

TEST_CASE("condition results do not depend on the thread count") {
  SyntheticLexiconConfig lc;
  lc.classes = 3;
  lc.verbs_per_class = 4;
  const VerbLexicon lex = MakeSyntheticLexicon(lc);
  const Encoder enc = Encoder::TinyDesk(TinyDeskConfig(), MakeSyntheticTokenizer(lex), 7);
  std::vector<std::string> verbs;
  for (const auto& [lemma, classes] : lex.entries()) verbs.push_back(lemma);
  SyntheticEventConfig ec;
  ec.sentences = 30;
  const EventDataset train = MakeSyntheticTempEval(lex, verbs, ec, Split::kTrain);
  ec.seed = 9;
  const EventDataset test = MakeSyntheticTempEval(lex, verbs, ec, Split::kTest);
  FinetuneConfig cfg;
  cfg.adapter_source = AdapterSource::kRandom;
  cfg.epochs = 2;
  cfg.batch_size = 8;
  cfg.task_reduction = 2;
  cfg.random_reduction = 2;
  cfg.adam.learning_rate = 1e-2;
  const auto seeds = DeriveSeeds(0, 3);
  const ConditionResult one = RunCondition(enc, nullptr, train, test, cfg, seeds, 1);
  const ConditionResult three = RunCondition(enc, nullptr, train, test, cfg, seeds, 3);
  CHECK(one == three);
  CHECK(one.name == "+Random");
}

TEST_CASE("bundled fixtures are regenerated byte for byte") {
  testing::TempDir dir;
  const auto files = WriteSyntheticFixtures(dir.path());
  CHECK(files.size() == 8);
  for (const auto& [role, path] : files) {
    const std::string name = std::filesystem::path(path).filename().string();
    CHECK_MESSAGE(HashFile(path) == HashFile(Fixture(name)), name);
  }
}

TEST_CASE("cli exit codes") {
  testing::TempDir dir;
  CHECK(Cli(dir, "") != 0);
  CHECK(Cli(dir, "extract-constraints --in missing.txt --out p.tsv") == 2);
  CHECK(Cli(dir, "finetune --task tempeval --train a --test b --regime lora") != 0);
  CHECK(Cli(dir, "finetune --task tempeval --train missing --test missing") == 2);
  CHECK(Cli(dir, "extract-constraints --format generic-class-map --in " + Fixture("lexicon_en.txt") +
                     " --out p.tsv") == 0);
  CHECK(ReadConstraintsTsv(dir.File("p.tsv")).size() == 196);
}

TEST_CASE("cli pipeline from lexicon to merged report") {
  testing::TempDir dir;
  const std::string vocab = " --vocab-data " + Fixture("tempeval_en_train.conll") + "," + Fixture("tempeval_en_test.conll");
  REQUIRE(Cli(dir, "extract-constraints --in " + Fixture("lexicon_en.txt") + " --out p.tsv") == 0);
  REQUIRE(Cli(dir, "sample-debug --constraints p.tsv --embeddings " + Fixture("vectors_en.vec") +
                       " --batches 2 --out batches.tsv") == 0);
  REQUIRE(Cli(dir, "train-adapter --constraints p.tsv --embeddings " + Fixture("vectors_en.vec") +
                       " --resource vn --epochs 2 --reduction 2 --lr 3e-3 --batch-positives 8" + vocab +
                       " --out-dir tr") == 0);
  CHECK(ReadManifest(dir.File("tr")).Get("status") == "completed");

  const std::string common = "finetune --task tempeval --train " + Fixture("tempeval_en_train.conll") +
                             " --test " + Fixture("tempeval_en_test.conll") +
                             " --encoder-checkpoint tr/encoder.ckpt --runs 2 --epochs 1 --lr 1e-2 --task-reduction 2";
  REQUIRE(Cli(dir, common + " --adapter vn --adapter-ckpt tr/adapter.ckpt --out-dir vn") == 0);
  REQUIRE(Cli(dir, common + " --adapter random --random-reduction 2 --out-dir rnd") == 0);
  const ScoreReport vn = ReadReport(dir.File("vn/report.txt"));
  CHECK(vn.conditions.at(0).name == "+VN");
  CHECK(vn.conditions.at(0).runs.size() == 2);

  // Same config resumes; a changed one is refused.
  CHECK(Cli(dir, "--config vn/config.txt finetune --out-dir vn") == 0);
  CHECK(ReadReport(dir.File("vn/report.txt")) == vn);
  CHECK(Cli(dir, common + " --adapter vn --adapter-ckpt tr/adapter.ckpt --batch-size 16 --out-dir vn") == 2);
  CHECK(Cli(dir, "finetune --task tempeval --train x --test y --adapter vn --out-dir z") == 2);

  REQUIRE(Cli(dir, "evaluate --task tempeval --pred vn/predictions/run_00.conll --gold " +
                       Fixture("tempeval_en_test.conll") + " --condition +VN --report-out one.txt") == 0);
  CHECK(ReadReport(dir.File("one.txt")).conditions.at(0).runs.at(0).subtasks ==
        vn.conditions.at(0).runs.at(0).subtasks);

  REQUIRE(Cli(dir, "report vn/report.txt rnd/report.txt --baseline +Random --out merged.txt") == 0);
  const ScoreReport merged = ReadReport(dir.File("merged.txt"));
  CHECK(merged.conditions.size() == 2);
  CHECK(merged.baseline == "+Random");
  CHECK(Cli(dir, "report vn/report.txt " + Fixture("lexicon_en.txt")) == 2);
}

}  // TEST_SUITE
