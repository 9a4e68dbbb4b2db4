#include "doctest.h"
#include "test_util.h"
#include "verbknow/checkpoint.h"
#include "verbknow/common.h"
#include "verbknow/event_model.h"
#include "verbknow/synthetic.h"

using namespace verbknow;

namespace {

const char* kAce =
    "-DOCSTART- d1\n"
    "\n"
    "soldiers\tO\tB-Attacker\tB-Victim\n"
    "attacked\tB-Conflict:Attack\tO\tO\n"
    "the\tO\tB-Target\tO\n"
    "city\tO\tI-Target\tO\n"
    "and\tO\tO\tO\n"
    "died\tB-Life:Die\tO\tO\n"
    "today\tO\tB-Time-Within\tB-Time-Holds\n";

struct Setup {
  VerbLexicon lex;
  Encoder encoder;
  EventDataset train, test;

  explicit Setup(EventTask task = EventTask::kTempEvalTrigger) {
    SyntheticLexiconConfig lc;
    lc.classes = 4;
    lc.verbs_per_class = 4;
    lex = MakeSyntheticLexicon(lc);
    encoder = Encoder::TinyDesk(TinyDeskConfig(), MakeSyntheticTokenizer(lex), 7);
    std::vector<std::string> verbs;
    for (const auto& [lemma, classes] : lex.entries()) verbs.push_back(lemma);
    SyntheticEventConfig ec;
    ec.sentences = 40;
    ec.seed = 3;
    train = task == EventTask::kTempEvalTrigger ? MakeSyntheticTempEval(lex, verbs, ec, Split::kTrain)
                                                : MakeSyntheticAce(lex, verbs, ec, Split::kTrain);
    ec.sentences = 12;
    ec.seed = 4;
    test = task == EventTask::kTempEvalTrigger ? MakeSyntheticTempEval(lex, verbs, ec, Split::kTest)
                                               : MakeSyntheticAce(lex, verbs, ec, Split::kTest);
  }
};

FinetuneConfig SmallFinetune(Regime regime, AdapterSource source) {
  FinetuneConfig c;
  c.regime = regime;
  c.adapter_source = source;
  c.epochs = 2;
  c.batch_size = 8;
  c.adam.learning_rate = 1e-2;
  c.task_reduction = 2;
  c.random_reduction = 2;
  c.seed = 5;
  return c;
}

}  // namespace

TEST_SUITE("event") {

TEST_CASE("ace columns parse into triggers and per-trigger arguments") {
  const EventDataset d = ParseEventConll(kAce, "inline", EventTask::kAceSequence, Split::kTest, "en");
  REQUIRE(d.documents.size() == 1);
  const Sentence& s = d.documents[0].sentences.at(0);
  CHECK(s.tokens.size() == 7);
  REQUIRE(s.argument_tags.size() == 2);
  CHECK(s.argument_tags[0][6] == "B-Time");
  CHECK(s.argument_tags[1][6] == "B-Time");
  CHECK(LabelSchema::ConflateRole("Time-At-End") == "Time");
  CHECK(LabelSchema::ConflateRole("Victim") == "Victim");

  const auto events = ExtractEvents(d);
  REQUIRE(events.at(0).events.size() == 2);
  const EventMention& attack = events[0].events[0];
  CHECK(attack.trigger.type == "Conflict:Attack");
  REQUIRE(attack.arguments.size() == 3);
  CHECK(attack.arguments[1].role == "Target");
  CHECK(attack.arguments[1].span.begin == 2);
  CHECK(attack.arguments[1].span.end == 4);
  CHECK(events[0].events[1].arguments.size() == 2);

  const auto scores = ScoreEventPredictions(d, d);
  REQUIRE(scores.size() == 4);
  for (const auto& [name, prf] : scores) CHECK(prf.f1 == doctest::Approx(100.0));

  CHECK_THROWS_AS(ParseEventConll("a\tB-X\n", "bad", EventTask::kAceSequence, Split::kTest, "en"),
                  ParseError);
  CHECK_THROWS_AS(ParseEventConll("a\n", "bad", EventTask::kTempEvalTrigger, Split::kTest, "en"),
                  ParseError);
}

TEST_CASE("conll files round-trip") {
  testing::TempDir dir;
  const EventDataset d = ParseEventConll(kAce, "inline", EventTask::kAceSequence, Split::kTest, "en");
  WriteEventConll(d, dir.File("a.conll"));
  const EventDataset back = ReadEventConll(dir.File("a.conll"), EventTask::kAceSequence, Split::kTest, "en");
  REQUIRE(back.documents.size() == 1);
  CHECK(back.documents[0].id == "d1");
  CHECK(back.documents[0].sentences[0].labels == d.documents[0].sentences[0].labels);
  CHECK(back.documents[0].sentences[0].argument_tags == d.documents[0].sentences[0].argument_tags);
}

TEST_CASE("task-adapter regimes leave encoder and verb adapter bytes unchanged") {
  Setup s;
  const AdapterStack verb = InsertAdapters(s.encoder, AdapterPlacement::kAfterFfn, 2, AdapterInit::kRandom, 3, "vn");
  const std::string enc_bytes = SerializeParams(std::as_const(s.encoder).Params());
  const std::string verb_bytes = SerializeParams(verb.Params(ParamGroup::kVerbAdapter));
  for (Regime regime : {Regime::kTa, Regime::k2Ta}) {
    const FinetuneResult r = FinetuneEventModel(s.encoder, &verb, s.train, &s.test,
                                                SmallFinetune(regime, AdapterSource::kVn));
    CHECK(SerializeParams(std::as_const(r.model->encoder).Params()) == enc_bytes);
    CHECK(SerializeParams(std::as_const(r.model->stack).Params(ParamGroup::kVerbAdapter)) == verb_bytes);
  }
  const FinetuneResult fft = FinetuneEventModel(s.encoder, &verb, s.train, nullptr,
                                                SmallFinetune(Regime::kFft, AdapterSource::kVn));
  CHECK(SerializeParams(std::as_const(fft.model->encoder).Params()) != enc_bytes);
}

TEST_CASE("double task adapters hold twice the trainable parameters") {
  Setup s;
  FinetuneConfig ta = SmallFinetune(Regime::kTa, AdapterSource::kNone);
  ta.task_reduction = 4;
  FinetuneConfig two = ta;
  two.regime = Regime::k2Ta;
  CHECK(two.EffectiveTaskReduction() == 2);
  const Eigen::Index n_ta = TrainableAdapterParams(BuildDownstreamStack(s.encoder, nullptr, ta), Regime::kTa);
  const Eigen::Index n_2ta = TrainableAdapterParams(BuildDownstreamStack(s.encoder, nullptr, two), Regime::k2Ta);
  // Weights double exactly; the output bias (h per layer) does not.
  const Eigen::Index layers = s.encoder.config().num_layers, h = s.encoder.hidden();
  CHECK(n_2ta - 2 * n_ta == -layers * h);
  CHECK(std::abs(static_cast<double>(n_2ta) / static_cast<double>(n_ta) - 2.0) < 0.2);
}

TEST_CASE("fine-tuning is deterministic for a fixed seed") {
  Setup s;
  const FinetuneConfig cfg = SmallFinetune(Regime::kTa, AdapterSource::kRandom);
  const FinetuneResult a = FinetuneEventModel(s.encoder, nullptr, s.train, &s.test, cfg);
  const FinetuneResult b = FinetuneEventModel(s.encoder, nullptr, s.train, &s.test, cfg);
  CHECK(a.FinalScores() == b.FinalScores());
  CHECK(a.log.back().loss == b.log.back().loss);
  CHECK(SerializeParams({&a.model->token_head.weight}) == SerializeParams({&b.model->token_head.weight}));
  FinetuneConfig other = cfg;
  other.seed = 6;
  const FinetuneResult c = FinetuneEventModel(s.encoder, nullptr, s.train, &s.test, other);
  CHECK(SerializeParams({&c.model->token_head.weight}) != SerializeParams({&a.model->token_head.weight}));
}

TEST_CASE("ace predictions are valid bio and round-trip through files") {
  Setup s(EventTask::kAceSequence);
  FinetuneConfig cfg = SmallFinetune(Regime::kTa, AdapterSource::kNone);
  const FinetuneResult r = FinetuneEventModel(s.encoder, nullptr, s.train, &s.test, cfg);
  REQUIRE(r.FinalScores().size() == 4);
  std::vector<std::vector<double>> probs;
  const EventDataset pred = r.model->PredictDataset(s.test, &probs);
  for (const auto& doc : pred.documents) {
    for (const auto& sent : doc.sentences) {
      for (size_t i = 0; i < sent.labels.size(); ++i) {
        const std::string& tag = sent.labels[i];
        if (tag.rfind("I-", 0) != 0) continue;
        REQUIRE(i > 0);
        const std::string& prev = sent.labels[i - 1];
        CHECK((prev == "B-" + tag.substr(2) || prev == tag));
      }
    }
  }
  testing::TempDir dir;
  WritePredictionsConll(pred, probs, dir.File("p.conll"));
  std::vector<std::vector<double>> read_probs;
  const EventDataset back = ReadPredictionsConll(dir.File("p.conll"), EventTask::kAceSequence, "en", &read_probs);
  CHECK(ScoreEventPredictions(back, s.test) == ScoreEventPredictions(pred, s.test));
  REQUIRE(read_probs.size() == probs.size());
  for (size_t i = 0; i < probs.size(); ++i) {
    REQUIRE(read_probs[i].size() == probs[i].size());
    for (size_t j = 0; j < probs[i].size(); ++j) CHECK(read_probs[i][j] == doctest::Approx(probs[i][j]).epsilon(1e-6));
  }
}

TEST_CASE("fine-tuning validates its inputs") {
  Setup s;
  CHECK_THROWS_AS(FinetuneEventModel(s.encoder, nullptr, s.train, nullptr,
                                     SmallFinetune(Regime::kTa, AdapterSource::kVn)),
                  ValidationError);
  CHECK(ParseAdapterSource("FN") == AdapterSource::kFn);
  CHECK(ConditionName(AdapterSource::kNone) == "baseline");
  CHECK(ConditionName(AdapterSource::kVn) == "+VN");
}

}  // TEST_SUITE
