#include <cmath>
#include <random>

#include <gsl/gsl_cdf.h>

#include "doctest.h"
#include "test_util.h"
#include "verbknow/common.h"
#include "verbknow/metrics.h"

using namespace verbknow;

namespace {

// Two-sided paired t-test through GSL's Student-t tail.
double GslPairedP(const std::vector<double>& a, const std::vector<double>& b, double* t_out) {
  const size_t n = a.size();
  double mean = 0;
  for (size_t i = 0; i < n; ++i) mean += a[i] - b[i];
  mean /= static_cast<double>(n);
  double ss = 0;
  for (size_t i = 0; i < n; ++i) ss += (a[i] - b[i] - mean) * (a[i] - b[i] - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  const double t = mean / (sd / std::sqrt(static_cast<double>(n)));
  *t_out = t;
  return 2.0 * gsl_cdf_tdist_Q(std::abs(t), static_cast<double>(n - 1));
}

Span S(int sentence, int begin, int end, const std::string& type = "") {
  return Span{sentence, begin, end, type};
}

DocumentEvents Doc(const std::string& id, std::vector<EventMention> events) {
  return DocumentEvents{id, std::move(events)};
}

ConditionResult Condition(const std::string& name, const std::vector<double>& f1s) {
  ConditionResult c;
  c.name = name;
  for (size_t i = 0; i < f1s.size(); ++i) {
    Prf p;
    p.f1 = f1s[i];
    c.runs.push_back(RunScore{i + 1, {{"T-ident&class", p}}});
  }
  return c;
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("token F1 counts non-outside tokens") {
  const Prf p = TokenF1({"OCCURRENCE", "O", "STATE"}, {"OCCURRENCE", "STATE", "STATE"});
  CHECK(p.correct == 2);
  CHECK(p.predicted == 2);
  CHECK(p.gold == 3);
  CHECK(p.precision == doctest::Approx(100.0));
  CHECK(p.recall == doctest::Approx(200.0 / 3.0));
  CHECK(p.f1 == doctest::Approx(80.0));
  // A wrong class is a false positive and a false negative at once.
  const Prf q = TokenF1({"STATE", "O"}, {"OCCURRENCE", "O"});
  CHECK(q.correct == 0);
  CHECK(q.f1 == 0.0);
  CHECK(TokenF1({"O"}, {"O"}).f1 == 0.0);
  CHECK_THROWS_AS(TokenF1({"O"}, {"O", "O"}), ValidationError);
}

TEST_CASE("bio decoding") {
  const auto spans = BioToSpans({"B-Attack", "I-Attack", "O", "I-Die", "B-Die", "B-Die"}, 3);
  REQUIRE(spans.size() == 4);
  CHECK(spans[0] == S(3, 0, 2, "Attack"));
  CHECK(spans[1] == S(3, 3, 4, "Die"));
  CHECK(spans[2] == S(3, 4, 5, "Die"));
  CHECK(spans[3] == S(3, 5, 6, "Die"));
  CHECK(BioToSpans({"B-X", "I-Y"}).size() == 2);
}

TEST_CASE("ace subtasks on a hand-built document") {
  EventMention g1{S(0, 1, 2, "Attack"), {{S(0, 0, 1, "PER"), "Attacker"}, {S(0, 3, 5, "GPE"), "Place"}}};
  EventMention g2{S(1, 2, 3, "Die"), {{S(1, 0, 1, "PER"), "Victim"}}};
  // Trigger 1 right type; trigger 2 right offsets, wrong type; one argument
  // with the wrong role, one right, one spurious.
  EventMention p1{S(0, 1, 2, "Attack"), {{S(0, 0, 1, "PER"), "Target"}, {S(0, 3, 5, "GPE"), "Place"}}};
  EventMention p2{S(1, 2, 3, "Attack"), {{S(1, 4, 5, "PER"), "Victim"}}};
  const std::vector<DocumentEvents> gold = {Doc("d1", {g1, g2})};
  const std::vector<DocumentEvents> pred = {Doc("d1", {p1, p2})};

  const Prf ti = AceSpanF1(pred, gold, AceSubtask::kTriggerIdent);
  CHECK(ti.correct == 2);
  CHECK(ti.f1 == doctest::Approx(100.0));
  const Prf tc = AceSpanF1(pred, gold, AceSubtask::kTriggerClass);
  CHECK(tc.correct == 1);
  CHECK(tc.f1 == doctest::Approx(50.0));
  const Prf ai = AceSpanF1(pred, gold, AceSubtask::kArgIdent);
  CHECK(ai.correct == 2);
  CHECK(ai.predicted == 3);
  CHECK(ai.gold == 3);
  const Prf ac = AceSpanF1(pred, gold, AceSubtask::kArgClass);
  CHECK(ac.correct == 1);
  CHECK(ac.f1 == doctest::Approx(100.0 / 3.0));

  EventMention overlap{S(0, 1, 3, "Attack"), {}};
  CHECK_THROWS_AS(AceSpanF1(pred, {Doc("d1", {g1, overlap})}, AceSubtask::kTriggerIdent), ValidationError);
  CHECK_THROWS_AS(AceSpanF1(pred, {Doc("d2", {g1})}, AceSubtask::kTriggerIdent), ValidationError);
}

TEST_CASE("paired t-test matches the GSL Student-t tail") {
  std::mt19937_64 rng(17);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (int trial = 0; trial < 40; ++trial) {
    const size_t n = 2 + static_cast<size_t>(trial % 9);
    std::vector<double> a, b;
    for (size_t i = 0; i < n; ++i) {
      a.push_back(50 + noise(rng) + 0.3 * (trial % 5));
      b.push_back(50 + noise(rng));
    }
    double t_ref = 0;
    const double p_ref = GslPairedP(a, b, &t_ref);
    const TTestResult r = PairedTTest(a, b);
    CHECK(r.df == static_cast<int>(n - 1));
    CHECK(r.t == doctest::Approx(t_ref).epsilon(1e-10));
    CHECK(std::abs(r.p - p_ref) < 1e-6);
    CHECK_FALSE(r.degenerate);
  }
}

TEST_CASE("t-test edge cases") {
  const TTestResult same = PairedTTest({1, 2, 3}, {1, 2, 3});
  CHECK(same.degenerate);
  CHECK(same.p == 1.0);
  const TTestResult shift = PairedTTest({2, 3, 4}, {1, 2, 3});
  CHECK(shift.degenerate);
  CHECK(shift.p == 0.0);
  CHECK_THROWS_AS(PairedTTest({1}, {2}), ValidationError);
  CHECK_THROWS_AS(PairedTTest({1, 2}, {2}), ValidationError);
}

TEST_CASE("reports round-trip and mark significance") {
  ScoreReport r;
  r.task = "tempeval";
  r.language = "en";
  r.regime = "ta";
  r.scorer = "token-f1";
  r.baseline = "baseline";
  r.subtasks = {"T-ident&class"};
  r.conditions = {Condition("baseline", {70.1, 70.4, 69.9, 70.2, 70.0}),
                  Condition("+VN", {72.3, 72.8, 72.1, 72.6, 72.5}),
                  Condition("+Random", {70.3, 69.8, 70.5, 70.0, 70.1})};
  const std::string text = SerializeReport(r);
  CHECK(ParseReport(text) == r);
  CHECK(SerializeReport(ParseReport(text)) == text);

  testing::TempDir dir;
  WriteReport(r, dir.File("r.txt"));
  CHECK(ReadReport(dir.File("r.txt")) == r);

  CHECK(r.Significance("+VN", "T-ident&class")->Significant());
  CHECK_FALSE(r.Significance("+Random", "T-ident&class")->Significant());
  CHECK_FALSE(r.Significance("baseline", "T-ident&class").has_value());
  const std::string table = FormatReportTable(r);
  CHECK(table.find("**72.5**") != std::string::npos);
  CHECK(table.find("| 70.1 |") != std::string::npos);
  CHECK_THROWS(ParseReport("task=x\nnonsense\n"));
}

}  // TEST_SUITE
