#ifndef VERBKNOW_METRICS_H_
#define VERBKNOW_METRICS_H_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace verbknow {

// Precision/recall/F1 as percentages plus the raw counts.
struct Prf {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  size_t correct = 0;
  size_t predicted = 0;
  size_t gold = 0;

  static Prf FromCounts(size_t correct, size_t predicted, size_t gold);
  bool operator==(const Prf&) const = default;
};

// Micro P/R/F1 over non-O tokens; a token counts when predicted == gold.
Prf TokenF1(const std::vector<std::string>& pred, const std::vector<std::string>& gold);

// Half-open token span inside one sentence.
struct Span {
  int sentence = 0;
  int begin = 0;
  int end = 0;
  std::string type;

  bool SameOffsets(const Span& o) const {
    return sentence == o.sentence && begin == o.begin && end == o.end;
  }
  bool Overlaps(const Span& o) const {
    return sentence == o.sentence && begin < o.end && o.begin < end;
  }
  bool operator==(const Span&) const = default;
};

// Decodes BIO tags; a stray I-X opens a new span.
std::vector<Span> BioToSpans(const std::vector<std::string>& tags, int sentence = 0);

struct ArgumentMention {
  Span span;
  std::string role;
};

struct EventMention {
  Span trigger;  // trigger.type is the event type
  std::vector<ArgumentMention> arguments;
};

struct DocumentEvents {
  std::string id;
  std::vector<EventMention> events;
};

enum class AceSubtask { kTriggerIdent, kTriggerClass, kArgIdent, kArgClass };
std::string AceSubtaskName(AceSubtask s);
const std::vector<AceSubtask>& AllAceSubtasks();

// Exact-offset matching. Argument matches also require the owning triggers
// to share offsets. Documents are paired by position and must share ids.
// Throws ValidationError on overlapping gold spans within a subtask.
Prf AceSpanF1(const std::vector<DocumentEvents>& pred, const std::vector<DocumentEvents>& gold,
              AceSubtask subtask);

struct TTestResult {
  double t = 0.0;
  double p = 1.0;
  int df = 0;
  double mean_diff = 0.0;
  bool degenerate = false;  // zero variance in the differences
  bool Significant(double alpha = 0.05) const { return p < alpha; }
};

// Two-sided paired Student t-test on a - b. Zero-variance differences:
// p = 1 when the mean difference is zero, else p = 0; both flagged degenerate.
TTestResult PairedTTest(const std::vector<double>& a, const std::vector<double>& b);

double Mean(const std::vector<double>& v);

struct RunScore {
  uint64_t seed = 0;
  std::vector<std::pair<std::string, Prf>> subtasks;  // in report subtask order

  const Prf& Get(const std::string& subtask) const;
  bool operator==(const RunScore&) const = default;
};

struct ConditionResult {
  std::string name;  // e.g. baseline, +Random, +FN, +VN
  std::vector<RunScore> runs;

  std::vector<double> F1s(const std::string& subtask) const;
  double MeanF1(const std::string& subtask) const;
  bool operator==(const ConditionResult&) const = default;
};

struct ScoreReport {
  std::string task;
  std::string language;
  std::string regime;
  std::string scorer;
  std::string baseline;  // condition name significance is measured against
  std::vector<std::string> subtasks;
  std::vector<ConditionResult> conditions;

  const ConditionResult* Find(const std::string& name) const;
  // Paired test of `condition` vs the baseline condition (paired by run index).
  std::optional<TTestResult> Significance(const std::string& condition,
                                          const std::string& subtask) const;
  bool operator==(const ScoreReport&) const = default;
};

// Line-oriented key=value text; round-trips exactly.
std::string SerializeReport(const ScoreReport& report);
ScoreReport ParseReport(const std::string& text);
void WriteReport(const ScoreReport& report, const std::string& path);
ScoreReport ReadReport(const std::string& path);

// Conditions as columns, subtasks as rows; significant means marked **bold**.
std::string FormatReportTable(const ScoreReport& report);

}  // namespace verbknow

#endif  // VERBKNOW_METRICS_H_
