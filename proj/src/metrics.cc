#include "verbknow/metrics.h"

#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <sstream>

#include "verbknow/common.h"

namespace verbknow {
namespace {

bool IsOutside(const std::string& label) { return label.empty() || label == "O"; }

void CheckNoOverlap(const std::vector<Span>& spans, const std::string& what) {
  for (size_t i = 0; i < spans.size(); ++i) {
    for (size_t j = i + 1; j < spans.size(); ++j) {
      if (spans[i].Overlaps(spans[j])) {
        throw ValidationError("overlapping gold " + what + " spans in sentence " +
                              std::to_string(spans[i].sentence));
      }
    }
  }
}

struct ArgKey {
  Span trigger;
  Span arg;
  std::string role;
};

std::vector<ArgKey> Flatten(const DocumentEvents& doc) {
  std::vector<ArgKey> out;
  for (const auto& ev : doc.events) {
    for (const auto& a : ev.arguments) out.push_back({ev.trigger, a.span, a.role});
  }
  return out;
}

// One-to-one greedy matching; returns the number of matched predictions.
template <typename T, typename Eq>
size_t CountMatches(const std::vector<T>& pred, const std::vector<T>& gold, Eq eq) {
  std::vector<bool> used(gold.size(), false);
  size_t n = 0;
  for (const auto& p : pred) {
    for (size_t g = 0; g < gold.size(); ++g) {
      if (!used[g] && eq(p, gold[g])) {
        used[g] = true;
        ++n;
        break;
      }
    }
  }
  return n;
}

std::string Fmt(double v) {
  std::ostringstream s;
  s << std::setprecision(17) << v;
  return s.str();
}

std::vector<std::string> SplitChar(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) out.push_back(cur);
  return out;
}

}  // namespace

Prf Prf::FromCounts(size_t correct, size_t predicted, size_t gold) {
  Prf r;
  r.correct = correct;
  r.predicted = predicted;
  r.gold = gold;
  r.precision = predicted ? 100.0 * static_cast<double>(correct) / static_cast<double>(predicted) : 0.0;
  r.recall = gold ? 100.0 * static_cast<double>(correct) / static_cast<double>(gold) : 0.0;
  const double s = r.precision + r.recall;
  r.f1 = s > 0.0 ? 2.0 * r.precision * r.recall / s : 0.0;
  return r;
}

Prf TokenF1(const std::vector<std::string>& pred, const std::vector<std::string>& gold) {
  if (pred.size() != gold.size()) {
    throw ValidationError("prediction length " + std::to_string(pred.size()) +
                          " differs from gold length " + std::to_string(gold.size()));
  }
  size_t correct = 0, n_pred = 0, n_gold = 0;
  for (size_t i = 0; i < pred.size(); ++i) {
    const bool p = !IsOutside(pred[i]);
    const bool g = !IsOutside(gold[i]);
    n_pred += p;
    n_gold += g;
    if (p && g && pred[i] == gold[i]) ++correct;
  }
  return Prf::FromCounts(correct, n_pred, n_gold);
}

std::vector<Span> BioToSpans(const std::vector<std::string>& tags, int sentence) {
  std::vector<Span> spans;
  std::optional<Span> open;
  auto close = [&](int at) {
    if (open) {
      open->end = at;
      spans.push_back(*open);
      open.reset();
    }
  };
  for (int i = 0; i < static_cast<int>(tags.size()); ++i) {
    const std::string& t = tags[static_cast<size_t>(i)];
    if (IsOutside(t)) {
      close(i);
      continue;
    }
    if (t.size() < 3 || (t[0] != 'B' && t[0] != 'I') || t[1] != '-') {
      throw ValidationError("not a BIO tag: '" + t + "'");
    }
    const std::string type = t.substr(2);
    if (t[0] == 'I' && open && open->type == type) continue;
    close(i);
    open = Span{sentence, i, i + 1, type};
  }
  close(static_cast<int>(tags.size()));
  return spans;
}

std::string AceSubtaskName(AceSubtask s) {
  switch (s) {
    case AceSubtask::kTriggerIdent: return "T-ident";
    case AceSubtask::kTriggerClass: return "T-class";
    case AceSubtask::kArgIdent: return "ARG-ident";
    case AceSubtask::kArgClass: return "ARG-class";
  }
  return "?";
}

const std::vector<AceSubtask>& AllAceSubtasks() {
  static const std::vector<AceSubtask> all = {AceSubtask::kTriggerIdent, AceSubtask::kTriggerClass,
                                              AceSubtask::kArgIdent, AceSubtask::kArgClass};
  return all;
}

Prf AceSpanF1(const std::vector<DocumentEvents>& pred, const std::vector<DocumentEvents>& gold,
              AceSubtask subtask) {
  if (pred.size() != gold.size()) throw ValidationError("prediction and gold document counts differ");
  const bool args = subtask == AceSubtask::kArgIdent || subtask == AceSubtask::kArgClass;
  const bool typed = subtask == AceSubtask::kTriggerClass || subtask == AceSubtask::kArgClass;
  size_t correct = 0, n_pred = 0, n_gold = 0;
  for (size_t d = 0; d < gold.size(); ++d) {
    if (pred[d].id != gold[d].id) {
      throw ValidationError("document order mismatch: '" + pred[d].id + "' vs '" + gold[d].id + "'");
    }
    if (!args) {
      std::vector<Span> p, g;
      for (const auto& e : pred[d].events) p.push_back(e.trigger);
      for (const auto& e : gold[d].events) g.push_back(e.trigger);
      CheckNoOverlap(g, "trigger");
      n_pred += p.size();
      n_gold += g.size();
      correct += CountMatches(p, g, [typed](const Span& a, const Span& b) {
        return a.SameOffsets(b) && (!typed || a.type == b.type);
      });
    } else {
      for (const auto& e : gold[d].events) {
        std::vector<Span> spans;
        for (const auto& a : e.arguments) spans.push_back(a.span);
        CheckNoOverlap(spans, "argument");
      }
      const auto p = Flatten(pred[d]);
      const auto g = Flatten(gold[d]);
      n_pred += p.size();
      n_gold += g.size();
      correct += CountMatches(p, g, [typed](const ArgKey& a, const ArgKey& b) {
        return a.arg.SameOffsets(b.arg) && a.trigger.SameOffsets(b.trigger) &&
               (!typed || a.role == b.role);
      });
    }
  }
  return Prf::FromCounts(correct, n_pred, n_gold);
}

double Mean(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

TTestResult PairedTTest(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw ValidationError("paired t-test needs equal-length samples");
  if (a.size() < 2) throw ValidationError("paired t-test needs n >= 2");
  const size_t n = a.size();
  std::vector<double> d(n);
  for (size_t i = 0; i < n; ++i) d[i] = a[i] - b[i];
  TTestResult r;
  r.df = static_cast<int>(n) - 1;
  r.mean_diff = Mean(d);
  double ss = 0.0;
  for (double x : d) ss += (x - r.mean_diff) * (x - r.mean_diff);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  if (sd == 0.0) {
    r.degenerate = true;
    r.t = 0.0;
    r.p = r.mean_diff == 0.0 ? 1.0 : 0.0;
    return r;
  }
  r.t = r.mean_diff / (sd / std::sqrt(static_cast<double>(n)));
  boost::math::students_t dist(static_cast<double>(r.df));
  r.p = 2.0 * boost::math::cdf(boost::math::complement(dist, std::fabs(r.t)));
  return r;
}

const Prf& RunScore::Get(const std::string& subtask) const {
  for (const auto& [name, prf] : subtasks) {
    if (name == subtask) return prf;
  }
  throw ValidationError("run has no score for subtask '" + subtask + "'");
}

std::vector<double> ConditionResult::F1s(const std::string& subtask) const {
  std::vector<double> out;
  for (const auto& r : runs) out.push_back(r.Get(subtask).f1);
  return out;
}

double ConditionResult::MeanF1(const std::string& subtask) const { return Mean(F1s(subtask)); }

const ConditionResult* ScoreReport::Find(const std::string& name) const {
  for (const auto& c : conditions) {
    if (c.name == name) return &c;
  }
  return nullptr;
}

std::optional<TTestResult> ScoreReport::Significance(const std::string& condition,
                                                     const std::string& subtask) const {
  const ConditionResult* c = Find(condition);
  const ConditionResult* b = Find(baseline);
  if (!c || !b || c == b || c->runs.size() != b->runs.size() || c->runs.size() < 2) {
    return std::nullopt;
  }
  return PairedTTest(c->F1s(subtask), b->F1s(subtask));
}

std::string SerializeReport(const ScoreReport& r) {
  std::ostringstream out;
  out << "task=" << r.task << '\n'
      << "language=" << r.language << '\n'
      << "regime=" << r.regime << '\n'
      << "scorer=" << r.scorer << '\n'
      << "baseline=" << r.baseline << '\n';
  out << "subtasks=";
  for (size_t i = 0; i < r.subtasks.size(); ++i) out << (i ? "," : "") << r.subtasks[i];
  out << '\n';
  for (size_t c = 0; c < r.conditions.size(); ++c) {
    const auto& cond = r.conditions[c];
    const std::string prefix = "condition." + std::to_string(c);
    out << prefix << ".name=" << cond.name << '\n';
    out << prefix << ".runs=" << cond.runs.size() << '\n';
    for (size_t i = 0; i < cond.runs.size(); ++i) {
      const auto& run = cond.runs[i];
      const std::string rp = prefix + ".run." + std::to_string(i);
      out << rp << ".seed=" << run.seed << '\n';
      for (const auto& [name, prf] : run.subtasks) {
        out << rp << '.' << name << '=' << Fmt(prf.precision) << ' ' << Fmt(prf.recall) << ' '
            << Fmt(prf.f1) << ' ' << prf.correct << ' ' << prf.predicted << ' ' << prf.gold
            << '\n';
      }
    }
    for (const auto& s : r.subtasks) {
      out << prefix << ".mean." << s << '=' << Fmt(cond.MeanF1(s)) << '\n';
      if (auto t = r.Significance(cond.name, s)) {
        out << prefix << ".p." << s << '=' << Fmt(t->p) << (t->degenerate ? " degenerate" : "")
            << '\n';
      }
    }
  }
  return out.str();
}

ScoreReport ParseReport(const std::string& text) {
  ScoreReport r;
  std::istringstream in(text);
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError("report:" + std::to_string(line_no), "missing '='");
    const std::string key = line.substr(0, eq);
    const std::string value = line.substr(eq + 1);
    const auto parts = SplitChar(key, '.');
    if (key == "task") r.task = value;
    else if (key == "language") r.language = value;
    else if (key == "regime") r.regime = value;
    else if (key == "scorer") r.scorer = value;
    else if (key == "baseline") r.baseline = value;
    else if (key == "subtasks") r.subtasks = SplitChar(value, ',');
    else if (parts.size() >= 3 && parts[0] == "condition") {
      const size_t c = std::stoul(parts[1]);
      if (c >= r.conditions.size()) r.conditions.resize(c + 1);
      auto& cond = r.conditions[c];
      if (parts[2] == "name") {
        cond.name = value;
      } else if (parts[2] == "runs") {
        cond.runs.resize(std::stoul(value));
      } else if (parts[2] == "run" && parts.size() >= 5) {
        const size_t i = std::stoul(parts[3]);
        if (i >= cond.runs.size()) cond.runs.resize(i + 1);
        // Subtask names may not contain '.', so the remainder is one field.
        if (parts[4] == "seed") {
          cond.runs[i].seed = std::stoull(value);
        } else {
          std::istringstream vs(value);
          Prf prf;
          if (!(vs >> prf.precision >> prf.recall >> prf.f1 >> prf.correct >> prf.predicted >> prf.gold)) {
            throw ParseError("report:" + std::to_string(line_no), "bad score record");
          }
          cond.runs[i].subtasks.emplace_back(parts[4], prf);
        }
      }
      // mean./p. lines are derived and recomputed on demand.
    } else {
      throw ParseError("report:" + std::to_string(line_no), "unknown key '" + key + "'");
    }
  }
  return r;
}

void WriteReport(const ScoreReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path);
  out << SerializeReport(report);
}

ScoreReport ReadReport(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ParseReport(ss.str());
}

std::string FormatReportTable(const ScoreReport& r) {
  std::ostringstream out;
  out << "# " << r.task;
  if (!r.language.empty()) out << " (" << r.language << ")";
  if (!r.regime.empty()) out << ", regime " << r.regime;
  out << "\n";
  if (!r.scorer.empty()) out << "scorer: " << r.scorer << "\n";
  out << "\n| subtask |";
  for (const auto& c : r.conditions) out << ' ' << c.name << " |";
  out << "\n|---|";
  for (size_t i = 0; i < r.conditions.size(); ++i) out << "---|";
  out << '\n';
  for (const auto& s : r.subtasks) {
    out << "| " << s << " |";
    for (const auto& c : r.conditions) {
      std::ostringstream cell;
      cell << std::fixed << std::setprecision(1) << c.MeanF1(s);
      const auto t = r.Significance(c.name, s);
      const bool bold = t && t->Significant();
      out << ' ' << (bold ? "**" + cell.str() + "**" : cell.str()) << " |";
    }
    out << '\n';
  }
  out << "\nmean F1 over";
  for (const auto& c : r.conditions) out << ' ' << c.name << '=' << c.runs.size();
  out << " runs; bold: paired t-test vs " << r.baseline << ", p < 0.05\n";
  return out.str();
}

}  // namespace verbknow
