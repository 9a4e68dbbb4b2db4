#include "verbknow/event_data.h"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "verbknow/common.h"

namespace verbknow {
namespace {

std::vector<std::string> SplitTabs(const std::string& line) {
  std::vector<std::string> out;
  size_t start = 0;
  while (true) {
    const size_t tab = line.find('\t', start);
    out.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  return out;
}

bool IsBio(const std::string& tag) {
  return tag == "O" || (tag.size() > 2 && (tag[0] == 'B' || tag[0] == 'I') && tag[1] == '-');
}

// Repairs I-X that cannot continue a span into B-X.
int RepairBio(std::vector<std::string>& tags) {
  int fixed = 0;
  for (size_t i = 0; i < tags.size(); ++i) {
    if (tags[i].rfind("I-", 0) != 0) continue;
    const bool ok = i > 0 && tags[i - 1].size() > 2 && tags[i - 1].substr(2) == tags[i].substr(2);
    if (!ok) {
      tags[i][0] = 'B';
      ++fixed;
    }
  }
  return fixed;
}

std::string ConflateTag(const std::string& tag) {
  if (tag == "O") return tag;
  return tag.substr(0, 2) + LabelSchema::ConflateRole(tag.substr(2));
}

}  // namespace

std::string EventTaskName(EventTask t) {
  return t == EventTask::kTempEvalTrigger ? "tempeval-trigger" : "ace-sequence";
}

EventTask ParseEventTask(const std::string& name) {
  if (name == "tempeval-trigger" || name == "tempeval") return EventTask::kTempEvalTrigger;
  if (name == "ace-sequence" || name == "ace") return EventTask::kAceSequence;
  throw ValidationError("unknown event task '" + name + "'");
}

std::string SplitName(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kDev: return "dev";
    case Split::kTest: return "test";
  }
  return "?";
}

Split ParseSplit(const std::string& name) {
  if (name == "train") return Split::kTrain;
  if (name == "dev") return Split::kDev;
  if (name == "test") return Split::kTest;
  throw ValidationError("unknown split '" + name + "'");
}

size_t EventDataset::TokenCount() const {
  size_t n = 0;
  for (const auto& d : documents) {
    for (const auto& s : d.sentences) n += s.tokens.size();
  }
  return n;
}

size_t EventDataset::SentenceCount() const {
  size_t n = 0;
  for (const auto& d : documents) n += d.sentences.size();
  return n;
}

std::vector<std::string> EventDataset::TriggerTypes() const {
  std::set<std::string> types;
  for (const auto& d : documents) {
    for (const auto& s : d.sentences) {
      for (const auto& l : s.labels) {
        if (l == "O") continue;
        types.insert(task == EventTask::kAceSequence ? l.substr(2) : l);
      }
    }
  }
  return {types.begin(), types.end()};
}

std::vector<std::string> EventDataset::ArgumentRoles() const {
  std::set<std::string> roles;
  for (const auto& d : documents) {
    for (const auto& s : d.sentences) {
      for (const auto& col : s.argument_tags) {
        for (const auto& t : col) {
          if (t != "O") roles.insert(t.substr(2));
        }
      }
    }
  }
  return {roles.begin(), roles.end()};
}

const std::vector<std::string>& LabelSchema::TempEvalTypes() {
  static const std::vector<std::string> types = {"OCCURRENCE", "STATE",     "REPORTING", "I-ACTION",
                                                 "I-STATE",    "ASPECTUAL", "PERCEPTION"};
  return types;
}

const std::vector<std::string>& LabelSchema::AceRawRoles() {
  static const std::vector<std::string> roles = {
      "Person",      "Place",      "Buyer",       "Seller",          "Beneficiary",
      "Price",       "Artifact",   "Origin",      "Destination",     "Giver",
      "Recipient",   "Money",      "Org",         "Agent",           "Victim",
      "Instrument",  "Entity",     "Attacker",    "Target",          "Defendant",
      "Adjudicator", "Prosecutor", "Plaintiff",   "Crime",           "Position",
      "Sentence",    "Vehicle",    "Time-Within", "Time-At-Beginning", "Time-At-End",
      "Time-Before", "Time-After", "Time-Holds",  "Time-Starting",   "Time-Ending"};
  return roles;
}

std::string LabelSchema::ConflateRole(const std::string& role) {
  static const std::set<std::string> time_roles = {
      "Time-Within", "Time-At-Beginning", "Time-At-End",   "Time-Before",
      "Time-After",  "Time-Holds",        "Time-Starting", "Time-Ending"};
  return time_roles.count(role) ? "Time" : role;
}

LabelSchema LabelSchema::TempEval() {
  LabelSchema s;
  s.trigger_types = TempEvalTypes();
  return s;
}

LabelSchema LabelSchema::FromData(const EventDataset& data) {
  if (data.task == EventTask::kTempEvalTrigger) {
    LabelSchema s = TempEval();
    for (const auto& t : data.TriggerTypes()) {
      if (std::find(s.trigger_types.begin(), s.trigger_types.end(), t) == s.trigger_types.end()) {
        throw ValidationError("'" + t + "' is not a TempEval event type");
      }
    }
    return s;
  }
  LabelSchema s;
  s.trigger_types = data.TriggerTypes();
  std::set<std::string> roles;
  for (const auto& r : AceRawRoles()) roles.insert(ConflateRole(r));
  for (const auto& r : data.ArgumentRoles()) roles.insert(r);
  s.argument_roles.assign(roles.begin(), roles.end());
  return s;
}

std::vector<std::string> LabelSchema::TriggerTags(EventTask task) const {
  std::vector<std::string> tags = {"O"};
  for (const auto& t : trigger_types) {
    if (task == EventTask::kAceSequence) {
      tags.push_back("B-" + t);
      tags.push_back("I-" + t);
    } else {
      tags.push_back(t);
    }
  }
  return tags;
}

std::vector<std::string> LabelSchema::ArgumentTags() const {
  std::vector<std::string> tags = {"O"};
  for (const auto& r : argument_roles) {
    tags.push_back("B-" + r);
    tags.push_back("I-" + r);
  }
  return tags;
}

EventDataset ParseEventConll(const std::string& text, const std::string& source, EventTask task,
                             Split split, const std::string& language) {
  EventDataset data;
  data.task = task;
  data.split = split;
  data.language = language;
  std::istringstream in(text);
  std::string line;
  size_t line_no = 0;
  Sentence current;
  size_t sentence_start = 0;
  int repaired = 0;
  std::vector<std::vector<std::string>> arg_cols;

  auto flush = [&]() {
    if (current.tokens.empty()) return;
    const std::string locus = source + ":" + std::to_string(sentence_start);
    if (task == EventTask::kAceSequence) {
      repaired += RepairBio(current.labels);
      const size_t n_triggers = BioToSpans(current.labels).size();
      if (arg_cols.size() != n_triggers) {
        throw ParseError(locus, "sentence has " + std::to_string(n_triggers) + " triggers but " +
                                    std::to_string(arg_cols.size()) + " argument columns");
      }
      for (auto& col : arg_cols) repaired += RepairBio(col);
      current.argument_tags = std::move(arg_cols);
    }
    if (data.documents.empty()) data.documents.push_back({source + "#0", {}});
    data.documents.back().sentences.push_back(std::move(current));
    current = Sentence{};
    arg_cols.clear();
  };

  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::string locus = source + ":" + std::to_string(line_no);
    if (Trim(line).empty()) {
      flush();
      continue;
    }
    if (line.rfind("-DOCSTART-", 0) == 0) {
      flush();
      std::string id = Trim(line.substr(10));
      if (id.empty()) id = source + "#" + std::to_string(data.documents.size());
      data.documents.push_back({id, {}});
      continue;
    }
    const auto cols = SplitTabs(line);
    if (cols.size() < 2 || cols[0].empty()) throw ParseError(locus, "expected token<TAB>label");
    if (current.tokens.empty()) sentence_start = line_no;
    const size_t width = 2 + arg_cols.size();
    if (task == EventTask::kTempEvalTrigger) {
      if (cols.size() != 2) throw ParseError(locus, "TempEval rows have exactly two columns");
    } else {
      if (!current.tokens.empty() && cols.size() != width) {
        throw ParseError(locus, "column count changed within a sentence");
      }
      if (current.tokens.empty()) arg_cols.assign(cols.size() - 2, {});
      for (size_t c = 1; c < cols.size(); ++c) {
        if (!IsBio(cols[c])) throw ParseError(locus, "not a BIO tag: '" + cols[c] + "'");
      }
      for (size_t c = 2; c < cols.size(); ++c) arg_cols[c - 2].push_back(ConflateTag(cols[c]));
    }
    current.tokens.push_back(cols[0]);
    current.labels.push_back(cols[1]);
  }
  flush();
  // Drop empty documents (e.g. a trailing DOCSTART).
  std::erase_if(data.documents, [](const Document& d) { return d.sentences.empty(); });
  if (repaired > 0) {
    LogWarning(source + ": repaired " + std::to_string(repaired) + " invalid I- tags to B-");
  }
  if (data.documents.empty()) throw ValidationError(source + ": no sentences found");
  return data;
}

EventDataset ReadEventConll(const std::string& path, EventTask task, Split split,
                            const std::string& language) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open event data " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ParseEventConll(ss.str(), path, task, split, language);
}

void WriteEventConll(const EventDataset& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path);
  for (const auto& doc : data.documents) {
    out << "-DOCSTART- " << doc.id << "\n\n";
    for (const auto& s : doc.sentences) {
      for (size_t i = 0; i < s.tokens.size(); ++i) {
        out << s.tokens[i] << '\t' << s.labels[i];
        for (const auto& col : s.argument_tags) out << '\t' << col[i];
        out << '\n';
      }
      out << '\n';
    }
  }
}

std::vector<DocumentEvents> ExtractEvents(const EventDataset& data) {
  std::vector<DocumentEvents> out;
  for (const auto& doc : data.documents) {
    DocumentEvents de;
    de.id = doc.id;
    for (size_t si = 0; si < doc.sentences.size(); ++si) {
      const auto& s = doc.sentences[si];
      const int sent = static_cast<int>(si);
      const auto triggers = BioToSpans(s.labels, sent);
      for (size_t t = 0; t < triggers.size(); ++t) {
        EventMention ev;
        ev.trigger = triggers[t];
        if (t < s.argument_tags.size()) {
          for (const auto& span : BioToSpans(s.argument_tags[t], sent)) {
            ev.arguments.push_back({span, span.type});
          }
        }
        de.events.push_back(std::move(ev));
      }
    }
    out.push_back(std::move(de));
  }
  return out;
}

}  // namespace verbknow
