#ifndef VERBKNOW_EVENT_DATA_H_
#define VERBKNOW_EVENT_DATA_H_

#include <map>
#include <string>
#include <vector>

#include "verbknow/metrics.h"

namespace verbknow {

enum class EventTask { kTempEvalTrigger, kAceSequence };
std::string EventTaskName(EventTask t);
EventTask ParseEventTask(const std::string& name);

enum class Split { kTrain, kDev, kTest };
std::string SplitName(Split s);
Split ParseSplit(const std::string& name);

struct Sentence {
  std::vector<std::string> tokens;
  // TempEval: event type or O per token. ACE: trigger BIO tags.
  std::vector<std::string> labels;
  // ACE only: one argument BIO column per trigger span, in span order.
  std::vector<std::vector<std::string>> argument_tags;
};

struct Document {
  std::string id;
  std::vector<Sentence> sentences;
};

struct EventDataset {
  EventTask task = EventTask::kTempEvalTrigger;
  std::string language = "en";
  Split split = Split::kTrain;
  std::vector<Document> documents;

  size_t TokenCount() const;
  size_t SentenceCount() const;
  // Sorted distinct non-O label types (trigger types; roles for ACE args).
  std::vector<std::string> TriggerTypes() const;
  std::vector<std::string> ArgumentRoles() const;
};

struct LabelSchema {
  std::vector<std::string> trigger_types;
  std::vector<std::string> argument_roles;  // after time-role conflation

  static const std::vector<std::string>& TempEvalTypes();
  // The 35 raw ACE argument roles.
  static const std::vector<std::string>& AceRawRoles();
  // Maps the eight Time-* roles to Time; identity elsewhere.
  static std::string ConflateRole(const std::string& role);

  static LabelSchema TempEval();
  // Trigger types from the data; roles are the conflated ACE inventory plus
  // any extra roles the data carries.
  static LabelSchema FromData(const EventDataset& data);

  // TempEval: O + types. ACE: O + B-/I- per type.
  std::vector<std::string> TriggerTags(EventTask task) const;
  std::vector<std::string> ArgumentTags() const;
};

// CoNLL-style columns separated by tabs; blank lines end sentences and
// `-DOCSTART-` lines start documents. TempEval rows are `token label`; ACE
// rows are `token trigger-bio arg-bio...` with one argument column per
// trigger in the sentence. ACE roles are conflated on load.
EventDataset ReadEventConll(const std::string& path, EventTask task, Split split,
                            const std::string& language);
EventDataset ParseEventConll(const std::string& text, const std::string& source, EventTask task,
                             Split split, const std::string& language);
void WriteEventConll(const EventDataset& data, const std::string& path);

// Gold trigger/argument annotations per document, for ACE scoring.
std::vector<DocumentEvents> ExtractEvents(const EventDataset& data);

}  // namespace verbknow

#endif  // VERBKNOW_EVENT_DATA_H_
