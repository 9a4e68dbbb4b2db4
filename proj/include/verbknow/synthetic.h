#ifndef VERBKNOW_SYNTHETIC_H_
#define VERBKNOW_SYNTHETIC_H_

// Synthetic lexica, embedding spaces and event data for desk-scale runs and
// the bundled fixtures.

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "verbknow/embedding_space.h"
#include "verbknow/encoder.h"
#include "verbknow/event_data.h"
#include "verbknow/lexicon.h"

namespace verbknow {

struct SyntheticLexiconConfig {
  int classes = 20;
  int verbs_per_class = 10;
  // Verbs that additionally join the next class (cross-class duplicates).
  int shared_verbs = 0;
  uint64_t seed = 1;
  std::string resource = "synthetic";
  std::string language = "en";
  std::string suffix;  // appended to every lemma, e.g. "_es"
};

// Class ids are "class-00", "class-01", ...; lemmas are pronounceable
// pseudo-words, unique within the lexicon.
VerbLexicon MakeSyntheticLexicon(const SyntheticLexiconConfig& cfg);

// Members of `class_id` in a fixed (sorted) order.
std::vector<std::string> ClassMembers(const VerbLexicon& lexicon, const std::string& class_id);

struct ClusterSpaceConfig {
  int dim = 32;
  double noise = 0.3;  // per-verb deviation from the class centroid
  uint64_t seed = 2;
  std::string language = "en";
  std::string alignment_tag = "synthetic-aligned";
};

// Verb vectors = mean of their class centroids + Gaussian noise. `extra`
// words (fillers) get independent random vectors.
EmbeddingSpace MakeClusteredSpace(const VerbLexicon& lexicon, const ClusterSpaceConfig& cfg,
                                  const std::vector<std::string>& extra = {});

// A copy of `source` lexicon's space under renamed words, perturbed by
// `noise`, sharing the alignment tag: a stand-in for an aligned target space.
EmbeddingSpace MakeAlignedTargetSpace(const EmbeddingSpace& source, const std::string& suffix,
                                      double noise, uint64_t seed, const std::string& language);

const std::vector<std::string>& SyntheticFillers();

struct SyntheticEventConfig {
  int sentences = 200;
  int min_fillers = 2;
  int max_fillers = 5;
  uint64_t seed = 3;
  std::string language = "en";
};

// TempEval-style data: each sentence holds one verb among filler tokens; the
// verb's label is the event type assigned to its (first) class. Only `verbs`
// are used.
EventDataset MakeSyntheticTempEval(const VerbLexicon& lexicon, const std::vector<std::string>& verbs,
                                   const SyntheticEventConfig& cfg, Split split);
// Deterministic class -> TempEval type map used above.
std::string SyntheticEventType(const VerbLexicon& lexicon, const std::string& verb);

// ACE-style data: trigger verb plus Agent/Target/Place/Time arguments.
EventDataset MakeSyntheticAce(const VerbLexicon& lexicon, const std::vector<std::string>& verbs,
                              const SyntheticEventConfig& cfg, Split split);

// Tokenizer over lexicon lemmas, fillers and `extra` words.
std::shared_ptr<const WordPieceTokenizer> MakeSyntheticTokenizer(
    const VerbLexicon& lexicon, const std::vector<std::string>& extra = {});

// Desk-scale encoder config: 2 layers, h=32, 2 heads, intermediate 128.
EncoderConfig TinyDeskConfig();

}  // namespace verbknow

#endif  // VERBKNOW_SYNTHETIC_H_
