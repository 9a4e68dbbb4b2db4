#ifndef VERBKNOW_LEXICON_H_
#define VERBKNOW_LEXICON_H_

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace verbknow {

enum class LexiconFormat { kVerbNetXml, kFrameNetLu, kGenericClassMap };

LexiconFormat ParseLexiconFormat(const std::string& name);
std::string LexiconFormatName(LexiconFormat format);

// Verb lemma -> class/frame ids. Lemmas are lowercased and stripped of
// ".pos" and "_<digits>" suffixes.
class VerbLexicon {
 public:
  VerbLexicon() = default;
  VerbLexicon(std::string resource_name, std::string language)
      : resource_name_(std::move(resource_name)), language_(std::move(language)) {}

  void Add(const std::string& lemma, const std::string& class_id);

  const std::map<std::string, std::set<std::string>>& entries() const { return entries_; }
  // Inverse view: class id -> members.
  const std::map<std::string, std::set<std::string>>& classes() const { return classes_; }

  bool empty() const { return entries_.empty(); }
  size_t size() const { return entries_.size(); }
  bool Contains(const std::string& lemma) const { return entries_.count(lemma) > 0; }
  bool ShareClass(const std::string& a, const std::string& b) const;

  const std::string& resource_name() const { return resource_name_; }
  const std::string& language() const { return language_; }
  void set_resource_name(std::string s) { resource_name_ = std::move(s); }
  void set_language(std::string s) { language_ = std::move(s); }

 private:
  std::map<std::string, std::set<std::string>> entries_;
  std::map<std::string, std::set<std::string>> classes_;
  std::string resource_name_;
  std::string language_ = "en";
};

// Unordered verb pair kept in canonical (lexicographic) order.
struct VerbPair {
  std::string first;
  std::string second;

  VerbPair() = default;
  // Canonicalizes; throws ValidationError if a == b or either is empty.
  VerbPair(std::string a, std::string b);

  auto operator<=>(const VerbPair&) const = default;
};

enum class PairLabel { kNegative = 0, kPositive = 1 };

struct LabeledPair {
  VerbPair pair;
  PairLabel label = PairLabel::kPositive;
};

class ConstraintSet {
 public:
  ConstraintSet() = default;
  ConstraintSet(std::string resource, std::string language)
      : resource_(std::move(resource)), language_(std::move(language)) {}

  // Returns false when the pair was already present.
  bool Insert(const VerbPair& pair) { return pairs_.insert(pair).second; }
  bool Contains(const VerbPair& pair) const { return pairs_.count(pair) > 0; }
  bool Contains(const std::string& a, const std::string& b) const;

  const std::set<VerbPair>& pairs() const { return pairs_; }
  std::vector<VerbPair> ToVector() const { return {pairs_.begin(), pairs_.end()}; }
  std::set<std::string> Lemmas() const;
  size_t size() const { return pairs_.size(); }
  bool empty() const { return pairs_.empty(); }

  const std::string& resource() const { return resource_; }
  const std::string& language() const { return language_; }
  void set_resource(std::string s) { resource_ = std::move(s); }
  void set_language(std::string s) { language_ = std::move(s); }

  // Order-independent content hash (pairs only).
  std::string ContentHash() const;

  bool operator==(const ConstraintSet& o) const { return pairs_ == o.pairs_; }

 private:
  std::set<VerbPair> pairs_;
  std::string resource_;
  std::string language_ = "en";
};

struct LoadOptions {
  std::string resource_name;  // defaults to the format name
  std::string language = "en";
};

struct LoadResult {
  VerbLexicon lexicon;
  std::vector<std::string> warnings;
};

// `path` may be a file or, for XML formats, a directory of *.xml files.
LoadResult LoadLexicon(const std::string& path, LexiconFormat format,
                       const LoadOptions& options = {});

// Parsers over in-memory text; `source` is used in error loci.
LoadResult ParseGenericClassMap(const std::string& text, const std::string& source,
                                const LoadOptions& options = {});
// One VerbNet class document; subclasses are flattened into the root class.
void ParseVerbNetXml(const std::string& text, const std::string& source, VerbLexicon* lexicon);
// FrameNet frame documents (<frame><lexUnit/>) or luIndex (<lu/>); verbs only.
void ParseFrameNetXml(const std::string& text, const std::string& source, VerbLexicon* lexicon);

// Lowercase; strips "lemma.pos" and "lemma_<digits>" suffixes; internal
// whitespace becomes '_'. Returns empty string when nothing remains.
std::string NormalizeLemma(const std::string& raw);

ConstraintSet GeneratePositivePairs(const VerbLexicon& lexicon);

struct LexiconStats {
  size_t lemma_count = 0;
  size_t class_count = 0;
  // class size -> number of classes of that size
  std::map<size_t, size_t> member_histogram;
  uint64_t raw_pair_count = 0;       // sum over classes of n(n-1)/2
  uint64_t duplicate_pair_count = 0; // pairs counted in more than one class
  uint64_t forecast_pair_count = 0;  // raw - duplicates
};

LexiconStats ComputeLexiconStats(const VerbLexicon& lexicon);
std::string FormatLexiconStats(const LexiconStats& stats);

// TSV "verb1<TAB>verb2", canonical order, one pair per line.
void WriteConstraintsTsv(const ConstraintSet& set, const std::string& path);
ConstraintSet ReadConstraintsTsv(const std::string& path);

}  // namespace verbknow

#endif  // VERBKNOW_LEXICON_H_
