#ifndef VERBKNOW_TOKENIZER_H_
#define VERBKNOW_TOKENIZER_H_

#include <string>
#include <unordered_map>
#include <vector>

namespace verbknow {

// Greedy longest-match-first WordPiece over a fixed vocabulary, with BERT
// special symbols. Continuation pieces carry the "##" prefix.
class WordPieceTokenizer {
 public:
  static constexpr const char* kPad = "[PAD]";
  static constexpr const char* kUnk = "[UNK]";
  static constexpr const char* kCls = "[CLS]";
  static constexpr const char* kSep = "[SEP]";
  static constexpr const char* kMask = "[MASK]";

  WordPieceTokenizer() = default;
  // Throws ValidationError when [CLS], [SEP] or [UNK] is missing.
  explicit WordPieceTokenizer(std::vector<std::string> vocab, bool lowercase = true,
                              size_t max_chars_per_word = 100);

  // One token per line (BERT vocab.txt).
  static WordPieceTokenizer FromVocabFile(const std::string& path, bool lowercase = true);
  void WriteVocabFile(const std::string& path) const;

  // Whitespace and punctuation split, then WordPiece. Unknown words -> [UNK].
  std::vector<std::string> Tokenize(const std::string& text) const;
  // WordPiece pieces for a single word (no basic splitting).
  std::vector<std::string> WordPieces(const std::string& word) const;
  std::vector<int> ConvertToIds(const std::vector<std::string>& pieces) const;

  int IdOf(const std::string& token) const;  // [UNK] id when absent
  bool Has(const std::string& token) const { return index_.count(token) > 0; }
  const std::string& TokenOf(int id) const { return vocab_.at(static_cast<size_t>(id)); }
  int size() const { return static_cast<int>(vocab_.size()); }
  const std::vector<std::string>& vocab() const { return vocab_; }
  bool lowercase() const { return lowercase_; }

  int cls_id() const { return cls_id_; }
  int sep_id() const { return sep_id_; }
  int unk_id() const { return unk_id_; }
  int pad_id() const { return pad_id_; }

 private:
  std::vector<std::string> BasicSplit(const std::string& text) const;

  std::vector<std::string> vocab_;
  std::unordered_map<std::string, int> index_;
  bool lowercase_ = true;
  size_t max_chars_per_word_ = 100;
  int cls_id_ = -1, sep_id_ = -1, unk_id_ = -1, pad_id_ = -1;
};

// Vocabulary for the bundled tiny encoder: specials followed by the given
// whole words (deduplicated, sorted) and optional extra pieces.
std::vector<std::string> BuildWordVocabulary(const std::vector<std::string>& words,
                                             const std::vector<std::string>& extra_pieces = {});

}  // namespace verbknow

#endif  // VERBKNOW_TOKENIZER_H_
