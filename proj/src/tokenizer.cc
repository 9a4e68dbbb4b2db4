#include "verbknow/tokenizer.h"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>

#include "verbknow/common.h"

namespace verbknow {

WordPieceTokenizer::WordPieceTokenizer(std::vector<std::string> vocab, bool lowercase,
                                       size_t max_chars_per_word)
    : vocab_(std::move(vocab)), lowercase_(lowercase), max_chars_per_word_(max_chars_per_word) {
  for (size_t i = 0; i < vocab_.size(); ++i) index_.emplace(vocab_[i], static_cast<int>(i));
  auto need = [&](const char* tok) {
    auto it = index_.find(tok);
    if (it == index_.end()) throw ValidationError(std::string("vocabulary lacks ") + tok);
    return it->second;
  };
  cls_id_ = need(kCls);
  sep_id_ = need(kSep);
  unk_id_ = need(kUnk);
  auto pad = index_.find(kPad);
  pad_id_ = pad == index_.end() ? -1 : pad->second;
}

WordPieceTokenizer WordPieceTokenizer::FromVocabFile(const std::string& path, bool lowercase) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open vocabulary " + path);
  std::vector<std::string> vocab;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    vocab.push_back(line);
  }
  return WordPieceTokenizer(std::move(vocab), lowercase);
}

void WordPieceTokenizer::WriteVocabFile(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path);
  for (const auto& t : vocab_) out << t << '\n';
}

int WordPieceTokenizer::IdOf(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? unk_id_ : it->second;
}

std::vector<std::string> WordPieceTokenizer::BasicSplit(const std::string& text) const {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) out.push_back(std::move(cur));
    cur.clear();
  };
  for (unsigned char c : text) {
    if (std::isspace(c)) {
      flush();
    } else if (c < 0x80 && std::ispunct(c)) {
      flush();
      out.emplace_back(1, static_cast<char>(c));
    } else {
      cur.push_back(lowercase_ ? static_cast<char>(std::tolower(c)) : static_cast<char>(c));
    }
  }
  flush();
  return out;
}

std::vector<std::string> WordPieceTokenizer::WordPieces(const std::string& word) const {
  if (word.size() > max_chars_per_word_) return {kUnk};
  if (index_.count(word)) return {word};
  std::vector<std::string> pieces;
  size_t start = 0;
  while (start < word.size()) {
    size_t end = word.size();
    std::string match;
    while (start < end) {
      std::string sub = word.substr(start, end - start);
      if (start > 0) sub = "##" + sub;
      if (index_.count(sub)) {
        match = std::move(sub);
        break;
      }
      --end;
    }
    if (match.empty()) return {kUnk};
    pieces.push_back(std::move(match));
    start = end;
  }
  return pieces;
}

std::vector<std::string> WordPieceTokenizer::Tokenize(const std::string& text) const {
  std::vector<std::string> out;
  for (const auto& word : BasicSplit(text)) {
    auto pieces = WordPieces(word);
    out.insert(out.end(), pieces.begin(), pieces.end());
  }
  return out;
}

std::vector<int> WordPieceTokenizer::ConvertToIds(const std::vector<std::string>& pieces) const {
  std::vector<int> ids;
  ids.reserve(pieces.size());
  for (const auto& p : pieces) ids.push_back(IdOf(p));
  return ids;
}

std::vector<std::string> BuildWordVocabulary(const std::vector<std::string>& words,
                                             const std::vector<std::string>& extra_pieces) {
  std::vector<std::string> vocab = {WordPieceTokenizer::kPad, WordPieceTokenizer::kUnk,
                                    WordPieceTokenizer::kCls, WordPieceTokenizer::kSep,
                                    WordPieceTokenizer::kMask};
  std::set<std::string> rest(words.begin(), words.end());
  rest.insert(extra_pieces.begin(), extra_pieces.end());
  for (const auto& s : vocab) rest.erase(s);
  vocab.insert(vocab.end(), rest.begin(), rest.end());
  return vocab;
}

}  // namespace verbknow
