#include "verbknow/embedding_space.h"

#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "verbknow/common.h"

namespace verbknow {

EmbeddingSpace::EmbeddingSpace(int dim, std::string language, std::string alignment_tag)
    : dim_(dim), language_(std::move(language)), alignment_tag_(std::move(alignment_tag)) {
  if (dim <= 0) throw ValidationError("embedding dimension must be positive");
}

void EmbeddingSpace::Add(const std::string& word, const Eigen::VectorXd& vector) {
  if (vector.size() != dim_) {
    throw ValidationError("vector for '" + word + "' has dimension " +
                          std::to_string(vector.size()) + ", expected " + std::to_string(dim_));
  }
  if (index_.count(word)) throw ValidationError("duplicate embedding entry '" + word + "'");
  const double norm = vector.norm();
  if (norm == 0.0) throw ValidationError("all-zero vector for '" + word + "'");
  for (int j = 0; j < dim_; ++j) {
    raw_data_.push_back(vector[j]);
    norm_data_.push_back(vector[j] / norm);
  }
  index_.emplace(word, static_cast<int>(words_.size()));
  words_.push_back(word);
}

std::optional<int> EmbeddingSpace::IndexOf(const std::string& word) const {
  auto it = index_.find(word);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

Eigen::VectorXd EmbeddingSpace::Vector(const std::string& word) const {
  auto idx = IndexOf(word);
  if (!idx) throw ValidationError("word not in embedding space: " + word);
  return raw().row(*idx).transpose();
}

double EmbeddingSpace::Cosine(const std::string& a, const std::string& b) const {
  auto ia = IndexOf(a), ib = IndexOf(b);
  if (!ia || !ib) throw ValidationError("cosine on out-of-vocabulary word");
  return normalized().row(*ia).dot(normalized().row(*ib));
}

std::string EmbeddingSpace::ContentHash() const {
  uint64_t h = Fnv1a64(std::to_string(dim_));
  for (const auto& w : words_) h = Fnv1a64(w, h);
  h = Fnv1a64(std::string_view(reinterpret_cast<const char*>(raw_data_.data()),
                               raw_data_.size() * sizeof(double)),
              h);
  return HexDigest(h);
}

EmbeddingSpace ReadEmbeddingText(const std::string& path, const std::string& language,
                                 const std::string& alignment_tag) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open embedding file " + path);
  std::string header;
  if (!std::getline(in, header)) throw ParseError(path + ":1", "missing header");
  std::istringstream hs(header);
  long long count = 0;
  int dim = 0;
  if (!(hs >> count >> dim) || count < 0 || dim <= 0) {
    throw ParseError(path + ":1", "expected '|V| d' header");
  }
  EmbeddingSpace space(dim, language, alignment_tag);
  std::string line;
  size_t line_no = 1;
  size_t skipped = 0;
  Eigen::VectorXd v(dim);
  while (std::getline(in, line)) {
    ++line_no;
    if (Trim(line).empty()) continue;
    std::istringstream ls(line);
    std::string word;
    ls >> word;
    for (int j = 0; j < dim; ++j) {
      if (!(ls >> v[j])) {
        throw ParseError(path + ":" + std::to_string(line_no),
                         "expected " + std::to_string(dim) + " components");
      }
    }
    if (v.isZero(0.0)) {
      ++skipped;
      continue;
    }
    if (space.Contains(word)) {
      ++skipped;
      continue;
    }
    space.Add(word, v);
  }
  if (skipped > 0) {
    LogWarning(path + ": skipped " + std::to_string(skipped) + " zero or duplicate vectors");
  }
  return space;
}

void WriteEmbeddingText(const EmbeddingSpace& space, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path);
  out << space.size() << ' ' << space.dim() << '\n';
  out << std::setprecision(17);
  for (size_t i = 0; i < space.size(); ++i) {
    out << space.vocabulary()[i];
    for (int j = 0; j < space.dim(); ++j) out << ' ' << space.raw()(static_cast<Eigen::Index>(i), j);
    out << '\n';
  }
}

}  // namespace verbknow
