#ifndef VERBKNOW_EMBEDDING_SPACE_H_
#define VERBKNOW_EMBEDDING_SPACE_H_

#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

namespace verbknow {

// Static word-vector table. Vectors are stored raw; a row-normalized copy is
// kept for cosine queries. All-zero vectors are rejected on insertion.
class EmbeddingSpace {
 public:
  using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using ConstRowMap = Eigen::Map<const RowMatrix>;

  EmbeddingSpace() = default;
  EmbeddingSpace(int dim, std::string language, std::string alignment_tag = "");

  // Throws ValidationError on duplicate word, wrong dimension or zero vector.
  void Add(const std::string& word, const Eigen::VectorXd& vector);

  int dim() const { return dim_; }
  size_t size() const { return words_.size(); }
  bool empty() const { return words_.empty(); }
  bool Contains(const std::string& word) const { return index_.count(word) > 0; }
  std::optional<int> IndexOf(const std::string& word) const;

  const std::vector<std::string>& vocabulary() const { return words_; }
  Eigen::VectorXd Vector(const std::string& word) const;
  Eigen::VectorXd VectorAt(int index) const { return raw().row(index).transpose(); }
  // Unit-length rows, |V| x d.
  ConstRowMap normalized() const { return {norm_data_.data(), Rows(), dim_}; }
  ConstRowMap raw() const { return {raw_data_.data(), Rows(), dim_}; }

  double Cosine(const std::string& a, const std::string& b) const;

  const std::string& language() const { return language_; }
  const std::string& alignment_tag() const { return alignment_tag_; }
  void set_alignment_tag(std::string tag) { alignment_tag_ = std::move(tag); }

  // Hash over vocabulary and raw vector bytes.
  std::string ContentHash() const;

 private:
  int dim_ = 0;
  std::string language_;
  std::string alignment_tag_;
  std::vector<std::string> words_;
  std::unordered_map<std::string, int> index_;
  Eigen::Index Rows() const { return static_cast<Eigen::Index>(words_.size()); }

  std::vector<double> raw_data_;   // row-major |V| x d
  std::vector<double> norm_data_;
};

// Text word-vector format: first line "|V| d", then "word v1 ... vd".
// Lines with all-zero vectors are skipped with a warning; duplicate words keep
// the first occurrence.
EmbeddingSpace ReadEmbeddingText(const std::string& path, const std::string& language,
                                 const std::string& alignment_tag = "");
void WriteEmbeddingText(const EmbeddingSpace& space, const std::string& path);

}  // namespace verbknow

#endif  // VERBKNOW_EMBEDDING_SPACE_H_
