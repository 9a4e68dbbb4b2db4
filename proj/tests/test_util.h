#ifndef VERBKNOW_TESTS_TEST_UTIL_H_
#define VERBKNOW_TESTS_TEST_UTIL_H_

#include <atomic>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <unistd.h>

#include "verbknow/tokenizer.h"

namespace testing {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("verbknow-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  std::string File(const std::string& name) const { return (path_ / name).string(); }
  std::string path() const { return path_.string(); }

 private:
  std::filesystem::path path_;
};

inline void WriteFile(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

inline std::string ReadFile(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

inline std::shared_ptr<const verbknow::WordPieceTokenizer> SmallTokenizer() {
  return std::make_shared<const verbknow::WordPieceTokenizer>(verbknow::BuildWordVocabulary(
      {"walk", "march", "run", "hit", "beat", "the", "man", "city", "attacked", "died"}, {"##ed", "##s"}));
}

}  // namespace testing

#endif  // VERBKNOW_TESTS_TEST_UTIL_H_
