#ifndef VERBKNOW_COMMON_H_
#define VERBKNOW_COMMON_H_

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace verbknow {

// Base class for all errors raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input file. `locus` names the line or XML element.
class ParseError : public Error {
 public:
  ParseError(const std::string& locus, const std::string& what)
      : Error(locus + ": " + what), locus_(locus) {}
  const std::string& locus() const { return locus_; }

 private:
  std::string locus_;
};

// Precondition or configuration violation.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Training diverged (NaN/Inf loss).
class DivergenceError : public Error {
 public:
  using Error::Error;
};

// Warnings go to stderr unless silenced; tests silence them.
void LogWarning(std::string_view message);
void LogInfo(std::string_view message);
void SetLogQuiet(bool quiet);
bool LogQuiet();

// 64-bit FNV-1a. Stable across platforms; used for provenance hashes.
uint64_t Fnv1a64(std::string_view data, uint64_t seed = 0xcbf29ce484222325ULL);
std::string HexDigest(uint64_t h);
std::string HashFile(const std::string& path);

std::string ToLower(std::string_view s);
std::string Trim(std::string_view s);

}  // namespace verbknow

#endif  // VERBKNOW_COMMON_H_
