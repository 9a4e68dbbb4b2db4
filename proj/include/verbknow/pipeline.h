#ifndef VERBKNOW_PIPELINE_H_
#define VERBKNOW_PIPELINE_H_

// Run plumbing shared by the CLI and the tests: flat key=value configs,
// crash-safe run manifests, derived seeds and a bounded parallel map.

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <functional>
#include <map>
#include <string>
#include <thread>
#include <vector>

#include "verbknow/common.h"
#include "verbknow/event_model.h"
#include "verbknow/metrics.h"

namespace verbknow {

// Ordered key=value lines. '#' starts a comment line; values keep inner
// spaces and are double-quoted when they hold ',' or '#'.
class KvConfig {
 public:
  static KvConfig Parse(const std::string& text, const std::string& source = "<config>");
  static KvConfig Read(const std::string& path);
  void Write(const std::string& path) const;
  std::string Serialize() const;

  void Set(const std::string& key, const std::string& value);
  void Set(const std::string& key, const char* value) { Set(key, std::string(value)); }
  void Set(const std::string& key, double value);
  void Set(const std::string& key, int value) { Set(key, std::to_string(value)); }
  void Set(const std::string& key, uint64_t value) { Set(key, std::to_string(value)); }
  void Set(const std::string& key, bool value) { Set(key, std::string(value ? "true" : "false")); }

  bool Has(const std::string& key) const { return values_.count(key) > 0; }
  // Throws ValidationError when absent.
  const std::string& Get(const std::string& key) const;
  std::string GetOr(const std::string& key, const std::string& fallback) const;

  // Hash of the serialized form.
  std::string Hash() const;
  const std::map<std::string, std::string>& values() const { return values_; }
  bool operator==(const KvConfig&) const = default;

 private:
  std::map<std::string, std::string> values_;
};

// Run directory layout: manifest.txt (written before any work), config.txt.
struct RunInputs {
  std::map<std::string, std::string> paths;  // role -> file
};

// Creates `dir`, writes config.txt and a manifest with status=running and the
// content hashes of all inputs. An existing manifest from a different config
// (or different inputs) makes this throw ValidationError explaining the
// mismatch; a matching one is resumed.
void BeginRun(const std::string& dir, const std::string& command, const KvConfig& config,
              const RunInputs& inputs);
// Appends outputs and flips the status to completed.
void FinishRun(const std::string& dir, const KvConfig& outputs);
KvConfig ReadManifest(const std::string& dir);

// Seeds for `--runs n --seeds auto`; stable across platforms.
std::vector<uint64_t> DeriveSeeds(uint64_t base, int n);
// "auto" or a comma list. A list must hold `runs` seeds unless runs <= 0.
std::vector<uint64_t> ResolveSeeds(const std::string& list, int runs, uint64_t base);

// VERBKNOW_OUTPUT_ROOT, default "runs".
std::string OutputRoot();
// VERBKNOW_THREADS, default hardware concurrency (at least 1).
int WorkerThreads();

// Calls fn(0..n-1) on up to `threads` workers; results keep index order. The
// first exception (by index) is rethrown after all workers finish.
template <typename R>
std::vector<R> ParallelMap(size_t n, int threads, const std::function<R(size_t)>& fn) {
  std::vector<R> out(n);
  std::vector<std::exception_ptr> errors(n);
  std::atomic<size_t> next{0};
  auto work = [&] {
    for (size_t i = next++; i < n; i = next++) {
      try {
        out[i] = fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const size_t workers = std::min<size_t>(n, static_cast<size_t>(std::max(1, threads)));
  std::vector<std::thread> pool;
  for (size_t w = 1; w < workers; ++w) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

// Called from worker threads with the run index and its trained model.
using RunObserver = std::function<void(size_t, const EventModel&)>;

// One fine-tuning run per seed, scored on `test`.
ConditionResult RunCondition(const Encoder& encoder, const AdapterStack* verb_adapter,
                             const EventDataset& train, const EventDataset& test,
                             const FinetuneConfig& base, const std::vector<uint64_t>& seeds,
                             int threads, const RunObserver& observer = {});

// Bundled synthetic fixtures: lexicon, aligned embedding spaces and
// TempEval/ACE-style splits. Returns role -> written file.
std::map<std::string, std::string> WriteSyntheticFixtures(const std::string& dir);

}  // namespace verbknow

#endif  // VERBKNOW_PIPELINE_H_
