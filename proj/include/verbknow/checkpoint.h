#ifndef VERBKNOW_CHECKPOINT_H_
#define VERBKNOW_CHECKPOINT_H_

#include <map>
#include <string>
#include <vector>

#include "verbknow/encoder.h"
#include "verbknow/nn.h"

namespace verbknow {

// Named-parameter archive: text header (magic, key=value metadata, string
// lists) followed by raw little-endian doubles per tensor.
struct Archive {
  std::map<std::string, std::string> meta;
  std::map<std::string, std::vector<std::string>> lists;
  std::map<std::string, Matrix> tensors;

  const std::string& Meta(const std::string& key) const;  // throws when absent
  const Matrix& Tensor(const std::string& name) const;
};

void WriteArchive(const std::string& path, const Archive& archive);
Archive ReadArchive(const std::string& path);

// Serialized bytes of the given params (names + values), for bytewise
// identity checks.
std::string SerializeParams(const std::vector<const Param*>& params);

void CopyTensors(const std::vector<const Param*>& params, Archive* archive);
// Loads tensors by name; throws on missing name or shape mismatch.
void LoadTensors(const Archive& archive, const std::vector<Param*>& params);

// Verb-adapter checkpoint metadata.
struct AdapterCheckpointInfo {
  std::string resource;
  std::string language;
  int reduction = 0;
  int hidden = 0;
  int layers = 0;
  std::string config_hash;
};

void SaveAdapterCheckpoint(const std::string& path, const AdapterStack& stack,
                           const AdapterCheckpointInfo& info,
                           const std::vector<const Param*>& extra = {});
// Rejects checkpoints whose hidden size differs from the host encoder.
AdapterStack LoadAdapterCheckpoint(const std::string& path, const Encoder& host,
                                   AdapterCheckpointInfo* info = nullptr);

void SaveEncoder(const std::string& path, const Encoder& encoder);
Encoder LoadEncoder(const std::string& path);

}  // namespace verbknow

#endif  // VERBKNOW_CHECKPOINT_H_
