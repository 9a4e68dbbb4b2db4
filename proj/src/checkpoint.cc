#include "verbknow/checkpoint.h"

#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "verbknow/common.h"

namespace verbknow {
namespace {

constexpr const char* kMagic = "verbknow-archive 1";

void CheckToken(const std::string& s, const char* what) {
  if (s.empty() || s.find_first_of(" \t\r\n") != std::string::npos) {
    throw ValidationError(std::string("invalid archive ") + what + ": '" + s + "'");
  }
}

std::string FormatDouble(double v) {
  std::ostringstream out;
  out << std::setprecision(17) << v;
  return out.str();
}

}  // namespace

const std::string& Archive::Meta(const std::string& key) const {
  auto it = meta.find(key);
  if (it == meta.end()) throw ValidationError("archive lacks metadata key '" + key + "'");
  return it->second;
}

const Matrix& Archive::Tensor(const std::string& name) const {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw ValidationError("archive lacks tensor '" + name + "'");
  return it->second;
}

void WriteArchive(const std::string& path, const Archive& archive) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write " + path);
  out << kMagic << '\n';
  for (const auto& [k, v] : archive.meta) {
    CheckToken(k, "metadata key");
    if (v.find('\n') != std::string::npos) throw ValidationError("metadata value has newline");
    out << "meta " << k << ' ' << v << '\n';
  }
  for (const auto& [name, items] : archive.lists) {
    CheckToken(name, "list name");
    out << "list " << name << ' ' << items.size() << '\n';
    for (const auto& item : items) {
      if (item.find('\n') != std::string::npos) throw ValidationError("list item has newline");
      out << item << '\n';
    }
  }
  for (const auto& [name, m] : archive.tensors) {
    CheckToken(name, "tensor name");
    out << "tensor " << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
    out.write(reinterpret_cast<const char*>(m.data()),
              static_cast<std::streamsize>(m.size() * sizeof(double)));
    out << '\n';
  }
  out << "end\n";
  if (!out) throw ValidationError("write failed: " + path);
}

Archive ReadArchive(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open archive " + path);
  std::string line;
  if (!std::getline(in, line) || line != kMagic) {
    throw ParseError(path + ":1", "not a verbknow archive");
  }
  Archive archive;
  size_t line_no = 1;
  bool ended = false;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string locus = path + ":" + std::to_string(line_no);
    if (line == "end") {
      ended = true;
      break;
    }
    std::istringstream ls(line);
    std::string kind, name;
    ls >> kind >> name;
    if (kind == "meta") {
      std::string value;
      std::getline(ls, value);
      if (!value.empty() && value.front() == ' ') value.erase(0, 1);
      archive.meta[name] = value;
    } else if (kind == "list") {
      size_t count = 0;
      if (!(ls >> count)) throw ParseError(locus, "bad list header");
      auto& items = archive.lists[name];
      for (size_t i = 0; i < count; ++i) {
        if (!std::getline(in, line)) throw ParseError(locus, "truncated list");
        ++line_no;
        items.push_back(line);
      }
    } else if (kind == "tensor") {
      Eigen::Index rows = 0, cols = 0;
      if (!(ls >> rows >> cols) || rows < 0 || cols < 0) throw ParseError(locus, "bad tensor header");
      Matrix m(rows, cols);
      in.read(reinterpret_cast<char*>(m.data()),
              static_cast<std::streamsize>(m.size() * sizeof(double)));
      if (!in || in.get() != '\n') throw ParseError(locus, "truncated tensor '" + name + "'");
      archive.tensors[name] = std::move(m);
    } else {
      throw ParseError(locus, "unknown record '" + kind + "'");
    }
  }
  if (!ended) throw ParseError(path, "archive truncated (no end record)");
  return archive;
}

std::string SerializeParams(const std::vector<const Param*>& params) {
  std::string out;
  for (const Param* p : params) {
    out += p->name;
    out.push_back('\0');
    const auto rows = static_cast<int64_t>(p->value.rows());
    const auto cols = static_cast<int64_t>(p->value.cols());
    out.append(reinterpret_cast<const char*>(&rows), sizeof(rows));
    out.append(reinterpret_cast<const char*>(&cols), sizeof(cols));
    out.append(reinterpret_cast<const char*>(p->value.data()),
               static_cast<size_t>(p->value.size()) * sizeof(double));
  }
  return out;
}

void CopyTensors(const std::vector<const Param*>& params, Archive* archive) {
  for (const Param* p : params) archive->tensors[p->name] = p->value;
}

void LoadTensors(const Archive& archive, const std::vector<Param*>& params) {
  for (Param* p : params) {
    const Matrix& m = archive.Tensor(p->name);
    if (m.rows() != p->value.rows() || m.cols() != p->value.cols()) {
      throw ValidationError("shape mismatch for tensor '" + p->name + "': archive " +
                            std::to_string(m.rows()) + "x" + std::to_string(m.cols()) +
                            ", expected " + std::to_string(p->value.rows()) + "x" +
                            std::to_string(p->value.cols()));
    }
    p->value = m;
    p->grad.setZero(m.rows(), m.cols());
  }
}

void SaveAdapterCheckpoint(const std::string& path, const AdapterStack& stack,
                           const AdapterCheckpointInfo& info,
                           const std::vector<const Param*>& extra) {
  if (!stack.HasVerb()) throw ValidationError("adapter stack has no verb adapter to save");
  Archive a;
  a.meta["kind"] = "verb-adapter";
  a.meta["resource"] = info.resource.empty() ? "unknown" : info.resource;
  a.meta["language"] = info.language.empty() ? "unknown" : info.language;
  a.meta["reduction"] = std::to_string(info.reduction);
  a.meta["hidden"] = std::to_string(info.hidden);
  a.meta["layers"] = std::to_string(info.layers);
  a.meta["config_hash"] = info.config_hash.empty() ? "none" : info.config_hash;
  a.meta["source"] = stack.verb_source.empty() ? "verb" : stack.verb_source;
  CopyTensors(stack.Params(ParamGroup::kVerbAdapter), &a);
  CopyTensors(extra, &a);
  WriteArchive(path, a);
}

AdapterStack LoadAdapterCheckpoint(const std::string& path, const Encoder& host,
                                   AdapterCheckpointInfo* info) {
  Archive a = ReadArchive(path);
  if (a.Meta("kind") != "verb-adapter") throw ValidationError(path + " is not a verb-adapter checkpoint");
  const int hidden = std::stoi(a.Meta("hidden"));
  const int layers = std::stoi(a.Meta("layers"));
  const int reduction = std::stoi(a.Meta("reduction"));
  if (hidden != host.hidden()) {
    throw ValidationError("adapter checkpoint hidden size " + std::to_string(hidden) +
                          " does not match host encoder hidden size " +
                          std::to_string(host.hidden()));
  }
  if (layers != host.config().num_layers) {
    throw ValidationError("adapter checkpoint has " + std::to_string(layers) +
                          " layers, host encoder has " + std::to_string(host.config().num_layers));
  }
  AdapterStack stack = InsertAdapters(host, AdapterPlacement::kAfterFfn, reduction,
                                      AdapterInit::kNearZeroUp, 0, a.Meta("source"));
  LoadTensors(a, stack.Params(ParamGroup::kVerbAdapter));
  if (info) {
    info->resource = a.Meta("resource");
    info->language = a.Meta("language");
    info->reduction = reduction;
    info->hidden = hidden;
    info->layers = layers;
    info->config_hash = a.Meta("config_hash");
  }
  return stack;
}

void SaveEncoder(const std::string& path, const Encoder& encoder) {
  const EncoderConfig& c = encoder.config();
  Archive a;
  a.meta["kind"] = "encoder";
  a.meta["flavor"] = EncoderFlavorName(c.flavor);
  a.meta["num_layers"] = std::to_string(c.num_layers);
  a.meta["hidden"] = std::to_string(c.hidden);
  a.meta["heads"] = std::to_string(c.heads);
  a.meta["intermediate"] = std::to_string(c.intermediate);
  a.meta["max_len"] = std::to_string(c.max_len);
  a.meta["type_vocab"] = std::to_string(c.type_vocab);
  a.meta["layer_norm_eps"] = FormatDouble(c.layer_norm_eps);
  a.meta["lowercase"] = encoder.tokenizer().lowercase() ? "1" : "0";
  a.lists["vocab"] = encoder.tokenizer().vocab();
  CopyTensors(encoder.Params(), &a);
  WriteArchive(path, a);
}

Encoder LoadEncoder(const std::string& path) {
  Archive a = ReadArchive(path);
  if (a.Meta("kind") != "encoder") throw ValidationError(path + " is not an encoder archive");
  EncoderConfig c;
  c.flavor = ParseEncoderFlavor(a.Meta("flavor"));
  c.num_layers = std::stoi(a.Meta("num_layers"));
  c.hidden = std::stoi(a.Meta("hidden"));
  c.heads = std::stoi(a.Meta("heads"));
  c.intermediate = std::stoi(a.Meta("intermediate"));
  c.max_len = std::stoi(a.Meta("max_len"));
  c.type_vocab = std::stoi(a.Meta("type_vocab"));
  c.layer_norm_eps = std::stod(a.Meta("layer_norm_eps"));
  auto vocab = a.lists.find("vocab");
  if (vocab == a.lists.end()) throw ValidationError(path + " lacks a vocabulary");
  auto tokenizer =
      std::make_shared<const WordPieceTokenizer>(vocab->second, a.Meta("lowercase") == "1");
  Encoder enc(c, tokenizer);
  LoadTensors(a, enc.Params());
  return enc;
}

}  // namespace verbknow
