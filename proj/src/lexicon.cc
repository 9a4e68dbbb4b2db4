#include "verbknow/lexicon.h"

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <unordered_set>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>

#include "verbknow/common.h"

namespace verbknow {
namespace fs = std::filesystem;
namespace pt = boost::property_tree;

LexiconFormat ParseLexiconFormat(const std::string& name) {
  if (name == "verbnet-xml") return LexiconFormat::kVerbNetXml;
  if (name == "framenet-lu") return LexiconFormat::kFrameNetLu;
  if (name == "generic-class-map") return LexiconFormat::kGenericClassMap;
  throw ValidationError("unknown lexicon format '" + name +
                        "' (expected verbnet-xml, framenet-lu or generic-class-map)");
}

std::string LexiconFormatName(LexiconFormat format) {
  switch (format) {
    case LexiconFormat::kVerbNetXml: return "verbnet-xml";
    case LexiconFormat::kFrameNetLu: return "framenet-lu";
    case LexiconFormat::kGenericClassMap: return "generic-class-map";
  }
  return "unknown";
}

void VerbLexicon::Add(const std::string& lemma, const std::string& class_id) {
  entries_[lemma].insert(class_id);
  classes_[class_id].insert(lemma);
}

bool VerbLexicon::ShareClass(const std::string& a, const std::string& b) const {
  auto ia = entries_.find(a), ib = entries_.find(b);
  if (ia == entries_.end() || ib == entries_.end()) return false;
  for (const auto& c : ia->second) {
    if (ib->second.count(c)) return true;
  }
  return false;
}

VerbPair::VerbPair(std::string a, std::string b) {
  if (a.empty() || b.empty()) throw ValidationError("verb pair with empty lemma");
  if (a == b) throw ValidationError("verb pair with identical members: " + a);
  if (b < a) std::swap(a, b);
  first = std::move(a);
  second = std::move(b);
}

bool ConstraintSet::Contains(const std::string& a, const std::string& b) const {
  if (a == b) return false;
  return a < b ? pairs_.count(VerbPair{a, b}) > 0 : pairs_.count(VerbPair{b, a}) > 0;
}

std::set<std::string> ConstraintSet::Lemmas() const {
  std::set<std::string> out;
  for (const auto& p : pairs_) {
    out.insert(p.first);
    out.insert(p.second);
  }
  return out;
}

std::string ConstraintSet::ContentHash() const {
  uint64_t h = Fnv1a64("");
  for (const auto& p : pairs_) {
    h = Fnv1a64(p.first, h);
    h = Fnv1a64("\t", h);
    h = Fnv1a64(p.second, h);
    h = Fnv1a64("\n", h);
  }
  return HexDigest(h);
}

std::string NormalizeLemma(const std::string& raw) {
  std::string s = ToLower(Trim(raw));
  // "beat.v", "take off.v"
  auto dot = s.rfind('.');
  if (dot != std::string::npos && dot > 0 && dot + 1 < s.size() && s.size() - dot - 1 <= 4) {
    bool alpha = std::all_of(s.begin() + dot + 1, s.end(),
                             [](unsigned char c) { return std::isalpha(c); });
    if (alpha) s.resize(dot);
  }
  // "fly_2"
  auto us = s.rfind('_');
  if (us != std::string::npos && us > 0 && us + 1 < s.size()) {
    bool digits = std::all_of(s.begin() + us + 1, s.end(),
                              [](unsigned char c) { return std::isdigit(c); });
    if (digits) s.resize(us);
  }
  std::string out;
  bool pending_space = false;
  for (char c : s) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back('_');
    pending_space = false;
    out.push_back(c);
  }
  return out;
}

LoadResult ParseGenericClassMap(const std::string& text, const std::string& source,
                                const LoadOptions& options) {
  LoadResult result;
  result.lexicon = VerbLexicon(
      options.resource_name.empty() ? "generic-class-map" : options.resource_name,
      options.language);
  std::istringstream in(text);
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    std::string body = Trim(line);
    if (body.empty()) continue;
    auto colon = body.find(':');
    const std::string locus = source + ":" + std::to_string(line_no);
    if (colon == std::string::npos) throw ParseError(locus, "expected 'class_id: lemma ...'");
    std::string class_id = Trim(body.substr(0, colon));
    if (class_id.empty()) throw ParseError(locus, "empty class id");
    std::istringstream members(body.substr(colon + 1));
    std::string token;
    size_t added = 0;
    while (members >> token) {
      std::string lemma = NormalizeLemma(token);
      if (lemma.empty()) continue;
      result.lexicon.Add(lemma, class_id);
      ++added;
    }
    if (added == 0) {
      std::string msg = locus + ": class '" + class_id + "' has no members; dropped";
      LogWarning(msg);
      result.warnings.push_back(msg);
    }
  }
  return result;
}

namespace {

std::string Attr(const pt::ptree& node, const std::string& name) {
  return node.get<std::string>("<xmlattr>." + name, "");
}

pt::ptree ReadXml(const std::string& text, const std::string& source) {
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::read_xml(in, tree, pt::xml_parser::no_comments);
  } catch (const pt::xml_parser_error& e) {
    throw ParseError(source + ":" + std::to_string(e.line()), e.message());
  }
  return tree;
}

void CollectVerbNetMembers(const pt::ptree& cls, const std::string& root_id,
                           const std::string& source, VerbLexicon* lexicon) {
  for (const auto& [tag, child] : cls) {
    if (tag == "MEMBERS") {
      for (const auto& [mtag, member] : child) {
        if (mtag != "MEMBER") continue;
        std::string name = Attr(member, "name");
        if (name.empty()) {
          throw ParseError(source + ":<MEMBER> in " + root_id, "MEMBER without name attribute");
        }
        std::string lemma = NormalizeLemma(name);
        if (!lemma.empty()) lexicon->Add(lemma, root_id);
      }
    } else if (tag == "SUBCLASSES") {
      for (const auto& [stag, sub] : child) {
        if (stag == "VNSUBCLASS") CollectVerbNetMembers(sub, root_id, source, lexicon);
      }
    }
  }
}

bool IsVerbLexicalUnit(const pt::ptree& lu) {
  std::string pos = ToLower(Attr(lu, "POS"));
  if (!pos.empty()) return pos == "v";
  std::string name = ToLower(Attr(lu, "name"));
  return name.size() > 2 && name.compare(name.size() - 2, 2, ".v") == 0;
}

std::string ReadFileText(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open lexicon file " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

void ParseVerbNetXml(const std::string& text, const std::string& source, VerbLexicon* lexicon) {
  pt::ptree tree = ReadXml(text, source);
  auto root = tree.get_child_optional("VNCLASS");
  if (!root) throw ParseError(source + ":<root>", "expected <VNCLASS> root element");
  std::string id = Attr(*root, "ID");
  if (id.empty()) throw ParseError(source + ":<VNCLASS>", "VNCLASS without ID attribute");
  CollectVerbNetMembers(*root, id, source, lexicon);
}

void ParseFrameNetXml(const std::string& text, const std::string& source, VerbLexicon* lexicon) {
  pt::ptree tree = ReadXml(text, source);
  if (auto frame = tree.get_child_optional("frame")) {
    std::string frame_name = Attr(*frame, "name");
    if (frame_name.empty()) throw ParseError(source + ":<frame>", "frame without name attribute");
    for (const auto& [tag, lu] : *frame) {
      if (tag != "lexUnit" || !IsVerbLexicalUnit(lu)) continue;
      std::string lemma = NormalizeLemma(Attr(lu, "name"));
      if (!lemma.empty()) lexicon->Add(lemma, frame_name);
    }
    return;
  }
  if (auto index = tree.get_child_optional("luIndex")) {
    for (const auto& [tag, lu] : *index) {
      if (tag != "lu" || !IsVerbLexicalUnit(lu)) continue;
      std::string frame_name = Attr(lu, "frameName");
      if (frame_name.empty()) throw ParseError(source + ":<lu>", "lu without frameName attribute");
      std::string lemma = NormalizeLemma(Attr(lu, "name"));
      if (!lemma.empty()) lexicon->Add(lemma, frame_name);
    }
    return;
  }
  throw ParseError(source + ":<root>", "expected <frame> or <luIndex> root element");
}

LoadResult LoadLexicon(const std::string& path, LexiconFormat format, const LoadOptions& options) {
  if (!fs::exists(path)) throw ValidationError("lexicon path does not exist: " + path);
  LoadResult result;
  if (format == LexiconFormat::kGenericClassMap) {
    result = ParseGenericClassMap(ReadFileText(path), path, options);
  } else {
    result.lexicon = VerbLexicon(
        options.resource_name.empty() ? LexiconFormatName(format) : options.resource_name,
        options.language);
    std::vector<std::string> files;
    if (fs::is_directory(path)) {
      for (const auto& entry : fs::directory_iterator(path)) {
        if (entry.is_regular_file() && entry.path().extension() == ".xml") {
          files.push_back(entry.path().string());
        }
      }
      std::sort(files.begin(), files.end());
    } else {
      files.push_back(path);
    }
    for (const auto& file : files) {
      std::string text = ReadFileText(file);
      if (format == LexiconFormat::kVerbNetXml) {
        ParseVerbNetXml(text, file, &result.lexicon);
      } else {
        ParseFrameNetXml(text, file, &result.lexicon);
      }
    }
  }
  if (result.lexicon.empty()) throw ValidationError("no verbs found in " + path);
  return result;
}

ConstraintSet GeneratePositivePairs(const VerbLexicon& lexicon) {
  ConstraintSet set(lexicon.resource_name(), lexicon.language());
  for (const auto& [cls, members] : lexicon.classes()) {
    std::vector<const std::string*> m;
    m.reserve(members.size());
    for (const auto& lemma : members) m.push_back(&lemma);
    // std::set iteration is sorted, so (m[i], m[j]) with i < j is canonical.
    for (size_t i = 0; i < m.size(); ++i) {
      for (size_t j = i + 1; j < m.size(); ++j) {
        VerbPair p;
        p.first = *m[i];
        p.second = *m[j];
        set.Insert(p);
      }
    }
  }
  return set;
}

LexiconStats ComputeLexiconStats(const VerbLexicon& lexicon) {
  LexiconStats stats;
  stats.lemma_count = lexicon.size();
  stats.class_count = lexicon.classes().size();
  std::unordered_set<std::string> seen;
  for (const auto& [cls, members] : lexicon.classes()) {
    const uint64_t n = members.size();
    ++stats.member_histogram[n];
    stats.raw_pair_count += n * (n - 1) / 2;
    if (n < 2) continue;
    for (auto a = members.begin(); a != members.end(); ++a) {
      for (auto b = std::next(a); b != members.end(); ++b) {
        seen.insert(*a + '\t' + *b);
      }
    }
  }
  stats.forecast_pair_count = static_cast<uint64_t>(seen.size());
  stats.duplicate_pair_count = stats.raw_pair_count - stats.forecast_pair_count;
  return stats;
}

std::string FormatLexiconStats(const LexiconStats& stats) {
  std::ostringstream out;
  out << "lemmas\t" << stats.lemma_count << "\n";
  out << "classes\t" << stats.class_count << "\n";
  out << "raw_pairs\t" << stats.raw_pair_count << "\n";
  out << "duplicate_pairs\t" << stats.duplicate_pair_count << "\n";
  out << "forecast_pairs\t" << stats.forecast_pair_count << "\n";
  for (const auto& [size, count] : stats.member_histogram) {
    out << "class_size_" << size << "\t" << count << "\n";
  }
  return out.str();
}

void WriteConstraintsTsv(const ConstraintSet& set, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write " + path);
  for (const auto& p : set.pairs()) out << p.first << '\t' << p.second << '\n';
  if (!out) throw ValidationError("write failed: " + path);
}

ConstraintSet ReadConstraintsTsv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open constraints file " + path);
  ConstraintSet set;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos || line.find('\t', tab + 1) != std::string::npos) {
      throw ParseError(path + ":" + std::to_string(line_no), "expected 'verb1<TAB>verb2'");
    }
    try {
      set.Insert(VerbPair(line.substr(0, tab), line.substr(tab + 1)));
    } catch (const ValidationError& e) {
      throw ParseError(path + ":" + std::to_string(line_no), e.what());
    }
  }
  return set;
}

}  // namespace verbknow
