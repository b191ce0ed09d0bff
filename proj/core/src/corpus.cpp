#include "dsiforge/corpus.hpp"

#include <algorithm>
#include <cstdio>
#include <set>
#include <sstream>

#include "dsiforge/checkpoint.hpp"
#include "dsiforge/error.hpp"
#include <nlohmann/json.hpp>

namespace dsi {

using nlohmann::json;

std::string_view split_name(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kTest: return "test";
    case Split::kValidation: return "validation";
  }
  return "train";
}

Split parse_split(std::string_view s) {
  if (s == "train") return Split::kTrain;
  if (s == "test") return Split::kTest;
  if (s == "validation") return Split::kValidation;
  throw ConfigError("unknown split '" + std::string(s) + "'");
}

std::size_t DialogCorpus::utterance_count() const {
  std::size_t n = 0;
  for (const Dialog& d : dialogs) n += d.turns.size();
  return n;
}

bool DialogCorpus::has_labels() const {
  for (const Dialog& d : dialogs) {
    for (const Turn& t : d.turns) {
      if (!t.state) return false;
    }
  }
  return !dialogs.empty();
}

void DialogCorpus::require_labels(std::string_view purpose) const {
  for (const Dialog& d : dialogs) {
    for (std::size_t i = 0; i < d.turns.size(); ++i) {
      if (!d.turns[i].state) {
        throw ConfigError(std::string(purpose) + " requires gold state labels, but dialog '" +
                          d.id + "' turn " + std::to_string(i) + " has none");
      }
    }
  }
  if (dialogs.empty()) throw ConfigError(std::string(purpose) + " requires a non-empty corpus");
}

DialogCorpus DialogCorpus::subset(Split split) const {
  DialogCorpus out;
  for (const Dialog& d : dialogs) {
    if (d.split == split) out.dialogs.push_back(d);
  }
  return out;
}

std::vector<std::string> DialogCorpus::state_names() const {
  std::vector<std::string> names;
  std::set<std::string> seen;
  for (const Dialog& d : dialogs) {
    for (const Turn& t : d.turns) {
      if (t.state && seen.insert(*t.state).second) names.push_back(*t.state);
    }
  }
  return names;
}

std::string corpus_to_jsonl(const DialogCorpus& corpus) {
  std::string out;
  for (const Dialog& d : corpus.dialogs) {
    json turns = json::array();
    for (const Turn& t : d.turns) {
      json jt = {{"speaker", t.speaker}, {"tokens", t.tokens}};
      if (t.state) jt["state"] = *t.state;
      turns.push_back(std::move(jt));
    }
    json jd = {{"id", d.id},
               {"domain", d.domain},
               {"split", std::string(split_name(d.split))},
               {"turns", std::move(turns)}};
    out += jd.dump();
    out += '\n';
  }
  return out;
}

DialogCorpus corpus_from_jsonl(const std::string& text) {
  DialogCorpus corpus;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json jd = json::parse(line);
      Dialog d;
      d.id = jd.at("id").get<std::string>();
      d.domain = jd.value("domain", std::string());
      d.split = parse_split(jd.value("split", std::string("train")));
      for (const json& jt : jd.at("turns")) {
        Turn t;
        t.speaker = jt.value("speaker", 0);
        if (t.speaker != 0 && t.speaker != 1) throw ConfigError("speaker must be 0 or 1");
        t.tokens = jt.at("tokens").get<std::vector<std::string>>();
        if (jt.contains("state") && !jt["state"].is_null()) {
          t.state = jt["state"].get<std::string>();
        }
        d.turns.push_back(std::move(t));
      }
      if (d.turns.empty()) throw ConfigError("dialog has no turns");
      corpus.dialogs.push_back(std::move(d));
    } catch (const json::exception& e) {
      throw ConfigError("corpus line " + std::to_string(lineno) + ": " + e.what());
    } catch (const ConfigError& e) {
      throw ConfigError("corpus line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return corpus;
}

void export_corpus(const DialogCorpus& corpus, const std::string& path) {
  write_file_atomic(path, corpus_to_jsonl(corpus));
}

DialogCorpus import_corpus(const std::string& path) { return corpus_from_jsonl(read_file(path)); }

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::uint64_t corpus_hash(const DialogCorpus& corpus) { return fnv1a64(corpus_to_jsonl(corpus)); }

Vocabulary::Vocabulary() {
  add("<pad>");
  add("<unk>");
  add("<bos>");
  add("<eos>");
}

void Vocabulary::add(const std::string& token) {
  if (index_.count(token)) return;
  index_[token] = tokens_.size();
  tokens_.push_back(token);
}

Vocabulary Vocabulary::build(const DialogCorpus& corpus, std::size_t max_size) {
  std::map<std::string, std::size_t> counts;
  for (const Dialog& d : corpus.dialogs) {
    for (const Turn& t : d.turns) {
      for (const std::string& tok : t.tokens) ++counts[tok];
    }
  }
  std::vector<std::pair<std::string, std::size_t>> ordered(counts.begin(), counts.end());
  std::stable_sort(ordered.begin(), ordered.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  Vocabulary v;
  for (const auto& [tok, n] : ordered) {
    if (max_size != 0 && v.size() >= max_size) break;
    v.add(tok);
  }
  return v;
}

Vocabulary Vocabulary::from_text(const std::string& text) {
  Vocabulary v;
  v.tokens_.clear();
  v.index_.clear();
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (v.index_.count(line)) throw ConfigError("vocabulary has duplicate token '" + line + "'");
    v.add(line);
  }
  if (v.size() < 4 || v.tokens_[0] != "<pad>" || v.tokens_[1] != "<unk>" ||
      v.tokens_[2] != "<bos>" || v.tokens_[3] != "<eos>") {
    throw ConfigError("vocabulary must start with <pad>, <unk>, <bos>, <eos>");
  }
  return v;
}

std::string Vocabulary::to_text() const {
  std::string out;
  for (const std::string& t : tokens_) {
    out += t;
    out += '\n';
  }
  return out;
}

std::size_t Vocabulary::id(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? kUnk : it->second;
}

std::vector<std::size_t> Vocabulary::encode(const std::vector<std::string>& tokens) const {
  std::vector<std::size_t> ids;
  ids.reserve(tokens.size());
  for (const std::string& t : tokens) ids.push_back(id(t));
  return ids;
}

}  // namespace dsi
