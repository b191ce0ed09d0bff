#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace dsi {

enum class Split { kTrain, kTest, kValidation };

std::string_view split_name(Split s);
Split parse_split(std::string_view s);

struct Turn {
  int speaker = 0;
  std::vector<std::string> tokens;
  std::optional<std::string> state;  // gold dialog-state label

  bool operator==(const Turn&) const = default;
};

struct Dialog {
  std::string id;
  std::string domain;
  Split split = Split::kTrain;
  std::vector<Turn> turns;

  bool operator==(const Dialog&) const = default;
};

/// Ordered dialogs of tokenized utterances with optional gold state labels.
struct DialogCorpus {
  std::vector<Dialog> dialogs;

  std::size_t utterance_count() const;
  /// True when every turn carries a gold label.
  bool has_labels() const;
  /// Throws ConfigError naming `purpose` unless has_labels().
  void require_labels(std::string_view purpose) const;
  DialogCorpus subset(Split split) const;
  /// Gold state names in order of first appearance.
  std::vector<std::string> state_names() const;

  bool operator==(const DialogCorpus&) const = default;
};

/// One JSON object per line:
/// {"id","domain","split","turns":[{"speaker":0|1,"tokens":[...],"state":"..."}]}
std::string corpus_to_jsonl(const DialogCorpus& corpus);
/// Throws ConfigError with the 1-based line number on malformed input.
DialogCorpus corpus_from_jsonl(const std::string& text);
void export_corpus(const DialogCorpus& corpus, const std::string& path);
DialogCorpus import_corpus(const std::string& path);

/// FNV-1a 64 over the canonical JSONL serialisation.
std::uint64_t corpus_hash(const DialogCorpus& corpus);
std::uint64_t fnv1a64(std::string_view bytes);
std::string hex64(std::uint64_t v);

/// Token vocabulary with reserved ids 0 = <pad>, 1 = <unk>, 2 = <bos>, 3 = <eos>.
class Vocabulary {
 public:
  static constexpr std::size_t kPad = 0;
  static constexpr std::size_t kUnk = 1;
  static constexpr std::size_t kBos = 2;
  static constexpr std::size_t kEos = 3;

  Vocabulary();
  /// Tokens ordered by descending frequency then lexicographically. A
  /// max_size of 0 means unbounded (the reserved ids count towards max_size).
  static Vocabulary build(const DialogCorpus& corpus, std::size_t max_size = 0);
  /// One token per line; line number (0-based) is the id.
  static Vocabulary from_text(const std::string& text);
  std::string to_text() const;

  std::size_t size() const { return tokens_.size(); }
  std::size_t id(const std::string& token) const;
  const std::string& token(std::size_t id) const { return tokens_.at(id); }
  std::vector<std::size_t> encode(const std::vector<std::string>& tokens) const;
  const std::vector<std::string>& tokens() const { return tokens_; }

  bool operator==(const Vocabulary& o) const { return tokens_ == o.tokens_; }

 private:
  void add(const std::string& token);
  std::vector<std::string> tokens_;
  std::map<std::string, std::size_t> index_;
};

}  // namespace dsi
