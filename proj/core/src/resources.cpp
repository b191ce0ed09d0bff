#include "dsiforge/resources.hpp"

#include <array>
#include <utility>

#include "builtin_data.hpp"
#include "dsiforge/checkpoint.hpp"
#include "dsiforge/error.hpp"

namespace dsi {

namespace {

const std::array<std::pair<std::string_view, const char* const*>, 6> kResources{{
    {"multiwoz_like.json", &data::kMultiwozLikeConfig},
    {"chain3.json", &data::kChainConfig},
    {"multiwoz_rules.psl", &data::kMultiwozRules},
    {"token_rule.psl", &data::kTokenRule},
    {"chain3_rules.psl", &data::kChainRules},
    {"multiwoz_tokens.tsv", &data::kMultiwozTokens},
}};

}  // namespace

std::vector<std::string> builtin_resource_names() {
  std::vector<std::string> out;
  for (const auto& [name, text] : kResources) out.emplace_back(name);
  return out;
}

std::string builtin_resource(std::string_view name) {
  for (const auto& [n, text] : kResources) {
    if (n == name) return *text;
  }
  throw ConfigError("unknown built-in resource '" + std::string(name) + "'");
}

std::string read_resource(const std::string& path_or_builtin) {
  constexpr std::string_view kPrefix = "builtin:";
  if (path_or_builtin.rfind(kPrefix, 0) == 0) {
    return builtin_resource(std::string_view(path_or_builtin).substr(kPrefix.size()));
  }
  return read_file(path_or_builtin);
}

}  // namespace dsi
