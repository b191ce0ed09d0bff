#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace dsi {

/// Files shipped inside the library:
///   multiwoz_like.json, chain3.json       generator configurations
///   multiwoz_rules.psl                    twelve structural dialog rules
///   token_rule.psl                        HasWord(U, C) -> State(U, C)
///   chain3_rules.psl                      rules for the chain corpus
///   multiwoz_tokens.tsv                   two tokens per class
std::vector<std::string> builtin_resource_names();
/// Throws ConfigError for an unknown name.
std::string builtin_resource(std::string_view name);

/// "builtin:<name>" resolves to a shipped resource, anything else is read
/// from disk.
std::string read_resource(const std::string& path_or_builtin);

}  // namespace dsi
