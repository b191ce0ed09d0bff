#pragma once

// Generated at build time from core/data.
namespace dsi::data {

extern const char* const kMultiwozLikeConfig;
extern const char* const kChainConfig;
extern const char* const kMultiwozRules;
extern const char* const kTokenRule;
extern const char* const kChainRules;
extern const char* const kMultiwozTokens;

}  // namespace dsi::data
