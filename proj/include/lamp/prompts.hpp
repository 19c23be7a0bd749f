#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace lamp::llm {

inline constexpr std::string_view kPromptVersion = "v1";
inline constexpr std::string_view kNoExperience = "No similar experiences found.";
inline constexpr std::string_view kNoLongNews = "None";

std::string_view long_reason_template();
std::string_view short_reason_template();
std::string_view reflect_template();
std::string_view long_news_template();
std::string_view short_news_template();
std::string_view candidates_template();

/// Substitutes {name} placeholders. Throws std::invalid_argument if a
/// placeholder of the template has no value, or a value names no placeholder.
std::string render(std::string_view tmpl, const std::map<std::string, std::string>& values);

/// Placeholder names appearing in a template, in order of first occurrence.
std::vector<std::string> placeholders(std::string_view tmpl);

/// "- stmt" lines joined with newlines.
std::string bullet_list(const std::vector<std::string>& items);

}  // namespace lamp::llm
