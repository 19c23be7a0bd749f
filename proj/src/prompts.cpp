#include "lamp/prompts.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>

namespace lamp::llm {

namespace {

// Reasoning and reflection templates reproduce the published wording; list
// markup is rendered as plain-text bullets.
constexpr std::string_view kLongReason =
    R"(You are a family decision inferent. Analyze the given data and provide insights.

Long‐Term News: {long_term_news}

Private Observation:
- Personal productivity (e): {private_observation[0]}
- Personal wealth: {private_observation[1]}

Similar Experiences: {similar_experience}

Your final goal is to improve the self‐utility of the current family, where increased labor time reduces utility and increased consumption improves utility, under the Bewley–Aiyagari model.

Tasks:
1. Summarize key economic insights in “analysis”.
2. Rate the economic condition as:
   - 0 = Bad
   - 1 = Neutral
   - 2 = Good
   Store this as “economic_status”.
3. Based on the current situation and private observation, give suggestions in “reasoning”.
4. Generate 3 unique public statements in “statements”.

Return exactly this JSON (no extra keys or commentary):
{
  "analysis": "...",
  "economic_status": 0,
  "reasoning": "..."
}
)";

constexpr std::string_view kShortReason =
    R"(You are a family decision inferent. Your goal is to improve the family’s self-utility under the Bewley–Aiyagari model (more labor ↓ utility, more consumption ↑ utility).

Inputs:
- Short-Term News: {short_term_news}
- Recent Long-Term News: {recent_long_term_result}
- Private Observation:
  - Personal productivity (e): {private_observation[0]}
  - Personal wealth: {private_observation[1]}

Tasks:
1. Provide a detailed analysis of current economic conditions, considering savings rate and working hours.
2. Rate the economic condition:
   - 0 = Bad
   - 1 = Neutral
   - 2 = Good

Output:
Return exactly this JSON (no extra keys or commentary):
{
  "economic_status": 0,
  "reasoning": "..."
}
)";

constexpr std::string_view kReflect =
    R"(You are a family decision inferent. Analyze the given other households’ statements and provide private insights.

Private Observation:
- Personal productivity (e): {private_observation[0]}
- Personal wealth: {private_observation[1]}

Internal Reasoning: {personal_reasoning}

Public Personal Statement: {personal_statement}

Other Households’ Statements: 
{other_agents_statements}

Your final goal is to improve the self‐utility of the current family, where increased labor time reduces utility and increased consumption improves utility, under the Bewley–Aiyagari model.

Tasks:
1. Classify each household’s wealth level as wealth_guesses (0=Low, 1=Medium, 2=High) with exactly {expected_num} elements. Notice one has status 2, four have status 1, and five have status 0.
2. Rate each statement’s trustworthiness from 0 (not trustworthy) to 10 (highly trustworthy) as trust_levels with exactly {expected_num} elements.
3. Provide a brief reflection in reflection_text, focusing on yourself, others’ statements, and ensuing economic decisions.

Return exactly this JSON (no extra keys or commentary):
{
  "wealth_guesses": [...],
  "trust_levels": [...],
  "reflection_text": "..."
}
)";

constexpr std::string_view kLongNews =
    R"(You are an economic news service for a simulated economy of households.

Write a long-term news report for year {period} describing structural trends over the two-step observation window below.

Previous observation:
{previous_observation}

Current observation:
{current_observation}

Focus on wages and on the wealth, income, and productivity of the top 10% and the bottom 50% of households.

Return exactly this JSON (no extra keys or commentary):
{
  "news": "..."
}
)";

constexpr std::string_view kShortNews =
    R"(You are an economic news service for a simulated economy of households.

A sudden shock was detected in year {period}. Write a short-term news flash about it.

Previous observation:
{previous_observation}

Current observation:
{current_observation}

Most Recent Long-Term News: {recent_long_term_result}

Return exactly this JSON (no extra keys or commentary):
{
  "news": "..."
}
)";

constexpr std::string_view kCandidates =
    R"(You are a family decision inferent preparing a public statement for other households.

Private Observation:
- Personal productivity (e): {private_observation[0]}
- Personal wealth: {private_observation[1]}

Economic status (0 = Bad, 1 = Neutral, 2 = Good): {economic_status}

Internal Reasoning: {personal_reasoning}

Generate 3 unique public statements in “statements”.

Return exactly this JSON (no extra keys or commentary):
{
  "statements": ["...", "...", "..."]
}
)";

bool is_placeholder_char(char c) {
    return (c >= 'a' && c <= 'z') || c == '_' || (c >= '0' && c <= '9') || c == '[' || c == ']';
}

// Scans for {name} tokens; JSON braces in the templates never match because
// their contents contain quotes, newlines, or spaces.
template <typename Fn>
void for_each_placeholder(std::string_view tmpl, Fn&& fn) {
    std::size_t pos = 0;
    while (pos < tmpl.size()) {
        const std::size_t open = tmpl.find('{', pos);
        if (open == std::string_view::npos) break;
        const std::size_t close = tmpl.find('}', open + 1);
        if (close == std::string_view::npos) break;
        const std::string_view name = tmpl.substr(open + 1, close - open - 1);
        const bool valid = !name.empty() && std::all_of(name.begin(), name.end(), is_placeholder_char);
        if (valid) {
            fn(open, close, std::string(name));
            pos = close + 1;
        } else {
            pos = open + 1;
        }
    }
}

}  // namespace

std::string_view long_reason_template() { return kLongReason; }
std::string_view short_reason_template() { return kShortReason; }
std::string_view reflect_template() { return kReflect; }
std::string_view long_news_template() { return kLongNews; }
std::string_view short_news_template() { return kShortNews; }
std::string_view candidates_template() { return kCandidates; }

std::vector<std::string> placeholders(std::string_view tmpl) {
    std::vector<std::string> out;
    for_each_placeholder(tmpl, [&](std::size_t, std::size_t, const std::string& name) {
        if (std::find(out.begin(), out.end(), name) == out.end()) out.push_back(name);
    });
    return out;
}

std::string render(std::string_view tmpl, const std::map<std::string, std::string>& values) {
    std::set<std::string> used;
    std::string out;
    std::size_t last = 0;
    for_each_placeholder(tmpl, [&](std::size_t open, std::size_t close, const std::string& name) {
        const auto it = values.find(name);
        if (it == values.end()) throw std::invalid_argument("prompt placeholder without value: " + name);
        out.append(tmpl.substr(last, open - last));
        out.append(it->second);
        used.insert(name);
        last = close + 1;
    });
    out.append(tmpl.substr(last));
    for (const auto& [name, _] : values)
        if (!used.contains(name)) throw std::invalid_argument("value for unknown placeholder: " + name);
    return out;
}

std::string bullet_list(const std::vector<std::string>& items) {
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (i) out.push_back('\n');
        out += "- " + items[i];
    }
    return out;
}

}  // namespace lamp::llm
