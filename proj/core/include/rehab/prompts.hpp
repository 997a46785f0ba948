#pragma once

#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace rehab::prompts {

/// Template ids shipped with the library.
inline constexpr std::string_view kSingleAction = "single_action";
inline constexpr std::string_view kChunkEvaluation = "chunk_evaluation";
inline constexpr std::string_view kActionSynthesis = "action_synthesis";
inline constexpr std::string_view kFinalSynthesis = "final_synthesis";
inline constexpr std::string_view kZeroShot = "zero_shot";
inline constexpr std::string_view kFewShot = "few_shot";
inline constexpr std::string_view kKnowledgeSection = "knowledge_section";

using Bindings = std::map<std::string, std::string, std::less<>>;

struct PromptTemplate {
  std::string id;
  std::string body;
  std::set<std::string, std::less<>> placeholders;
};

/// Names inside `{name}` markers, where name matches [A-Za-z_][A-Za-z0-9_]*.
std::set<std::string, std::less<>> find_placeholders(std::string_view text);

PromptTemplate make_template(std::string id, std::string body);

/// Built-in template by id; ConfigError for unknown ids.
const PromptTemplate& get(std::string_view id);
std::vector<std::string> template_ids();

/// Substitutes every placeholder in one pass; values are inserted verbatim and
/// never rescanned. ValidationError when a placeholder has no binding or a
/// binding names no placeholder.
std::string render(const PromptTemplate& tmpl, const Bindings& bindings);

/// Renders `tmpl` and appends the knowledge section holding `knowledge_text`.
/// An empty knowledge text appends nothing.
std::string render_with_knowledge(const PromptTemplate& tmpl, const Bindings& bindings,
                                  std::string_view knowledge_text);

}  // namespace rehab::prompts
