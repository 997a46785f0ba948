#include "rehab/prompts.hpp"

#include "rehab/error.hpp"

#include <cctype>

namespace rehab::prompts {

namespace detail {
const std::map<std::string, std::string>& embedded_templates();
}

namespace {

bool ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) != 0 || c == '_'; }
bool ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0 || c == '_'; }

// Length of a `{name}` marker starting at text[i], or 0.
std::size_t marker_length(std::string_view text, std::size_t i) {
  if (text[i] != '{' || i + 2 >= text.size() || !ident_start(text[i + 1])) return 0;
  std::size_t j = i + 2;
  while (j < text.size() && ident_char(text[j])) ++j;
  return j < text.size() && text[j] == '}' ? j - i + 1 : 0;
}

}  // namespace

std::set<std::string, std::less<>> find_placeholders(std::string_view text) {
  std::set<std::string, std::less<>> out;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (const auto n = marker_length(text, i)) {
      out.emplace(text.substr(i + 1, n - 2));
      i += n - 1;
    }
  }
  return out;
}

PromptTemplate make_template(std::string id, std::string body) {
  PromptTemplate t{std::move(id), std::move(body), {}};
  t.placeholders = find_placeholders(t.body);
  return t;
}

const PromptTemplate& get(std::string_view id) {
  static const std::map<std::string, PromptTemplate, std::less<>> templates = [] {
    std::map<std::string, PromptTemplate, std::less<>> out;
    for (const auto& [name, body] : detail::embedded_templates()) out.emplace(name, make_template(name, body));
    return out;
  }();
  auto it = templates.find(id);
  if (it == templates.end()) throw ConfigError("unknown prompt template '" + std::string(id) + "'");
  return it->second;
}

std::vector<std::string> template_ids() {
  std::vector<std::string> ids;
  for (const auto& [name, body] : detail::embedded_templates()) ids.push_back(name);
  return ids;
}

std::string render(const PromptTemplate& tmpl, const Bindings& bindings) {
  for (const auto& p : tmpl.placeholders) {
    if (!bindings.contains(p)) throw ValidationError(tmpl.id, "no binding for placeholder {" + p + "}");
  }
  for (const auto& [name, value] : bindings) {
    if (!tmpl.placeholders.contains(name)) {
      throw ValidationError(tmpl.id, "binding '" + name + "' matches no placeholder");
    }
  }
  const std::string_view body = tmpl.body;
  std::string out;
  out.reserve(body.size());
  for (std::size_t i = 0; i < body.size(); ++i) {
    if (const auto n = marker_length(body, i)) {
      out += bindings.find(body.substr(i + 1, n - 2))->second;
      i += n - 1;
    } else {
      out += body[i];
    }
  }
  return out;
}

std::string render_with_knowledge(const PromptTemplate& tmpl, const Bindings& bindings,
                                  std::string_view knowledge_text) {
  std::string out = render(tmpl, bindings);
  if (knowledge_text.empty()) return out;
  if (!out.empty() && out.back() != '\n') out += '\n';
  out += render(get(kKnowledgeSection), {{"knowledge_text", std::string(knowledge_text)}});
  return out;
}

}  // namespace rehab::prompts
