#include "rehab/catalog.hpp"

#include "rehab/error.hpp"
#include "rehab/tokenizer.hpp"

#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <sstream>

namespace rehab {

using nlohmann::json;

ClassCatalog::ClassCatalog(std::string version, std::vector<ClassDescription> classes)
    : version_(std::move(version)), classes_(std::move(classes)) {
  std::sort(classes_.begin(), classes_.end(),
            [](const auto& a, const auto& b) { return a.class_id < b.class_id; });
  for (std::size_t i = 1; i < classes_.size(); ++i) {
    if (classes_[i].class_id == classes_[i - 1].class_id) {
      throw ConfigError("class catalog: duplicate class_id " + std::to_string(classes_[i].class_id));
    }
  }
}

ClassCatalog ClassCatalog::parse(const std::string& json_text) {
  try {
    const json j = json::parse(json_text);
    std::vector<ClassDescription> classes;
    for (const auto& c : j.at("classes")) {
      classes.push_back({c.at("class_id").get<int>(), c.at("name").get<std::string>(),
                         c.value("description", std::string{})});
    }
    return ClassCatalog(j.value("version", "unversioned"), std::move(classes));
  } catch (const json::exception& e) {
    throw ConfigError(std::string("class catalog: ") + e.what());
  }
}

ClassCatalog ClassCatalog::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open class catalog " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::string ClassCatalog::to_json() const {
  json arr = json::array();
  for (const auto& c : classes_) {
    arr.push_back({{"class_id", c.class_id}, {"name", c.name}, {"description", c.description}});
  }
  return json{{"version", version_}, {"classes", arr}}.dump(2);
}

bool ClassCatalog::contains(dataset::LabelId id) const {
  return std::any_of(classes_.begin(), classes_.end(), [&](const auto& c) { return c.class_id == id; });
}

const ClassDescription& ClassCatalog::at(dataset::LabelId id) const {
  for (const auto& c : classes_) {
    if (c.class_id == id) {
      if (c.description.empty()) throw ConfigError("class " + std::to_string(id) + " ('" + c.name + "') has no description");
      return c;
    }
  }
  throw ConfigError("class catalog has no entry for class " + std::to_string(id));
}

void ClassCatalog::require_classes(int n) const {
  for (int id = 0; id < n; ++id) at(id);
}

std::string ClassCatalog::content_hash() const {
  std::uint64_t h = text::fnv1a(version_);
  for (const auto& c : classes_) {
    h = text::fnv1a(std::to_string(c.class_id), h);
    h = text::fnv1a("\x1f" + c.name + "\x1f" + c.description + "\x1e", h);
  }
  return text::hex64(h);
}

std::string ClassCatalog::numbered_list() const {
  std::string out;
  for (const auto& c : classes_) {
    out += std::to_string(c.class_id) + ": " + c.name;
    if (!c.description.empty()) out += " - " + c.description;
    out += '\n';
  }
  if (!out.empty()) out.pop_back();
  return out;
}

}  // namespace rehab
