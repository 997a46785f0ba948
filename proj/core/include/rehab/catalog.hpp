#pragma once

#include "rehab/dataset_builder.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace rehab {

struct ClassDescription {
  dataset::LabelId class_id = 0;
  std::string name;
  std::string description;
};

/// The versioned class-description asset shared by the recognizer (class
/// texts) and report generation (action descriptions, retrieval queries).
///
/// File format: {"version": "...", "classes": [{"class_id", "name",
/// "description"}, ...]}.
class ClassCatalog {
 public:
  ClassCatalog() = default;
  ClassCatalog(std::string version, std::vector<ClassDescription> classes);

  static ClassCatalog parse(const std::string& json_text);
  static ClassCatalog load(const std::filesystem::path& path);
  std::string to_json() const;

  const std::string& version() const noexcept { return version_; }
  const std::vector<ClassDescription>& classes() const noexcept { return classes_; }
  std::size_t size() const noexcept { return classes_.size(); }

  bool contains(dataset::LabelId id) const;
  /// Throws ConfigError when the class has no description.
  const ClassDescription& at(dataset::LabelId id) const;

  /// Throws ConfigError naming the first class in 0..n-1 without a description.
  void require_classes(int n) const;

  /// Stable hash over ids, names and description texts.
  std::string content_hash() const;

  /// "0: no action\n1: ..." numbered list used by the recognition baselines.
  std::string numbered_list() const;

 private:
  std::string version_;
  std::vector<ClassDescription> classes_;  // sorted by class_id
};

}  // namespace rehab
