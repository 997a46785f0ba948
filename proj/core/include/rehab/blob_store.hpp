#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace rehab::service {

std::string sha256_hex(std::string_view data);

/// Content-addressed files under a root directory. URIs look like
/// "blob:sha256:<hex>"; identical content maps to one file.
class BlobStore {
 public:
  explicit BlobStore(std::filesystem::path root);

  std::string put(std::string_view data, std::string_view extension = "");
  std::filesystem::path path_of(std::string_view uri) const;
  std::string get(std::string_view uri) const;
  bool contains(std::string_view uri) const;
  const std::filesystem::path& root() const noexcept { return root_; }

 private:
  std::filesystem::path root_;
};

}  // namespace rehab::service
