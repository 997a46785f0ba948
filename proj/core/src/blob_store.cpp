#include "rehab/blob_store.hpp"

#include "rehab/error.hpp"

#include <openssl/evp.h>

#include <fstream>
#include <memory>
#include <sstream>

namespace rehab::service {

namespace {
constexpr std::string_view kScheme = "blob:sha256:";
}

std::string sha256_hex(std::string_view data) {
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), data.data(), data.size()) != 1 || EVP_DigestFinal_ex(ctx.get(), digest, &len) != 1) {
    throw Error(ErrorCode::internal, "sha256 failed");
  }
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 0xF];
  }
  return out;
}

BlobStore::BlobStore(std::filesystem::path root) : root_(std::move(root)) { std::filesystem::create_directories(root_); }

std::string BlobStore::put(std::string_view data, std::string_view extension) {
  const std::string digest = sha256_hex(data);
  std::string uri = std::string(kScheme) + digest;
  if (!extension.empty()) uri += "." + std::string(extension);
  const auto path = path_of(uri);
  if (std::filesystem::exists(path)) return uri;
  std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp" + std::to_string(reinterpret_cast<std::uintptr_t>(&data));
  {
    std::ofstream out(tmp, std::ios::binary);
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
    if (!out) throw Error(ErrorCode::internal, "cannot write blob " + tmp);
  }
  std::filesystem::rename(tmp, path);
  return uri;
}

std::filesystem::path BlobStore::path_of(std::string_view uri) const {
  if (uri.substr(0, kScheme.size()) != kScheme) throw ValidationError("uri", "not a blob uri: " + std::string(uri));
  const std::string name(uri.substr(kScheme.size()));
  if (name.size() < 64 || name.find('/') != std::string::npos || name.find("..") != std::string::npos) {
    throw ValidationError("uri", "malformed blob uri: " + std::string(uri));
  }
  return root_ / name.substr(0, 2) / name;
}

std::string BlobStore::get(std::string_view uri) const {
  std::ifstream in(path_of(uri), std::ios::binary);
  if (!in) throw NotFoundError("blob " + std::string(uri) + " not found");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

bool BlobStore::contains(std::string_view uri) const { return std::filesystem::exists(path_of(uri)); }

}  // namespace rehab::service
