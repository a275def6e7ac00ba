#include "condensor/manifest.hpp"

#include <openssl/evp.h>

#include <cstdio>

#include "condensor/dataset.hpp"
#include "condensor/mtt.hpp"
#include "json.hpp"

namespace condensor {

std::string git_blob_sha1(std::span<const std::uint8_t> bytes) {
  const std::string header = "blob " + std::to_string(bytes.size()) + '\0';
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr);
  EVP_DigestUpdate(ctx, header.data(), header.size());
  EVP_DigestUpdate(ctx, bytes.data(), bytes.size());
  EVP_DigestFinal_ex(ctx, digest, &len);
  EVP_MD_CTX_free(ctx);
  std::string hex;
  char buf[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof buf, "%02x", digest[i]);
    hex += buf;
  }
  return hex;
}

std::string hash_file(const std::filesystem::path& path) { return git_blob_sha1(read_file(path)); }

std::string RunManifest::to_json() const {
  nlohmann::ordered_json j;
  j["subcommand"] = subcommand;
  j["engine_version"] = kEngineVersion;
  j["seed"] = seed;
  j["formats"] = {{"mdds", kMddsVersion}, {"mttj", kMttjVersion}, {"results_csv", 1}};
  j["config"] = config;
  j["conventions"] = conventions;
  j["inputs"] = inputs;
  j["outputs"] = outputs;
  j["runtime_s"] = runtime_s;
  return j.dump(2) + "\n";
}

void RunManifest::write(const std::filesystem::path& path) const {
  const auto text = to_json();
  write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

}  // namespace condensor
