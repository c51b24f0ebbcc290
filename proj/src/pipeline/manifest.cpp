#include "tagfog/pipeline/manifest.hpp"

#include <openssl/evp.h>

#include <array>
#include <fstream>
#include <json.hpp>
#include <memory>

#include "tagfog/errors.hpp"

namespace tagfog::pipeline {

using nlohmann::json;

std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open file for hashing: " + path.string());
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) throw Error("SHA-256 initialization failed");
  std::array<char, 1 << 16> buf{};
  while (in) {
    in.read(buf.data(), buf.size());
    if (in.gcount() > 0) EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), digest.data(), &len);
  static constexpr char kHex[] = "0123456789abcdef";
  std::string hex;
  for (unsigned int i = 0; i < len; ++i) {
    hex += kHex[digest[i] >> 4];
    hex += kHex[digest[i] & 0xf];
  }
  return hex;
}

std::vector<FileDigest> digest_files(const std::vector<std::filesystem::path>& paths) {
  std::vector<FileDigest> out;
  for (const auto& p : paths) out.push_back({p.string(), sha256_file(p)});
  return out;
}

namespace {

json digests_json(const std::vector<FileDigest>& files) {
  json arr = json::array();
  for (const auto& f : files) arr.push_back({{"path", f.path}, {"sha256", f.sha256}});
  return arr;
}

std::vector<FileDigest> digests_from(const json& arr) {
  std::vector<FileDigest> out;
  for (const auto& f : arr) out.push_back({f.at("path").get<std::string>(), f.at("sha256").get<std::string>()});
  return out;
}

}  // namespace

Manifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open manifest: " + path.string());
  try {
    const json doc = json::parse(in);
    if (doc.at("kind").get<std::string>() != "tagfog-manifest") throw FormatError("not a manifest: " + path.string());
    if (doc.at("format_version").get<int>() != kManifestVersion) {
      throw FormatError("unsupported manifest version in " + path.string());
    }
    Manifest m;
    for (const auto& s : doc.at("stages")) {
      StageRecord r;
      r.stage = s.at("stage").get<std::string>();
      r.args = s.at("args").get<std::vector<std::string>>();
      r.seed = s.at("seed").get<std::uint64_t>();
      r.inputs = digests_from(s.at("inputs"));
      r.outputs = digests_from(s.at("outputs"));
      r.wall_clock_s = s.at("wall_clock_s").get<double>();
      m.stages.push_back(std::move(r));
    }
    return m;
  } catch (const json::exception& e) {
    throw FormatError("malformed manifest " + path.string() + ": " + e.what());
  }
}

void write_manifest(const Manifest& manifest, const std::filesystem::path& path) {
  json stages = json::array();
  for (const auto& r : manifest.stages) {
    stages.push_back({{"stage", r.stage},
                      {"args", r.args},
                      {"seed", r.seed},
                      {"inputs", digests_json(r.inputs)},
                      {"outputs", digests_json(r.outputs)},
                      {"wall_clock_s", r.wall_clock_s}});
  }
  const json doc = {{"kind", "tagfog-manifest"}, {"format_version", kManifestVersion}, {"stages", stages}};
  std::ofstream out(path);
  if (!out) throw FormatError("cannot open manifest for writing: " + path.string());
  out << doc.dump(2) << '\n';
}

void append_stage(const std::filesystem::path& path, const StageRecord& record) {
  Manifest m = std::filesystem::exists(path) ? read_manifest(path) : Manifest{};
  m.stages.push_back(record);
  write_manifest(m, path);
}

std::vector<DigestMismatch> check_manifest(const Manifest& manifest) {
  std::vector<DigestMismatch> out;
  for (const auto& r : manifest.stages) {
    for (const auto* files : {&r.inputs, &r.outputs}) {
      for (const auto& f : *files) {
        const std::string actual = std::filesystem::exists(f.path) ? sha256_file(f.path) : std::string();
        if (actual != f.sha256) out.push_back({r.stage, f.path, f.sha256, actual});
      }
    }
  }
  return out;
}

}  // namespace tagfog::pipeline
