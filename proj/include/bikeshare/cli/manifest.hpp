#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include <openssl/evp.h>

#include "json.hpp"

#include "bikeshare/errors.hpp"

namespace bikeshare::cli {

/// Incremental SHA-256 over OpenSSL's EVP interface.
class Sha256 {
public:
    Sha256() : ctx_(EVP_MD_CTX_new(), &EVP_MD_CTX_free) {
        if (!ctx_ || EVP_DigestInit_ex(ctx_.get(), EVP_sha256(), nullptr) != 1)
            throw Error("sha256: digest initialization failed");
    }

    void update(const void* data, std::size_t n) {
        if (EVP_DigestUpdate(ctx_.get(), data, n) != 1) throw Error("sha256: update failed");
    }
    void update(std::string_view s) { update(s.data(), s.size()); }

    std::string hex() {
        std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
        unsigned int len = 0;
        if (EVP_DigestFinal_ex(ctx_.get(), md.data(), &len) != 1) throw Error("sha256: final failed");
        static constexpr char digits[] = "0123456789abcdef";
        std::string out;
        for (unsigned int i = 0; i < len; ++i) {
            out.push_back(digits[md[i] >> 4]);
            out.push_back(digits[md[i] & 0xF]);
        }
        return out;
    }

private:
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx_;
};

inline std::string sha256_hex(std::string_view s) {
    Sha256 h;
    h.update(s);
    return h.hex();
}

inline std::string sha256_file(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IngestError("sha256: cannot open " + path.string());
    Sha256 h;
    std::array<char, 1 << 16> buf{};
    while (is) {
        is.read(buf.data(), buf.size());
        h.update(buf.data(), static_cast<std::size_t>(is.gcount()));
    }
    return h.hex();
}

struct ArtifactRecord {
    std::string file;  // relative to the output directory
    std::string sha256;
    std::uintmax_t bytes = 0;
};

struct Manifest {
    std::string kind;
    std::string config_sha256;
    std::uint64_t seed = 0;
    std::vector<ArtifactRecord> artifacts;

    static constexpr const char* file_name = "run-manifest.json";

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["kind"] = kind;
        j["config_sha256"] = config_sha256;
        j["seed"] = seed;
        j["artifacts"] = nlohmann::json::array();
        for (const auto& a : artifacts)
            j["artifacts"].push_back({{"file", a.file}, {"sha256", a.sha256}, {"bytes", a.bytes}});
        return j;
    }

    static Manifest from_json(const nlohmann::json& j) {
        Manifest m;
        try {
            m.kind = j.at("kind").get<std::string>();
            m.config_sha256 = j.at("config_sha256").get<std::string>();
            m.seed = j.at("seed").get<std::uint64_t>();
            for (const auto& a : j.at("artifacts"))
                m.artifacts.push_back({a.at("file").get<std::string>(), a.at("sha256").get<std::string>(),
                                       a.at("bytes").get<std::uintmax_t>()});
        } catch (const nlohmann::json::exception& e) {
            throw IngestError(std::string("manifest: malformed document: ") + e.what());
        }
        return m;
    }

    void write(const std::filesystem::path& dir) const {
        std::ofstream os(dir / file_name, std::ios::binary);
        if (!os) throw IngestError("manifest: cannot write " + (dir / file_name).string());
        os << to_json().dump(2) << '\n';
    }

    static Manifest read(const std::filesystem::path& dir) {
        std::ifstream is(dir / file_name);
        if (!is) throw IngestError("manifest: cannot open " + (dir / file_name).string());
        try {
            return from_json(nlohmann::json::parse(is));
        } catch (const nlohmann::json::parse_error& e) {
            throw IngestError(std::string("manifest: invalid JSON: ") + e.what());
        }
    }
};

inline ArtifactRecord record_artifact(const std::filesystem::path& dir, const std::string& file) {
    const auto path = dir / file;
    return {file, sha256_file(path), std::filesystem::file_size(path)};
}

/// Descriptions of artifacts whose checksum or size no longer match.
inline std::vector<std::string> verify_manifest(const std::filesystem::path& dir) {
    const Manifest m = Manifest::read(dir);
    std::vector<std::string> problems;
    for (const auto& a : m.artifacts) {
        const auto path = dir / a.file;
        if (!std::filesystem::exists(path)) {
            problems.push_back(a.file + ": missing");
            continue;
        }
        if (std::filesystem::file_size(path) != a.bytes) problems.push_back(a.file + ": size changed");
        else if (sha256_file(path) != a.sha256) problems.push_back(a.file + ": checksum mismatch");
    }
    return problems;
}

}  // namespace bikeshare::cli
