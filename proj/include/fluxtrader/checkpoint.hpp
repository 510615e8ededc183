#pragma once

// Checkpoint layout for a parameter collection named `name` in `dir`:
//
//   <dir>/<name>.json            manifest
//   <dir>/<name>/<param>.bin     raw little-endian float64, row-major
//
// Manifest:
//   { "format": "fluxtrader-checkpoint", "version": 1,
//     "hyperparameters": { ... },
//     "parameters": [ { "name": "...", "shape": [..], "file": "<name>/<param>.bin" }, ... ] }

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>
#include <openssl/evp.h>

#include "fluxtrader/optim.hpp"

namespace fluxtrader {

static_assert(std::endian::native == std::endian::little, "checkpoint blobs assume a little-endian host");

/// Incremental SHA-256, hex digest.
class Sha256 {
public:
    Sha256() : ctx_(EVP_MD_CTX_new()) { EVP_DigestInit_ex(ctx_, EVP_sha256(), nullptr); }
    ~Sha256() { EVP_MD_CTX_free(ctx_); }
    Sha256(const Sha256&) = delete;
    Sha256& operator=(const Sha256&) = delete;

    Sha256& update(const void* data, std::size_t bytes) {
        EVP_DigestUpdate(ctx_, data, bytes);
        return *this;
    }
    Sha256& update(std::string_view text) { return update(text.data(), text.size()); }
    Sha256& update(std::span<const double> values) { return update(values.data(), values.size_bytes()); }
    Sha256& update(std::int64_t v) { return update(&v, sizeof v); }

    std::string hex() {
        unsigned char digest[EVP_MAX_MD_SIZE];
        unsigned int len = 0;
        EVP_DigestFinal_ex(ctx_, digest, &len);
        std::ostringstream out;
        for (unsigned int i = 0; i < len; ++i) out << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
        return out.str();
    }

private:
    EVP_MD_CTX* ctx_;
};

inline std::string checksum(const ParameterList& params) {
    Sha256 h;
    for (const auto& p : params) {
        h.update(p.name);
        h.update(p.tensor.data());
    }
    return h.hex();
}

inline void save_checkpoint(const std::filesystem::path& dir, const std::string& name, const ParameterList& params,
                            const nlohmann::json& hyperparameters = nlohmann::json::object()) {
    namespace fs = std::filesystem;
    check_unique_names(params);
    fs::create_directories(dir / name);
    nlohmann::json manifest;
    manifest["format"] = "fluxtrader-checkpoint";
    manifest["version"] = 1;
    manifest["hyperparameters"] = hyperparameters;
    manifest["parameters"] = nlohmann::json::array();
    for (const auto& p : params) {
        const std::string rel = name + "/" + p.name + ".bin";
        std::ofstream blob(dir / rel, std::ios::binary);
        if (!blob) throw Error(ErrorCode::Io, "cannot write " + (dir / rel).string());
        const auto values = p.tensor.data();
        blob.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size_bytes()));
        manifest["parameters"].push_back({{"name", p.name}, {"shape", p.tensor.shape()}, {"file", rel}});
    }
    std::ofstream out(dir / (name + ".json"));
    if (!out) throw Error(ErrorCode::Io, "cannot write checkpoint manifest in " + dir.string());
    out << manifest.dump(2) << '\n';
}

/// Loads values into an existing parameter list; names and shapes must match.
/// Returns the stored hyperparameters.
inline nlohmann::json load_checkpoint(const std::filesystem::path& dir, const std::string& name, ParameterList& params) {
    std::ifstream in(dir / (name + ".json"));
    if (!in) throw Error(ErrorCode::Io, "missing checkpoint " + (dir / (name + ".json")).string());
    const auto manifest = nlohmann::json::parse(in);
    if (manifest.value("format", "") != "fluxtrader-checkpoint")
        throw Error(ErrorCode::Io, "not a checkpoint manifest: " + name);
    const auto& entries = manifest.at("parameters");
    if (entries.size() != params.size())
        throw Error(ErrorCode::ShapeMismatch, "checkpoint " + name + " holds " + std::to_string(entries.size()) +
                                                  " parameters, model has " + std::to_string(params.size()));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& e = entries[i];
        if (e.at("name").get<std::string>() != params[i].name || e.at("shape").get<Shape>() != params[i].tensor.shape())
            throw Error(ErrorCode::ShapeMismatch, "checkpoint entry " + e.at("name").get<std::string>() +
                                                      " does not match parameter " + params[i].name);
        std::ifstream blob(dir / e.at("file").get<std::string>(), std::ios::binary);
        auto values = params[i].tensor.mutable_data();
        blob.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(values.size_bytes()));
        if (!blob || blob.gcount() != static_cast<std::streamsize>(values.size_bytes()))
            throw Error(ErrorCode::Io, "truncated blob for " + params[i].name);
    }
    return manifest.at("hyperparameters");
}

} // namespace fluxtrader
