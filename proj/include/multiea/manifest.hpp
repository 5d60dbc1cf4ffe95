#pragma once

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "multiea/errors.hpp"

namespace multiea {

/// Hex SHA-256 of a file's bytes.
inline std::string sha256_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1) {
        EVP_MD_CTX_free(ctx);
        throw DataError("sha256 unavailable");
    }
    std::vector<char> buf(1 << 16);
    while (in) {
        in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
        if (in.gcount() > 0) EVP_DigestUpdate(ctx, buf.data(), static_cast<std::size_t>(in.gcount()));
    }
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx, digest, &len);
    EVP_MD_CTX_free(ctx);
    std::ostringstream os;
    for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
    return os.str();
}

inline std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    std::ostringstream os;
    os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return os.str();
}

/// Provenance record written next to every command's outputs. Timestamps live
/// here only, so the artifacts themselves stay byte-reproducible.
struct RunManifest {
    std::string command;
    nlohmann::json config = nlohmann::json::object();
    nlohmann::json seeds = nlohmann::json::object();
    nlohmann::json inputs = nlohmann::json::object();  // path -> sha256
    nlohmann::json outputs = nlohmann::json::array();
    nlohmann::json results = nlohmann::json::object();
    std::string started_at = utc_timestamp();
    std::string finished_at;

    void add_input(const std::filesystem::path& path) { inputs[path.string()] = sha256_file(path); }

    /// Fingerprints every regular file below `dir`, in sorted path order.
    void add_input_tree(const std::filesystem::path& dir) {
        std::vector<std::filesystem::path> files;
        for (const auto& entry : std::filesystem::recursive_directory_iterator(dir))
            if (entry.is_regular_file()) files.push_back(entry.path());
        std::sort(files.begin(), files.end());
        for (const auto& f : files) add_input(f);
    }

    void add_output(const std::filesystem::path& path) { outputs.push_back(path.string()); }

    nlohmann::json to_json() const {
        return {{"command", command}, {"config", config},   {"seeds", seeds},         {"inputs", inputs},
                {"outputs", outputs}, {"results", results}, {"started_at", started_at}, {"finished_at", finished_at}};
    }

    void write(const std::filesystem::path& path) {
        finished_at = utc_timestamp();
        if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
        std::ofstream out(path);
        if (!out) throw DataError("cannot write " + path.string());
        out << to_json().dump(2) << '\n';
    }
};

} // namespace multiea
