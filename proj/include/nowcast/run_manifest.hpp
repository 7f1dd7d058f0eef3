#pragma once

#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <string_view>

namespace nowcast {

inline constexpr const char* kToolVersion = "0.1.0";
inline constexpr const char* kRunManifestName = "run.json";

/// Hex SHA-1 of "blob <size>\0<bytes>", as git hashes file contents.
std::string blob_hash(std::string_view bytes);
std::string file_hash(const std::filesystem::path& path);
/// Hash over sorted "<relative path> <blob hash>" lines of every regular file
/// below `dir`, skipping names in `exclude` (matched on the relative path).
std::string tree_hash(const std::filesystem::path& dir, const std::set<std::string>& exclude = {});

struct RunManifest {
    std::string command;
    std::string config_path;
    std::string output_dir;
    std::uint64_t seed = 0;
    std::string tool_version = kToolVersion;
    std::string inputs_hash;   // config text plus any input corpus/checkpoint
    std::string outputs_hash;  // artifacts in output_dir, volatile files excluded
    std::set<std::string> volatile_files;

    std::string to_json() const;
    static RunManifest from_json(std::string_view text);
};

/// Fills outputs_hash from the directory and writes run.json into it.
void write_run_manifest(const std::filesystem::path& dir, RunManifest manifest);
RunManifest read_run_manifest(const std::filesystem::path& dir);

}  // namespace nowcast
