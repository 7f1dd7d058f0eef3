#include "nowcast/run_manifest.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <fstream>
#include <iterator>
#include <vector>

#include "json.hpp"
#include "nowcast/errors.hpp"

namespace nowcast {

namespace {

std::string sha1_hex(std::string_view data) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha1(), nullptr) != 1)
        throw Error(ErrorKind::IoError, "SHA-1 digest failed");
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[md[i] >> 4]);
        out.push_back(hex[md[i] & 15]);
    }
    return out;
}

std::string slurp(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error(ErrorKind::IoError, "cannot read " + path.string());
    return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

}  // namespace

std::string blob_hash(std::string_view bytes) {
    std::string buf = "blob " + std::to_string(bytes.size());
    buf.push_back('\0');
    buf.append(bytes);
    return sha1_hex(buf);
}

std::string file_hash(const std::filesystem::path& path) { return blob_hash(slurp(path)); }

std::string tree_hash(const std::filesystem::path& dir, const std::set<std::string>& exclude) {
    if (!std::filesystem::is_directory(dir)) throw Error(ErrorKind::IoError, dir.string() + " is not a directory");
    std::vector<std::string> lines;
    for (const auto& e : std::filesystem::recursive_directory_iterator(dir)) {
        if (!e.is_regular_file()) continue;
        const std::string rel = std::filesystem::relative(e.path(), dir).generic_string();
        if (exclude.contains(rel)) continue;
        lines.push_back(rel + " " + file_hash(e.path()));
    }
    std::sort(lines.begin(), lines.end());
    std::string all;
    for (const auto& l : lines) all += l + "\n";
    return blob_hash(all);
}

std::string RunManifest::to_json() const {
    nlohmann::ordered_json j;
    j["command"] = command;
    j["config_path"] = config_path;
    j["output_dir"] = output_dir;
    j["seed"] = seed;
    j["tool_version"] = tool_version;
    j["inputs_hash"] = inputs_hash;
    j["outputs_hash"] = outputs_hash;
    j["volatile_files"] = volatile_files;
    return j.dump(2) + "\n";
}

RunManifest RunManifest::from_json(std::string_view text) {
    try {
        const auto j = nlohmann::json::parse(text);
        RunManifest m;
        m.command = j.at("command");
        m.config_path = j.at("config_path");
        m.output_dir = j.at("output_dir");
        m.seed = j.at("seed");
        m.tool_version = j.at("tool_version");
        m.inputs_hash = j.at("inputs_hash");
        m.outputs_hash = j.at("outputs_hash");
        m.volatile_files = j.at("volatile_files").get<std::set<std::string>>();
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::IoError, std::string("bad run manifest: ") + e.what());
    }
}

void write_run_manifest(const std::filesystem::path& dir, RunManifest manifest) {
    auto exclude = manifest.volatile_files;
    exclude.insert(kRunManifestName);
    manifest.outputs_hash = tree_hash(dir, exclude);
    std::ofstream f(dir / kRunManifestName, std::ios::binary | std::ios::trunc);
    if (!f) throw Error(ErrorKind::IoError, "cannot write run manifest in " + dir.string());
    f << manifest.to_json();
}

RunManifest read_run_manifest(const std::filesystem::path& dir) {
    return RunManifest::from_json(slurp(dir / kRunManifestName));
}

}  // namespace nowcast
