#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace nowcast {

/// Flat key-value text with optional `[section]` headers. Keys inside a
/// section are addressed as "section.key". `#` and `;` start comments.
/// Every value remembers its line so validation errors can point at it.
class KeyValueFile {
public:
    static KeyValueFile parse(std::string_view text, std::string source = "<config>");
    static KeyValueFile load(const std::filesystem::path& path);

    bool has(const std::string& key) const { return entries_.contains(key); }
    std::optional<std::string> raw(const std::string& key) const;

    std::string get_string(const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& key, double fallback) const;
    long long get_int(const std::string& key, long long fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    std::vector<int> get_int_list(const std::string& key, const std::vector<int>& fallback) const;
    std::vector<double> get_double_list(const std::string& key, const std::vector<double>& fallback) const;

    /// Throws ConfigError naming the first key that is not in `allowed`.
    void require_known(const std::set<std::string>& allowed) const;

    /// "file:line" for a key, or just the file name if absent.
    std::string where(const std::string& key) const;

    void set(const std::string& key, std::string value);
    std::vector<std::string> keys() const;
    /// Renders the file back to text, top-level keys first, then one block per section.
    std::string to_text() const;

    const std::string& source() const { return source_; }

private:
    struct Entry {
        std::string value;
        int line = 0;
    };
    std::string source_;
    std::map<std::string, Entry> entries_;
};

}  // namespace nowcast
