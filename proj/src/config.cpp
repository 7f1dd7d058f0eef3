#include "nowcast/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "nowcast/errors.hpp"

namespace nowcast {

namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

}  // namespace

KeyValueFile KeyValueFile::parse(std::string_view text, std::string source) {
    KeyValueFile kv;
    kv.source_ = std::move(source);
    std::string section;
    std::istringstream in{std::string(text)};
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find_first_of("#;");
        const std::string body = trim(hash == std::string::npos ? line : line.substr(0, hash));
        if (body.empty()) continue;
        if (body.front() == '[') {
            if (body.back() != ']')
                throw Error(ErrorKind::ConfigError,
                            kv.source_ + ":" + std::to_string(lineno) + ": unterminated section header");
            section = trim(std::string_view(body).substr(1, body.size() - 2));
            continue;
        }
        const auto eq = body.find('=');
        if (eq == std::string::npos)
            throw Error(ErrorKind::ConfigError,
                        kv.source_ + ":" + std::to_string(lineno) + ": expected key = value");
        const std::string key = trim(std::string_view(body).substr(0, eq));
        if (key.empty())
            throw Error(ErrorKind::ConfigError, kv.source_ + ":" + std::to_string(lineno) + ": empty key");
        const std::string full = section.empty() ? key : section + "." + key;
        if (kv.entries_.contains(full))
            throw Error(ErrorKind::ConfigError,
                        kv.source_ + ":" + std::to_string(lineno) + ": duplicate key '" + full + "'");
        kv.entries_[full] = Entry{trim(std::string_view(body).substr(eq + 1)), lineno};
    }
    return kv;
}

KeyValueFile KeyValueFile::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::ConfigError, "cannot open config " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str(), path.string());
}

std::optional<std::string> KeyValueFile::raw(const std::string& key) const {
    const auto it = entries_.find(key);
    if (it == entries_.end()) return std::nullopt;
    return it->second.value;
}

std::string KeyValueFile::where(const std::string& key) const {
    const auto it = entries_.find(key);
    if (it == entries_.end() || it->second.line == 0) return source_;
    return source_ + ":" + std::to_string(it->second.line);
}

std::string KeyValueFile::get_string(const std::string& key, const std::string& fallback) const {
    return raw(key).value_or(fallback);
}

double KeyValueFile::get_double(const std::string& key, double fallback) const {
    const auto v = raw(key);
    if (!v) return fallback;
    try {
        std::size_t used = 0;
        const double d = std::stod(*v, &used);
        if (used == v->size()) return d;
    } catch (const std::exception&) {
    }
    throw Error(ErrorKind::ConfigError, where(key) + ": '" + key + "' expects a number, got '" + *v + "'");
}

long long KeyValueFile::get_int(const std::string& key, long long fallback) const {
    const auto v = raw(key);
    if (!v) return fallback;
    long long out = 0;
    const auto [p, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
    if (ec != std::errc{} || p != v->data() + v->size())
        throw Error(ErrorKind::ConfigError, where(key) + ": '" + key + "' expects an integer, got '" + *v + "'");
    return out;
}

bool KeyValueFile::get_bool(const std::string& key, bool fallback) const {
    const auto v = raw(key);
    if (!v) return fallback;
    if (*v == "true" || *v == "1" || *v == "yes" || *v == "on") return true;
    if (*v == "false" || *v == "0" || *v == "no" || *v == "off") return false;
    throw Error(ErrorKind::ConfigError, where(key) + ": '" + key + "' expects true/false, got '" + *v + "'");
}

std::vector<int> KeyValueFile::get_int_list(const std::string& key, const std::vector<int>& fallback) const {
    const auto v = raw(key);
    if (!v) return fallback;
    std::vector<int> out;
    for (const auto& item : split_list(*v)) {
        int x = 0;
        const auto [p, ec] = std::from_chars(item.data(), item.data() + item.size(), x);
        if (ec != std::errc{} || p != item.data() + item.size())
            throw Error(ErrorKind::ConfigError, where(key) + ": '" + key + "' has non-integer item '" + item + "'");
        out.push_back(x);
    }
    return out;
}

std::vector<double> KeyValueFile::get_double_list(const std::string& key,
                                                  const std::vector<double>& fallback) const {
    const auto v = raw(key);
    if (!v) return fallback;
    std::vector<double> out;
    for (const auto& item : split_list(*v)) {
        try {
            std::size_t used = 0;
            out.push_back(std::stod(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw Error(ErrorKind::ConfigError, where(key) + ": '" + key + "' has non-numeric item '" + item + "'");
        }
    }
    return out;
}

void KeyValueFile::require_known(const std::set<std::string>& allowed) const {
    for (const auto& [key, entry] : entries_)
        if (!allowed.contains(key))
            throw Error(ErrorKind::ConfigError, where(key) + ": unknown key '" + key + "'");
}

void KeyValueFile::set(const std::string& key, std::string value) {
    entries_[key] = Entry{std::move(value), 0};
}

std::vector<std::string> KeyValueFile::keys() const {
    std::vector<std::string> out;
    for (const auto& [k, e] : entries_) out.push_back(k);
    return out;
}

std::string KeyValueFile::to_text() const {
    std::string top, sections, current;
    for (const auto& [k, e] : entries_) {
        const auto dot = k.find('.');
        if (dot == std::string::npos) {
            top += k + " = " + e.value + "\n";
            continue;
        }
        const std::string sec = k.substr(0, dot);
        if (sec != current) {
            sections += "\n[" + sec + "]\n";
            current = sec;
        }
        sections += k.substr(dot + 1) + " = " + e.value + "\n";
    }
    return top + sections;
}

}  // namespace nowcast
