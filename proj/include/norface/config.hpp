#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "norface/errors.hpp"

namespace norface {

/// Flat key-value configuration with typed accessors. The canonical
/// serialization (sorted keys) feeds the config hash embedded in every
/// output file.
class ConfigMap {
public:
    ConfigMap() = default;

    static ConfigMap parse(const std::string& text) {
        ConfigMap cfg;
        std::istringstream in(text);
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            std::string t = trim(line);
            if (t.empty() || t[0] == '#') continue;
            auto eq = t.find('=');
            if (eq == std::string::npos)
                throw FormatError("config: line " + std::to_string(lineno) +
                                  " is not 'key = value': " + t);
            std::string key = trim(t.substr(0, eq));
            std::string value = trim(t.substr(eq + 1));
            if (key.empty())
                throw FormatError("config: empty key at line " + std::to_string(lineno));
            cfg.kv_[key] = value;
        }
        return cfg;
    }

    static ConfigMap load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw FormatError("config: cannot open " + path);
        std::ostringstream ss;
        ss << in.rdbuf();
        return parse(ss.str());
    }

    std::string serialize() const {
        std::ostringstream os;
        for (const auto& [k, v] : kv_) os << k << " = " << v << "\n";
        return os.str();
    }

    void save(const std::string& path) const {
        std::ofstream out(path);
        if (!out) throw FormatError("config: cannot write " + path);
        out << serialize();
    }

    /// FNV-1a 64 of the canonical serialization, as fixed-width hex.
    std::string hash() const {
        std::uint64_t h = 0xCBF29CE484222325ULL;
        for (unsigned char c : serialize()) {
            h ^= c;
            h *= 0x100000001B3ULL;
        }
        std::ostringstream os;
        os << std::hex;
        for (int shift = 60; shift >= 0; shift -= 4) os << ((h >> shift) & 0xF);
        return os.str();
    }

    bool has(const std::string& key) const { return kv_.count(key) > 0; }

    void set(const std::string& key, const std::string& value) { kv_[key] = value; }
    void set(const std::string& key, const char* value) { kv_[key] = value; }
    void set(const std::string& key, double value) {
        // Shortest round-trip form.
        char buf[32];
        auto res = std::to_chars(buf, buf + sizeof(buf), value);
        kv_[key] = std::string(buf, res.ptr);
    }
    void set(const std::string& key, std::uint64_t value) { kv_[key] = std::to_string(value); }
    void set(const std::string& key, bool value) { kv_[key] = value ? "true" : "false"; }
    void set(const std::string& key, const std::vector<std::uint64_t>& values) {
        std::ostringstream os;
        for (std::size_t i = 0; i < values.size(); ++i) os << (i ? "," : "") << values[i];
        kv_[key] = os.str();
    }

    std::string get_string(const std::string& key, const std::string& fallback) const {
        auto it = kv_.find(key);
        return it == kv_.end() ? fallback : it->second;
    }

    std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const {
        auto it = kv_.find(key);
        if (it == kv_.end()) return fallback;
        try {
            return std::stoull(it->second);
        } catch (const std::exception&) {
            throw FormatError("config: '" + key + "' is not an integer: " + it->second);
        }
    }

    double get_double(const std::string& key, double fallback) const {
        auto it = kv_.find(key);
        if (it == kv_.end()) return fallback;
        try {
            std::size_t pos = 0;
            double v = std::stod(it->second, &pos);
            if (pos != it->second.size()) throw FormatError("");
            return v;
        } catch (const std::exception&) {
            throw FormatError("config: '" + key + "' is not a number: " + it->second);
        }
    }

    bool get_bool(const std::string& key, bool fallback) const {
        auto it = kv_.find(key);
        if (it == kv_.end()) return fallback;
        if (it->second == "true") return true;
        if (it->second == "false") return false;
        throw FormatError("config: '" + key + "' is not true/false: " + it->second);
    }

    std::vector<std::uint64_t> get_u64_list(const std::string& key,
                                            std::vector<std::uint64_t> fallback) const {
        auto it = kv_.find(key);
        if (it == kv_.end()) return fallback;
        std::vector<std::uint64_t> out;
        std::istringstream ss(it->second);
        std::string part;
        while (std::getline(ss, part, ',')) {
            try {
                out.push_back(std::stoull(trim(part)));
            } catch (const std::exception&) {
                throw FormatError("config: '" + key + "' has a non-integer entry: " + part);
            }
        }
        return out;
    }

    const std::map<std::string, std::string>& entries() const { return kv_; }

private:
    static std::string trim(const std::string& s) {
        std::size_t a = s.find_first_not_of(" \t\r");
        if (a == std::string::npos) return "";
        std::size_t b = s.find_last_not_of(" \t\r");
        return s.substr(a, b - a + 1);
    }

    std::map<std::string, std::string> kv_;
};

} // namespace norface
