#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "vesseg/errors.hpp"

namespace vesseg {

// Flat key=value text config with '#' comments. Keys are unique; unknown keys
// are rejected against a per-consumer schema so typos fail before side effects.
class KeyValueConfig {
public:
    KeyValueConfig() = default;

    static KeyValueConfig parse_text(const std::string& text);
    static KeyValueConfig load_file(const std::string& path);

    void set(const std::string& key, const std::string& value);
    bool has(const std::string& key) const { return values_.count(key) != 0; }

    const std::string& get(const std::string& key) const;
    std::string get_or(const std::string& key, const std::string& fallback) const;
    std::int64_t get_int(const std::string& key) const;
    std::int64_t get_int_or(const std::string& key, std::int64_t fallback) const;
    double get_real(const std::string& key) const;
    double get_real_or(const std::string& key, double fallback) const;
    bool get_bool_or(const std::string& key, bool fallback) const;

    // "key=value" strings, e.g. from CLI --override flags
    void apply_overrides(const std::vector<std::string>& overrides);

    // throws ConfigError naming any key outside `allowed`
    void require_known_keys(const std::set<std::string>& allowed) const;

    // canonical serialization: sorted keys, one per line
    std::string canonical_text() const;

    // stable FNV-1a 64-bit hash of the canonical text, as hex
    std::string hash() const;

    const std::map<std::string, std::string>& values() const { return values_; }

private:
    std::map<std::string, std::string> values_;
};

std::string fnv1a_hex(const std::string& text);

}  // namespace vesseg
