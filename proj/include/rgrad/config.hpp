#pragma once

#include "rgrad/train.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace rgrad {

/// Flat `key = value` settings. Lines starting with `#` (after whitespace) and
/// trailing ` # ...` comments are ignored; keys may contain dots.
class Config {
  public:
    /// Throws ConfigError on a line without '=' or with an empty key.
    static Config parse(std::istream& in);
    static Config parse_string(const std::string& text);
    /// Throws ConfigError when the file cannot be read.
    static Config load(const std::filesystem::path& path);

    /// Later assignments win; used for flag overrides.
    void set(const std::string& key, const std::string& value);
    bool has(const std::string& key) const;

    std::string get_string(const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& key, double fallback) const;
    int get_int(const std::string& key, int fallback) const;
    std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
    /// Comma-separated list; empty entries are dropped.
    std::vector<std::string> get_list(const std::string& key) const;

    const std::map<std::string, std::string>& entries() const { return entries_; }

    /// Throws ConfigError naming the first key that is neither in `known`
    /// nor starts with one of `prefixes`.
    void require_known(const std::set<std::string>& known, const std::vector<std::string>& prefixes = {}) const;

  private:
    std::map<std::string, std::string> entries_;
};

/// Keys understood by train_config_from, and prefixes of its per-block keys.
const std::set<std::string>& train_config_keys();
const std::vector<std::string>& train_config_prefixes();

/// Overlays the training keys of `cfg` onto `base`. Values that fail to parse
/// raise ConfigError.
TrainConfig train_config_from(const Config& cfg, TrainConfig base = {});

} // namespace rgrad
