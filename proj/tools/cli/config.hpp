#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace ganmex::cli {

/// Invalid configuration or request; maps to exit status 1.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

enum class KeyType { integer, number, boolean, string, class_choice, number_list };

struct KeySpec {
    std::string key;
    KeyType type;
    nlohmann::json default_value;
};

/// Flat dotted-key configuration for one command. Values come from the schema
/// defaults, then the config file, then `--set` overrides in order.
class RunConfig {
public:
    RunConfig(std::string command, std::vector<KeySpec> schema);

    /// Reads a flat JSON object. Unknown keys and mistyped values are rejected.
    void merge_file(const std::string& path);
    void merge(const nlohmann::json& object, std::string_view source);
    /// Applies one "key=value" override. The value is read as JSON when it parses
    /// as such and as a bare string otherwise.
    void set(std::string_view assignment);

    const std::string& command() const noexcept { return command_; }
    /// Sorted object of every key, suitable for config.resolved.json.
    const nlohmann::json& resolved() const noexcept { return values_; }

    std::size_t count(const std::string& key) const;
    std::uint64_t seed(const std::string& key) const { return count(key); }
    double number(const std::string& key) const;
    bool flag(const std::string& key) const;
    const std::string& text(const std::string& key) const;
    std::vector<double> numbers(const std::string& key) const;
    const nlohmann::json& raw(const std::string& key) const;
    /// Comma-separated list in a string key; empty entries are dropped.
    std::vector<std::string> list(const std::string& key) const;

    /// Throws ConfigError naming `key` when its path value is empty or missing on disk.
    void require_file(const std::string& key) const;

private:
    const KeySpec& spec(std::string_view key) const;
    nlohmann::json coerce(const KeySpec& spec, nlohmann::json value, std::string_view source) const;

    std::string command_;
    std::vector<KeySpec> schema_;
    nlohmann::json values_ = nlohmann::json::object();
};

/// Flattens nested objects into dotted keys under `prefix`.
nlohmann::json flatten(const nlohmann::json& nested, const std::string& prefix);
/// Inverse of flatten for the keys under `prefix`.
nlohmann::json unflatten(const nlohmann::json& flat, const std::string& prefix);

}  // namespace ganmex::cli
