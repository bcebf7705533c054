#include "cli/config.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace ganmex::cli {

namespace {

std::string type_name(KeyType t) {
    switch (t) {
        case KeyType::integer: return "a non-negative integer";
        case KeyType::number: return "a number";
        case KeyType::boolean: return "a boolean";
        case KeyType::string: return "a string";
        case KeyType::class_choice: return "a class index or keyword";
        case KeyType::number_list: return "a list of numbers";
    }
    return "?";
}

}  // namespace

RunConfig::RunConfig(std::string command, std::vector<KeySpec> schema)
    : command_(std::move(command)), schema_(std::move(schema)) {
    for (const auto& s : schema_) values_[s.key] = s.default_value;
}

const KeySpec& RunConfig::spec(std::string_view key) const {
    for (const auto& s : schema_) {
        if (s.key == key) return s;
    }
    throw ConfigError(command_ + ": unknown config key '" + std::string(key) + "'");
}

nlohmann::json RunConfig::coerce(const KeySpec& s, nlohmann::json v, std::string_view source) const {
    auto bad = [&] {
        return ConfigError(command_ + ": key '" + s.key + "' from " + std::string(source) + " must be " +
                           type_name(s.type) + ", got " + v.dump());
    };
    switch (s.type) {
        case KeyType::integer:
            if (v.is_number_unsigned()) return v;
            if (v.is_number_integer() && v.get<std::int64_t>() >= 0) return v.get<std::uint64_t>();
            if (v.is_number_float()) {
                const double d = v.get<double>();
                if (d >= 0 && d == std::floor(d) && d < 9.0e15) return static_cast<std::uint64_t>(d);
            }
            throw bad();
        case KeyType::number:
            if (v.is_number() && std::isfinite(v.get<double>())) return v.get<double>();
            throw bad();
        case KeyType::boolean:
            if (v.is_boolean()) return v;
            throw bad();
        case KeyType::string:
            if (v.is_string()) return v;
            throw bad();
        case KeyType::class_choice:
            if (v.is_string() || v.is_number_unsigned()) return v;
            if (v.is_number_integer() && v.get<std::int64_t>() >= 0) return v.get<std::uint64_t>();
            throw bad();
        case KeyType::number_list: {
            if (v.is_number()) v = nlohmann::json::array({v});
            if (!v.is_array()) throw bad();
            nlohmann::json out = nlohmann::json::array();
            for (const auto& e : v) {
                if (!e.is_number() || !std::isfinite(e.get<double>())) throw bad();
                out.push_back(e.get<double>());
            }
            return out;
        }
    }
    throw bad();
}

void RunConfig::merge(const nlohmann::json& object, std::string_view source) {
    if (!object.is_object()) throw ConfigError(command_ + ": " + std::string(source) + " must hold a JSON object");
    for (auto it = object.begin(); it != object.end(); ++it) {
        const auto& s = spec(it.key());
        values_[s.key] = coerce(s, it.value(), source);
    }
}

void RunConfig::merge_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError(command_ + ": cannot open config file " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(ss.str());
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(command_ + ": config file " + path + " is not valid JSON: " + e.what());
    }
    merge(j, path);
}

void RunConfig::set(std::string_view assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string_view::npos || eq == 0) {
        throw ConfigError(command_ + ": --set expects key=value, got '" + std::string(assignment) + "'");
    }
    const std::string key(assignment.substr(0, eq));
    const std::string text(assignment.substr(eq + 1));
    const auto& s = spec(key);
    nlohmann::json v;
    if (s.type == KeyType::string) {
        v = text;
    } else {
        v = nlohmann::json::parse(text, nullptr, false);
        if (v.is_discarded()) v = text;
    }
    values_[s.key] = coerce(s, std::move(v), "--set");
}

const nlohmann::json& RunConfig::raw(const std::string& key) const {
    (void)spec(key);
    return values_.at(key);
}

std::size_t RunConfig::count(const std::string& key) const { return raw(key).get<std::size_t>(); }
double RunConfig::number(const std::string& key) const { return raw(key).get<double>(); }
bool RunConfig::flag(const std::string& key) const { return raw(key).get<bool>(); }
const std::string& RunConfig::text(const std::string& key) const { return raw(key).get_ref<const std::string&>(); }
std::vector<double> RunConfig::numbers(const std::string& key) const { return raw(key).get<std::vector<double>>(); }

std::vector<std::string> RunConfig::list(const std::string& key) const {
    std::vector<std::string> out;
    std::stringstream ss(text(key));
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto b = item.find_first_not_of(" \t"), e = item.find_last_not_of(" \t");
        if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
    }
    return out;
}

void RunConfig::require_file(const std::string& key) const {
    const auto& path = text(key);
    if (path.empty()) throw ConfigError(command_ + ": key '" + key + "' is required");
    if (!std::filesystem::is_regular_file(path)) {
        throw ConfigError(command_ + ": key '" + key + "' names a missing file: " + path);
    }
}

nlohmann::json flatten(const nlohmann::json& nested, const std::string& prefix) {
    nlohmann::json out = nlohmann::json::object();
    for (auto it = nested.begin(); it != nested.end(); ++it) {
        if (it.value().is_object()) {
            out.update(flatten(it.value(), prefix + it.key() + "."));
        } else {
            out[prefix + it.key()] = it.value();
        }
    }
    return out;
}

nlohmann::json unflatten(const nlohmann::json& flat, const std::string& prefix) {
    nlohmann::json out = nlohmann::json::object();
    for (auto it = flat.begin(); it != flat.end(); ++it) {
        if (it.key().rfind(prefix, 0) != 0) continue;
        out[nlohmann::json::json_pointer("/" + [&] {
            std::string p = it.key().substr(prefix.size());
            for (char& c : p) {
                if (c == '.') c = '/';
            }
            return p;
        }())] = it.value();
    }
    return out;
}

}  // namespace ganmex::cli
