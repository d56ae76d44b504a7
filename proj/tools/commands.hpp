#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

namespace isl::cli {

using nlohmann::json;

/// Invalid configuration value; `key` is the dotted path used to anchor the message in the file.
class ConfigError : public std::runtime_error {
public:
    ConfigError(std::string key, const std::string& msg) : std::runtime_error(msg), key_(std::move(key)) {}
    const std::string& key() const { return key_; }

private:
    std::string key_;
};

struct Table {
    std::string name;  // file stem of the CSV
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

struct Check {
    std::string name;
    bool pass = false;
    std::string detail;
};

struct Report {
    std::vector<Table> tables;
    std::vector<Check> checks;
    json summary = json::object();
    json provenance = json::object();  // reference column -> oracle that produced it
    bool all_pass() const;
};

struct Context {
    std::string command;
    json params;  // resolved command block
    std::uint64_t seed = 1;
    int threads = 0;
};

/// Default parameter block of a command; throws std::invalid_argument for unknown commands.
json default_params(const std::string& command);
const std::vector<std::string>& command_names();

/// Defaults overlaid with the user block. Unknown keys and type mismatches raise ConfigError.
json resolve_params(const std::string& command, const json& user);

Report run_command(const Context& ctx);

}  // namespace isl::cli
