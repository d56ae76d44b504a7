#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "commands.hpp"

#ifndef ISL_VERSION
#define ISL_VERSION "unknown"
#endif

namespace fs = std::filesystem;
using isl::cli::ConfigError;
using isl::cli::json;

namespace {

enum Exit { kPass = 0, kCheckFailed = 1, kConfigError = 2, kRuntimeError = 3 };

// Line of the first occurrence of "key" in the config text (0 when absent).
int line_of_key(const std::string& text, const std::string& path)
{
    std::string key = path.substr(path.find_last_of('.') + 1);
    key = key.substr(0, key.find('['));
    const auto pos = text.find("\"" + key + "\"");
    if (key.empty() || pos == std::string::npos)
        return 0;
    return 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<long>(pos), '\n'));
}

std::string csv_field(const std::string& s)
{
    if (s.find_first_of(",\"\n") == std::string::npos)
        return s;
    std::string out = "\"";
    for (char c : s)
        out += c == '"' ? std::string("\"\"") : std::string(1, c);
    return out + "\"";
}

void write_csv(const fs::path& file, const isl::cli::Table& t)
{
    std::ofstream os(file);
    for (std::size_t i = 0; i < t.header.size(); ++i)
        os << (i ? "," : "") << csv_field(t.header[i]);
    os << "\n";
    for (const auto& row : t.rows) {
        for (std::size_t i = 0; i < row.size(); ++i)
            os << (i ? "," : "") << csv_field(row[i]);
        os << "\n";
    }
}

std::string summary_text(const std::string& cmd, const isl::cli::Report& r)
{
    std::ostringstream os;
    os << "isinglab " << cmd << " (" << ISL_VERSION << ")\n";
    for (const auto& c : r.checks)
        os << (c.pass ? "PASS " : "FAIL ") << c.name << ": " << c.detail << "\n";
    for (const auto& [k, v] : r.provenance.items())
        os << "reference " << k << ": " << v.get<std::string>() << "\n";
    os << (r.all_pass() ? "all checks passed" : "some checks failed") << "\n";
    return os.str();
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Ising lattice lab: exact, fermionic, polymer, scaling and RG diagnostics"};
    app.set_version_flag("--version", ISL_VERSION);
    app.require_subcommand(1);

    std::string config_path, out_dir;
    std::optional<std::uint64_t> seed;
    std::optional<int> threads;
    app.add_option("--config", config_path, "JSON configuration file")->check(CLI::ExistingFile);
    app.add_option("--out", out_dir, "output directory (default isinglab-out/<command>)");
    app.add_option("--seed", seed, "random seed");
    app.add_option("--threads", threads, "worker threads (0: hardware concurrency)")->check(CLI::NonNegativeNumber);
    app.fallthrough();

    const std::map<std::string, std::string> help = {
        {"exact", "enumeration against the four-Pfaffian formula"},
        {"mc", "Monte Carlo energy correlations"},
        {"free", "free-fermion propagators and boundary conditions"},
        {"polymer", "polymer expansion against enumeration"},
        {"scaling", "lattice correlations against the continuum limit"},
        {"rg", "running-coupling flow and counterterm fixed point"},
        {"compare", "one correlation from every available method"}};
    for (const auto& name : isl::cli::command_names())
        app.add_subcommand(name, help.at(name));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kPass : kConfigError;
    }
    const std::string cmd = app.get_subcommands().front()->get_name();

    std::string text;
    json resolved;
    try {
        json file = json::object();
        if (!config_path.empty()) {
            std::ifstream is(config_path);
            text.assign(std::istreambuf_iterator<char>(is), {});
            try {
                file = json::parse(text);
            } catch (const json::parse_error& e) {
                std::cerr << config_path << ": " << e.what() << "\n";
                return kConfigError;
            }
            if (!file.is_object())
                throw ConfigError("", "top level must be an object");
        }
        for (const auto& [k, v] : file.items()) {
            const auto& names = isl::cli::command_names();
            if (k != "out" && k != "seed" && k != "threads" && std::find(names.begin(), names.end(), k) == names.end())
                throw ConfigError(k, "unknown key '" + k + "'");
        }
        resolved["command"] = cmd;
        resolved["out"] = file.value("out", "isinglab-out/" + cmd);
        resolved["seed"] = file.value("seed", std::uint64_t{1});
        resolved["threads"] = file.value("threads", 0);
        if (!out_dir.empty())
            resolved["out"] = out_dir;
        if (seed)
            resolved["seed"] = *seed;
        if (threads)
            resolved["threads"] = *threads;
        resolved["params"] = isl::cli::resolve_params(cmd, file.contains(cmd) ? file.at(cmd) : json());
    } catch (const ConfigError& e) {
        const int line = line_of_key(text, e.key());
        std::cerr << (config_path.empty() ? "config" : config_path);
        if (line > 0)
            std::cerr << ":" << line;
        std::cerr << ": " << e.what() << "\n";
        return kConfigError;
    } catch (const json::exception& e) {
        std::cerr << config_path << ": " << e.what() << "\n";
        return kConfigError;
    }

    isl::cli::Context ctx{cmd, resolved["params"], resolved["seed"].get<std::uint64_t>(), resolved["threads"].get<int>()};
    isl::cli::Report report;
    try {
        report = isl::cli::run_command(ctx);
    } catch (const ConfigError& e) {
        const std::string key = cmd + "." + e.key();
        const int line = line_of_key(text, e.key());
        std::cerr << (config_path.empty() ? "config" : config_path);
        if (line > 0)
            std::cerr << ":" << line;
        std::cerr << ": " << e.what() << " [" << key << "]\n";
        return kConfigError;
    } catch (const json::exception& e) {
        std::cerr << "config: " << e.what() << "\n";
        return kConfigError;
    } catch (const std::exception& e) {
        std::cerr << "isinglab " << cmd << ": error: " << e.what() << "\n";
        return kRuntimeError;
    }

    const fs::path out = resolved["out"].get<std::string>();
    fs::create_directories(out);
    for (const auto& t : report.tables)
        write_csv(out / (t.name + ".csv"), t);
    json checks = json::array();
    for (const auto& c : report.checks)
        checks.push_back({{"name", c.name}, {"pass", c.pass}, {"detail", c.detail}});
    json summary = {{"command", cmd},          {"all_pass", report.all_pass()},       {"checks", checks},
                    {"summary", report.summary}, {"provenance", report.provenance}};
    std::ofstream(out / "summary.json") << summary.dump(2) << "\n";
    const std::string txt = summary_text(cmd, report);
    std::ofstream(out / "summary.txt") << txt;
    json tables = json::array();
    for (const auto& t : report.tables)
        tables.push_back(t.name + ".csv");
    json manifest = {{"version", ISL_VERSION}, {"config_file", config_path}, {"resolved", resolved}, {"outputs", tables}};
    std::ofstream(out / "manifest.json") << manifest.dump(2) << "\n";
    std::cout << txt;
    return report.all_pass() ? kPass : kCheckFailed;
}
