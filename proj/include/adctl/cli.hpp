#pragma once

// Command-line frontend: INI run configs, one function per command, and the
// argument dispatcher used by the `adctl` executable.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <boost/property_tree/ptree.hpp>

#include "adctl/errors.hpp"

namespace adctl::cli {

enum ExitCode : int { kOk = 0, kNumericalFailure = 1, kUsageError = 2 };

/// Bad or missing config values, unreadable files. Maps to exit code 2.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// `key = value` lines grouped in `[section]`s. Relative paths resolve
/// against the config file's directory.
class RunConfig {
public:
    RunConfig() = default;
    static RunConfig load(const std::filesystem::path& file);
    static RunConfig parse(const std::string& text, std::filesystem::path base_dir = ".");

    const std::string& text() const noexcept { return text_; }
    bool has_section(const std::string& section) const;
    bool has(const std::string& section, const std::string& key) const;

    std::string str(const std::string& section, const std::string& key) const;
    std::string str(const std::string& section, const std::string& key, const std::string& fallback) const;
    double number(const std::string& section, const std::string& key) const;
    double number(const std::string& section, const std::string& key, double fallback) const;
    std::uint64_t integer(const std::string& section, const std::string& key, std::uint64_t fallback) const;
    bool flag(const std::string& section, const std::string& key, bool fallback) const;
    /// Comma-separated numbers.
    std::vector<double> list(const std::string& section, const std::string& key) const;
    /// Rows separated by ';', entries by ','.
    std::vector<std::vector<double>> matrix(const std::string& section, const std::string& key) const;
    std::filesystem::path path(const std::string& section, const std::string& key) const;

    /// All keys of a section in file order.
    std::vector<std::pair<std::string, std::string>> entries(const std::string& section) const;

private:
    const boost::property_tree::ptree* child(const std::string& section) const;

    std::string text_;
    std::filesystem::path base_;
    boost::property_tree::ptree tree_;
};

/// 64-bit FNV-1a, lowercase hex.
std::string fnv1a_hex(const std::string& bytes);

struct RunContext {
    std::filesystem::path out_dir = ".";
    std::optional<std::uint64_t> seed;  // overrides [run] seed
    std::ostream* log = nullptr;        // progress and report text
};

/// Prints the listing; with a context it also writes blt.txt and run.json
/// (the manifest hashes the model text).
int cmd_blt(const std::filesystem::path& model, std::ostream& out, const RunContext* ctx = nullptr);

/// Each command writes its files under ctx.out_dir plus run.json, and returns
/// an ExitCode. Library errors propagate; `dispatch` maps them to exit codes.
int cmd_linearize(const RunConfig& cfg, const RunContext& ctx);
int cmd_convert(const RunConfig& cfg, const RunContext& ctx);
int cmd_simulate(const RunConfig& cfg, const RunContext& ctx);
int cmd_mpc(const RunConfig& cfg, const RunContext& ctx);
int cmd_ekf(const RunConfig& cfg, const RunContext& ctx);

/// Parses argv and runs one command.
int dispatch(int argc, char** argv);

}  // namespace adctl::cli
