#include <cerrno>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include <boost/algorithm/string/trim.hpp>
#include <boost/property_tree/ini_parser.hpp>

#include "adctl/cli.hpp"

namespace adctl::cli {

namespace {

double to_number(const std::string& raw, const std::string& where) {
    const std::string s = boost::algorithm::trim_copy(raw);
    if (s == "pi") return 3.141592653589793;
    if (s == "-pi") return -3.141592653589793;
    char* end = nullptr;
    errno = 0;
    const double v = std::strtod(s.c_str(), &end);
    if (s.empty() || end != s.c_str() + s.size() || errno == ERANGE)
        throw ConfigError(where + ": '" + s + "' is not a number");
    return v;
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream is(s);
    while (std::getline(is, item, sep)) out.push_back(boost::algorithm::trim_copy(item));
    if (!s.empty() && s.back() == sep) out.emplace_back();
    return out;
}

}  // namespace

RunConfig RunConfig::load(const std::filesystem::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw ConfigError("cannot open config " + file.string());
    std::ostringstream os;
    os << in.rdbuf();
    return parse(os.str(), file.parent_path().empty() ? std::filesystem::path(".") : file.parent_path());
}

RunConfig RunConfig::parse(const std::string& text, std::filesystem::path base_dir) {
    RunConfig c;
    c.text_ = text;
    c.base_ = std::move(base_dir);
    std::istringstream is(text);
    try {
        boost::property_tree::ini_parser::read_ini(is, c.tree_);
    } catch (const boost::property_tree::ini_parser_error& e) {
        throw ConfigError("config line " + std::to_string(e.line()) + ": " + e.message());
    }
    return c;
}

const boost::property_tree::ptree* RunConfig::child(const std::string& section) const {
    const auto it = tree_.find(section);
    return it == tree_.not_found() ? nullptr : &it->second;
}

bool RunConfig::has_section(const std::string& section) const { return child(section) != nullptr; }

bool RunConfig::has(const std::string& section, const std::string& key) const {
    const auto* c = child(section);
    return c && c->find(key) != c->not_found();
}

std::string RunConfig::str(const std::string& section, const std::string& key) const {
    if (!has(section, key)) throw ConfigError("missing [" + section + "] " + key);
    return boost::algorithm::trim_copy(child(section)->find(key)->second.data());
}

std::string RunConfig::str(const std::string& section, const std::string& key, const std::string& fallback) const {
    return has(section, key) ? str(section, key) : fallback;
}

double RunConfig::number(const std::string& section, const std::string& key) const {
    return to_number(str(section, key), "[" + section + "] " + key);
}

double RunConfig::number(const std::string& section, const std::string& key, double fallback) const {
    return has(section, key) ? number(section, key) : fallback;
}

std::uint64_t RunConfig::integer(const std::string& section, const std::string& key, std::uint64_t fallback) const {
    if (!has(section, key)) return fallback;
    const std::string s = str(section, key);
    char* end = nullptr;
    errno = 0;
    const auto v = std::strtoull(s.c_str(), &end, 10);
    if (s.empty() || s[0] == '-' || end != s.c_str() + s.size() || errno == ERANGE)
        throw ConfigError("[" + section + "] " + key + ": '" + s + "' is not a non-negative integer");
    return v;
}

bool RunConfig::flag(const std::string& section, const std::string& key, bool fallback) const {
    if (!has(section, key)) return fallback;
    const std::string s = str(section, key);
    if (s == "true" || s == "yes" || s == "1") return true;
    if (s == "false" || s == "no" || s == "0") return false;
    throw ConfigError("[" + section + "] " + key + ": expected true or false, got '" + s + "'");
}

std::vector<double> RunConfig::list(const std::string& section, const std::string& key) const {
    const std::string s = str(section, key);
    std::vector<double> out;
    if (s.empty()) return out;
    for (const auto& item : split(s, ',')) out.push_back(to_number(item, "[" + section + "] " + key));
    return out;
}

std::vector<std::vector<double>> RunConfig::matrix(const std::string& section, const std::string& key) const {
    const std::string s = str(section, key);
    std::vector<std::vector<double>> rows;
    for (const auto& row : split(s, ';')) {
        std::vector<double> r;
        for (const auto& item : split(row, ',')) r.push_back(to_number(item, "[" + section + "] " + key));
        if (!rows.empty() && r.size() != rows.front().size())
            throw ConfigError("[" + section + "] " + key + ": rows have different lengths");
        rows.push_back(std::move(r));
    }
    return rows;
}

std::filesystem::path RunConfig::path(const std::string& section, const std::string& key) const {
    std::filesystem::path p(str(section, key));
    return p.is_absolute() ? p : base_ / p;
}

std::vector<std::pair<std::string, std::string>> RunConfig::entries(const std::string& section) const {
    std::vector<std::pair<std::string, std::string>> out;
    if (const auto* c = child(section))
        for (const auto& [k, v] : *c) out.emplace_back(k, boost::algorithm::trim_copy(v.data()));
    return out;
}

std::string fnv1a_hex(const std::string& bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace adctl::cli
