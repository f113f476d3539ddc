#include "geowave/io.hpp"

#include <openssl/evp.h>

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace geowave {

std::string content_hash(std::string_view bytes) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (!EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr))
        throw std::runtime_error("sha256 failed");
    static const char* hex = "0123456789abcdef";
    std::string out(2 * len, '0');
    for (unsigned int i = 0; i < len; ++i) {
        out[2 * i] = hex[md[i] >> 4];
        out[2 * i + 1] = hex[md[i] & 15];
    }
    return out;
}

std::string fmt17(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

CsvWriter::CsvWriter(const std::filesystem::path& p, const std::vector<std::string>& header) : path_(p) {
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    f_ = std::fopen(p.c_str(), "w");
    if (!f_) throw std::runtime_error("cannot write " + p.string());
    row_text(header);
}

void CsvWriter::row(const std::vector<double>& values) {
    std::vector<std::string> cells;
    cells.reserve(values.size());
    for (double v : values) cells.push_back(fmt17(v));
    row_text(cells);
}

void CsvWriter::row_text(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i) std::fputc(',', f_);
        std::fputs(cells[i].c_str(), f_);
    }
    std::fputc('\n', f_);
}

CsvWriter::~CsvWriter() {
    if (f_) std::fclose(f_);
}

namespace {

std::string trim(std::string_view s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string_view::npos) return {};
    std::size_t b = s.find_last_not_of(" \t\r");
    return std::string(s.substr(a, b - a + 1));
}

double to_double(const std::string& s, const std::string& key, int line) {
    double v = 0.0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size())
        throw ConfigError("line " + std::to_string(line) + ": '" + key + "' expects a number, got '" + s + "'", line);
    return v;
}

}  // namespace

Config Config::parse(std::string_view text, const std::string& origin) {
    Config c;
    c.origin_ = origin;
    std::istringstream in{std::string(text)};
    std::string raw;
    int line = 0;
    while (std::getline(in, raw)) {
        ++line;
        std::string s = trim(std::string_view(raw).substr(0, raw.find('#')));
        if (s.empty()) continue;
        auto eq = s.find('=');
        if (eq == std::string::npos)
            throw ConfigError(origin + ":" + std::to_string(line) + ": expected 'key = value', got '" + s + "'", line);
        std::string key = trim(std::string_view(s).substr(0, eq));
        std::string val = trim(std::string_view(s).substr(eq + 1));
        if (key.empty()) throw ConfigError(origin + ":" + std::to_string(line) + ": empty key", line);
        if (c.values_.count(key))
            throw ConfigError(origin + ":" + std::to_string(line) + ": duplicate key '" + key + "' (first set on line " +
                                  std::to_string(c.values_[key].line) + ")",
                              line);
        c.values_[key] = {val, line};
    }
    return c;
}

Config Config::load(const std::filesystem::path& p) {
    std::ifstream f(p);
    if (!f) throw ConfigError("cannot read config " + p.string(), 0);
    std::stringstream ss;
    ss << f.rdbuf();
    return parse(ss.str(), p.string());
}

int Config::line_of(const std::string& key) const {
    auto it = values_.find(key);
    return it == values_.end() ? 0 : it->second.line;
}

double Config::number(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError(origin_ + ": missing required key '" + key + "'", 0);
    double v = to_double(it->second.value, key, it->second.line);
    consumed_[key] = fmt17(v);
    return v;
}

double Config::number(const std::string& key, double fallback) const {
    if (!has(key)) {
        consumed_[key] = fmt17(fallback);
        return fallback;
    }
    return number(key);
}

long Config::integer(const std::string& key, long fallback) const {
    double v = number(key, double(fallback));
    if (v != std::floor(v))
        throw ConfigError(origin_ + ":" + std::to_string(line_of(key)) + ": '" + key + "' expects an integer",
                          line_of(key));
    consumed_[key] = std::to_string(long(v));
    return long(v);
}

std::string Config::text(const std::string& key, const std::string& fallback) const {
    auto it = values_.find(key);
    std::string v = it == values_.end() ? fallback : it->second.value;
    consumed_[key] = v;
    return v;
}

std::vector<double> Config::list(const std::string& key, const std::vector<double>& fallback) const {
    auto it = values_.find(key);
    std::vector<double> out;
    if (it == values_.end()) {
        out = fallback;
    } else {
        std::stringstream ss(it->second.value);
        std::string item;
        while (std::getline(ss, item, ',')) out.push_back(to_double(trim(item), key, it->second.line));
        if (out.empty())
            throw ConfigError(origin_ + ":" + std::to_string(it->second.line) + ": '" + key + "' is an empty list",
                              it->second.line);
    }
    std::string joined;
    for (std::size_t i = 0; i < out.size(); ++i) joined += (i ? "," : "") + fmt17(out[i]);
    consumed_[key] = joined;
    return out;
}

std::vector<std::string> Config::unused() const {
    std::vector<std::string> out;
    for (const auto& [k, e] : values_)
        if (!consumed_.count(k)) out.push_back(k);
    return out;
}

}  // namespace geowave
