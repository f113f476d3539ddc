#pragma once

#include <cstdio>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace geowave {

// hex SHA-256 of the bytes
std::string content_hash(std::string_view bytes);

// 17 significant digits, round-trips doubles
std::string fmt17(double v);

// CSV with a header row; every cell already formatted
class CsvWriter {
public:
    CsvWriter(const std::filesystem::path& p, const std::vector<std::string>& header);
    void row(const std::vector<double>& values);
    void row_text(const std::vector<std::string>& cells);
    ~CsvWriter();

private:
    std::FILE* f_ = nullptr;
    std::filesystem::path path_;
};

// Flat "key = value" configuration with # comments.
struct ConfigError : std::runtime_error {
    ConfigError(const std::string& what, int line) : std::runtime_error(what), line(line) {}
    int line;
};

class Config {
public:
    static Config parse(std::string_view text, const std::string& origin = "<string>");
    static Config load(const std::filesystem::path& p);

    bool has(const std::string& key) const { return values_.count(key) > 0; }
    double number(const std::string& key, double fallback) const;
    double number(const std::string& key) const;
    long integer(const std::string& key, long fallback) const;
    std::string text(const std::string& key, const std::string& fallback) const;
    std::vector<double> list(const std::string& key, const std::vector<double>& fallback) const;
    void set(const std::string& key, const std::string& value) { values_[key] = {value, 0}; }
    // keys read so far, with the values actually used
    const std::map<std::string, std::string>& consumed() const { return consumed_; }
    std::vector<std::string> unused() const;
    int line_of(const std::string& key) const;

private:
    struct Entry {
        std::string value;
        int line;
    };
    std::map<std::string, Entry> values_;
    mutable std::map<std::string, std::string> consumed_;
    std::string origin_;
};

}  // namespace geowave
