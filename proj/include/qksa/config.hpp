#pragma once

// Line-oriented `key = value` text used by every qksa config format.
//
//   # comment to end of line
//   n_qubits      = 1
//   channel.gate  = RX(0.5)
//
// Keys are unique; values run to end of line (trailing comments stripped) and
// are trimmed. Dotted keys are plain names, there is no nesting.

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

namespace qksa {

class ConfigError : public std::runtime_error
{
public:
    ConfigError(const std::string& message, std::string source = {}, int line = 0, int column = 0)
        : std::runtime_error(format(message, source, line, column)), source_(std::move(source)),
          line_(line), column_(column)
    {
    }

    const std::string& source() const { return source_; }
    int line() const { return line_; }
    int column() const { return column_; }

private:
    static std::string format(const std::string& message, const std::string& source, int line, int column)
    {
        std::string out = source.empty() ? std::string() : source;
        if (line > 0)
            out += ":" + std::to_string(line);
        if (column > 0)
            out += ":" + std::to_string(column);
        return out.empty() ? message : out + ": " + message;
    }

    std::string source_;
    int line_;
    int column_;
};

inline std::string_view trim(std::string_view s)
{
    auto const first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos)
        return {};
    auto const last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

/// Parse a whole string as a double (accepts inf/-inf/nan spellings).
inline std::optional<double> parse_double(std::string_view text)
{
    text = trim(text);
    if (!text.empty() && text.front() == '+')
        text.remove_prefix(1);
    double value = 0.0;
    auto const [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc() || ptr != text.data() + text.size() || text.empty())
        return std::nullopt;
    return value;
}

inline std::optional<long long> parse_integer(std::string_view text)
{
    text = trim(text);
    long long value = 0;
    auto const [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc() || ptr != text.data() + text.size() || text.empty())
        return std::nullopt;
    return value;
}

/// Shortest representation that round-trips to the same double.
inline std::string format_double(double value)
{
    char buf[64];
    auto const [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
    return ec == std::errc() ? std::string(buf, ptr) : std::string("nan");
}

/// Fixed 17 significant digits (used for matrix payloads).
inline std::string format_double17(double value)
{
    char buf[64];
    auto const [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value, std::chars_format::general, 17);
    return ec == std::errc() ? std::string(buf, ptr) : std::string("nan");
}

struct KeyValue
{
    std::string key;
    std::string value;
    int line = 0;
    int value_column = 0;  ///< 1-based column where the value starts
};

class KeyValueFile
{
public:
    static KeyValueFile parse(std::string_view text, std::string source = "<input>")
    {
        KeyValueFile file;
        file.source_ = std::move(source);
        int line_no = 0;
        std::size_t pos = 0;
        while (pos <= text.size()) {
            auto const end = text.find('\n', pos);
            std::string_view line = text.substr(pos, end == std::string_view::npos ? text.npos : end - pos);
            char const* const line_start = line.data();
            pos = end == std::string_view::npos ? text.size() + 1 : end + 1;
            ++line_no;
            if (auto const hash = line.find('#'); hash != std::string_view::npos)
                line = line.substr(0, hash);
            line = trim(line);
            if (line.empty())
                continue;
            auto const eq = line.find('=');
            if (eq == std::string_view::npos)
                throw ConfigError("expected 'key = value'", file.source_, line_no);
            std::string key(trim(line.substr(0, eq)));
            std::string_view const raw_value = trim(line.substr(eq + 1));
            std::string value(raw_value);
            int const column = raw_value.empty() ? static_cast<int>(line.size()) + 1
                                                 : static_cast<int>(raw_value.data() - line_start) + 1;
            if (key.empty())
                throw ConfigError("empty key", file.source_, line_no);
            if (file.find(key))
                throw ConfigError("duplicate key '" + key + "'", file.source_, line_no);
            file.entries_.push_back({std::move(key), std::move(value), line_no, column});
        }
        return file;
    }

    static KeyValueFile load(const std::filesystem::path& path)
    {
        std::ifstream in(path);
        if (!in)
            throw ConfigError("cannot open file", path.string());
        std::ostringstream buffer;
        buffer << in.rdbuf();
        KeyValueFile file = parse(buffer.str(), path.string());
        file.directory_ = path.parent_path();
        return file;
    }

    const std::string& source() const { return source_; }
    const std::filesystem::path& directory() const { return directory_; }
    const std::vector<KeyValue>& entries() const { return entries_; }

    const KeyValue* find(std::string_view key) const
    {
        for (const auto& e : entries_)
            if (e.key == key)
                return &e;
        return nullptr;
    }

    bool has(std::string_view key) const { return find(key) != nullptr; }

    void require_known(std::initializer_list<std::string_view> known) const
    {
        for (const auto& e : entries_) {
            bool ok = false;
            for (auto k : known)
                ok = ok || e.key == k;
            if (!ok)
                throw ConfigError("unknown key '" + e.key + "'", source_, e.line);
        }
    }

    const KeyValue& require(std::string_view key) const
    {
        if (const auto* e = find(key))
            return *e;
        throw ConfigError("missing key '" + std::string(key) + "'", source_);
    }

    std::string get_string(std::string_view key) const { return require(key).value; }

    double get_double(std::string_view key) const
    {
        const auto& e = require(key);
        if (auto v = parse_double(e.value))
            return *v;
        throw ConfigError("'" + e.key + "' is not a number: " + e.value, source_, e.line);
    }

    long long get_integer(std::string_view key) const
    {
        const auto& e = require(key);
        if (auto v = parse_integer(e.value))
            return *v;
        throw ConfigError("'" + e.key + "' is not an integer: " + e.value, source_, e.line);
    }

    bool get_bool(std::string_view key) const
    {
        const auto& e = require(key);
        if (e.value == "true" || e.value == "1")
            return true;
        if (e.value == "false" || e.value == "0")
            return false;
        throw ConfigError("'" + e.key + "' is not a boolean: " + e.value, source_, e.line);
    }

    std::filesystem::path get_path(std::string_view key) const
    {
        std::filesystem::path p(get_string(key));
        return p.is_absolute() ? p : directory_ / p;
    }

private:
    std::string source_;
    std::filesystem::path directory_;
    std::vector<KeyValue> entries_;
};

} // namespace qksa
