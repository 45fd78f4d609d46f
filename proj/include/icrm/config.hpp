#pragma once

#include <map>
#include <string>

#include "icrm/errors.hpp"
#include "icrm/text.hpp"

namespace icrm {

struct ConfigError : Error { using Error::Error; };

// `key=value` per line, `#` starts a comment, whitespace trimmed; a repeated
// key keeps the last value.
inline std::map<std::string, std::string> parse_config_text(const std::string& text) {
    std::map<std::string, std::string> kv;
    std::size_t line_no = 0;
    for (const std::string_view raw : text::split_lines(text)) {
        ++line_no;
        std::string_view line = raw;
        if (const auto hash = line.find('#'); hash != std::string_view::npos)
            line = line.substr(0, hash);
        line = text::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos)
            throw ConfigError("config line " + std::to_string(line_no) + ": want key=value");
        const std::string key{text::trim(line.substr(0, eq))};
        if (key.empty())
            throw ConfigError("config line " + std::to_string(line_no) + ": empty key");
        kv[key] = std::string(text::trim(line.substr(eq + 1)));
    }
    return kv;
}

// Canonical echo form: sorted key=value lines (std::map iterates sorted).
inline std::string config_echo_text(const std::map<std::string, std::string>& kv) {
    std::string out;
    for (const auto& [k, v] : kv) {
        out += k;
        out += '=';
        out += v;
        out += '\n';
    }
    return out;
}

} // namespace icrm
