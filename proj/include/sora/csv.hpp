#pragma once

#include <sstream>
#include <string>
#include <vector>

namespace sora {

// Minimal RFC-4180-style CSV: fields with commas, quotes or newlines are
// quoted, embedded quotes doubled.
inline std::string csv_escape(const std::string& field) {
    bool needs_quote = field.find_first_of(",\"\n\r") != std::string::npos;
    if (!needs_quote) return field;
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out += "\"\"";
        else out += c;
    }
    out += '"';
    return out;
}

inline std::string csv_row(const std::vector<std::string>& fields) {
    std::string out;
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) out += ',';
        out += csv_escape(fields[i]);
    }
    out += '\n';
    return out;
}

inline std::vector<std::string> csv_parse_row(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.push_back(std::move(cur));
            cur.clear();
        } else if (c == '\r') {
            // swallow
        } else {
            cur += c;
        }
    }
    out.push_back(std::move(cur));
    return out;
}

}  // namespace sora
