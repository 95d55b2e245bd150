#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "error.hpp"

namespace xlcode::jsonl {

using json = nlohmann::json;

// Calls `fn(object, line_number)` for every non-blank line. Line numbers are 1-based.
inline void for_each(const std::filesystem::path& path,
                     const std::function<void(const json&, std::size_t)>& fn) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw FormatError("cannot open " + path.string());
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos)
            continue;
        json obj;
        try {
            obj = json::parse(line);
        } catch (const json::parse_error& e) {
            throw FormatError(path.filename().string() + ":" + std::to_string(lineno) +
                              ": malformed JSON line: " + e.what());
        }
        if (!obj.is_object())
            throw FormatError(path.filename().string() + ":" + std::to_string(lineno) +
                              ": expected a JSON object");
        try {
            fn(obj, lineno);
        } catch (const json::exception& e) {
            throw FormatError(path.filename().string() + ":" + std::to_string(lineno) +
                              ": " + e.what());
        }
    }
}

inline std::vector<json> read_all(const std::filesystem::path& path) {
    std::vector<json> out;
    for_each(path, [&](const json& j, std::size_t) { out.push_back(j); });
    return out;
}

// One compact object per line, LF terminated.
inline std::string dump_line(const json& j) {
    return j.dump(-1, ' ', false, json::error_handler_t::strict) + "\n";
}

inline void write_all(const std::filesystem::path& path, const std::vector<json>& rows) {
    if (path.has_parent_path())
        std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw Error("cannot write " + path.string());
    for (const auto& r : rows)
        out << dump_line(r);
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path())
        std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw Error("cannot write " + path.string());
    out << text;
}

inline std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

} // namespace xlcode::jsonl
