#pragma once

// Minimal CSV writing: comma separated, '.' decimal point, '#' metadata lines.
// Doubles are written in shortest round-trip form so files reproduce exactly.

#include <charconv>
#include <cmath>
#include <fstream>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "mmmc/error.hpp"

namespace mmmc {

[[nodiscard]] inline std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    if (res.ec != std::errc{}) throw Error("format_double: conversion failed");
    return {buf, res.ptr};
}

[[nodiscard]] inline double parse_double(std::string_view s) {
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
        throw InvalidArgument("not a number: '" + std::string(s) + "'");
    return v;
}

class CsvWriter {
public:
    explicit CsvWriter(std::ostream& out) : out_(&out) {}

    void comment(std::string_view key, std::string_view value) { *out_ << "# " << key << '=' << value << '\n'; }

    void header(std::span<const std::string> names) { row_strings(names); }

    void row_strings(std::span<const std::string> fields) {
        for (std::size_t i = 0; i < fields.size(); ++i) {
            if (i) *out_ << ',';
            *out_ << fields[i];
        }
        *out_ << '\n';
    }

    void row(std::span<const double> values) {
        for (std::size_t i = 0; i < values.size(); ++i) {
            if (i) *out_ << ',';
            *out_ << format_double(values[i]);
        }
        *out_ << '\n';
    }

private:
    std::ostream* out_;
};

/// Opens `path` for writing or throws.
[[nodiscard]] inline std::ofstream open_output(const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("cannot open output file: " + path);
    return f;
}

/// Reads one number per line (blank lines and '#' lines skipped; first
/// comma-separated field used).
[[nodiscard]] inline std::vector<double> read_sample_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw Error("cannot open sample file: " + path);
    std::vector<double> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#') continue;
        auto last = line.find_first_of(",\r", first);
        std::string_view field(line.data() + first, (last == std::string::npos ? line.size() : last) - first);
        while (!field.empty() && (field.back() == ' ' || field.back() == '\t')) field.remove_suffix(1);
        try {
            out.push_back(parse_double(field));
        } catch (const InvalidArgument&) {
            if (out.empty() && lineno == 1) continue; // header row
            throw InvalidArgument(path + ":" + std::to_string(lineno) + ": not a number");
        }
    }
    return out;
}

} // namespace mmmc
