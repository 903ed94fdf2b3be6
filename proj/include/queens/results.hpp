#pragma once

#include <Eigen/Dense>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <system_error>
#include <vector>

#include <json.hpp>

#include "queens/errors.hpp"
#include "queens/model.hpp"

namespace queens {

using ordered_json = nlohmann::ordered_json;

inline constexpr int results_schema_version = 1;
inline constexpr const char* library_version = "0.1.0";

namespace detail {

/// Shortest round-trip decimal rendering (also used for CSV cells, so
/// repeated runs produce byte-identical files).
inline std::string format_double(double v) {
    char buf[40];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    (void)ec;
    return std::string(buf, ptr);
}

/// FNV-1a 64-bit hash, hex-encoded.
inline std::string fnv1a64_hex(std::string_view data) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const char c : data) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace detail

/// JSON value for a double; non-finite values become the strings
/// "NaN", "Infinity", "-Infinity" (plain JSON has no spelling for them).
inline ordered_json json_number(double v) {
    if (std::isnan(v)) return "NaN";
    if (std::isinf(v)) return v > 0 ? "Infinity" : "-Infinity";
    return v;
}

/// Inverse of json_number.
inline double number_from_json(const ordered_json& j) {
    if (j.is_number()) return j.get<double>();
    if (j.is_string()) {
        const std::string s = j.get<std::string>();
        if (s == "NaN") return std::numeric_limits<double>::quiet_NaN();
        if (s == "Infinity") return std::numeric_limits<double>::infinity();
        if (s == "-Infinity") return -std::numeric_limits<double>::infinity();
    }
    throw Error("expected a number, got " + j.dump());
}

inline ordered_json json_vector(const Eigen::VectorXd& v) {
    ordered_json arr = ordered_json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(json_number(v[i]));
    return arr;
}

inline ordered_json json_matrix(const Eigen::MatrixXd& m) {
    ordered_json rows = ordered_json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        ordered_json row = ordered_json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(json_number(m(i, j)));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline Eigen::VectorXd vector_from_json(const ordered_json& arr) {
    if (!arr.is_array()) throw Error("expected an array, got " + arr.dump());
    Eigen::VectorXd v(static_cast<Eigen::Index>(arr.size()));
    Eigen::Index i = 0;
    for (const auto& e : arr) v[i++] = number_from_json(e);
    return v;
}

inline Eigen::MatrixXd matrix_from_json(const ordered_json& arr) {
    if (!arr.is_array()) throw Error("expected an array of rows, got " + arr.dump());
    const auto n = static_cast<Eigen::Index>(arr.size());
    if (n == 0) return Eigen::MatrixXd(0, 0);
    const auto cols = static_cast<Eigen::Index>(arr.front().size());
    Eigen::MatrixXd m(n, cols);
    Eigen::Index i = 0;
    for (const auto& row : arr) {
        if (static_cast<Eigen::Index>(row.size()) != cols)
            throw Error("ragged rows in matrix data");
        Eigen::Index j = 0;
        for (const auto& e : row) m(i, j++) = number_from_json(e);
        ++i;
    }
    return m;
}

/// Writes text to `path` atomically: a temp file in the same directory
/// is renamed over the target once fully written.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& text) {
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot write file: " + tmp.string());
        out << text;
        if (!out) throw Error("write failed: " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw Error("cannot rename " + tmp.string() + " to " + path.string() + ": " +
                        ec.message());
}

/// Writes a CSV file with the given header and rows; an optional text
/// column (e.g. per-row status) is appended after the numeric columns.
inline void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
                      const Eigen::MatrixXd& values,
                      const std::string& text_column_name = {},
                      const std::vector<std::string>& text_column = {}) {
    const bool with_text = !text_column_name.empty();
    if (static_cast<Eigen::Index>(header.size()) != values.cols())
        throw Error("CSV header does not match column count");
    if (with_text && static_cast<Eigen::Index>(text_column.size()) != values.rows())
        throw Error("CSV text column does not match row count");
    std::string text;
    for (std::size_t c = 0; c < header.size(); ++c) {
        if (c > 0) text += ',';
        text += header[c];
    }
    if (with_text) {
        if (!header.empty()) text += ',';
        text += text_column_name;
    }
    text += '\n';
    for (Eigen::Index r = 0; r < values.rows(); ++r) {
        for (Eigen::Index c = 0; c < values.cols(); ++c) {
            if (c > 0) text += ',';
            text += detail::format_double(values(r, c));
        }
        if (with_text) {
            if (values.cols() > 0) text += ',';
            text += text_column[static_cast<std::size_t>(r)];
        }
        text += '\n';
    }
    write_file_atomic(path, text);
}

/// Computes the artifact checksum: FNV-1a-64 over the serialized
/// document without its checksum entry.
inline std::string artifact_checksum(ordered_json doc) {
    doc.erase("checksum");
    return "fnv1a64:" + detail::fnv1a64_hex(doc.dump());
}

/// Seals and writes results.json atomically; returns the file path.
inline std::filesystem::path write_results(ordered_json doc, const std::filesystem::path& dir) {
    doc.erase("checksum");
    doc["checksum"] = artifact_checksum(doc);
    const std::filesystem::path path = dir / "results.json";
    write_file_atomic(path, doc.dump(2) + "\n");
    return path;
}

/// Reads results.json back, verifying schema version and checksum.
inline ordered_json read_results(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open results file: " + path.string());
    ordered_json doc;
    try {
        doc = ordered_json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw Error("checksum mismatch: results file is not readable JSON (" +
                    std::string(e.what()) + ")");
    }
    if (!doc.contains("schema_version") || !doc["schema_version"].is_number_integer())
        throw Error("results file has no schema version: " + path.string());
    const int version = doc["schema_version"].get<int>();
    if (version != results_schema_version)
        throw Error("unsupported schema version " + std::to_string(version) + " (supported: " +
                    std::to_string(results_schema_version) + ")");
    if (!doc.contains("checksum") || !doc["checksum"].is_string())
        throw Error("results file has no checksum: " + path.string());
    const std::string stored = doc["checksum"].get<std::string>();
    const std::string computed = artifact_checksum(doc);
    if (stored != computed)
        throw Error("checksum mismatch: stored " + stored + ", computed " + computed);
    return doc;
}

/// Status strings aligned with a batch result, for persistence.
inline std::vector<std::string> status_strings(const BatchResult& result) {
    std::vector<std::string> out;
    out.reserve(result.statuses.size());
    for (const auto s : result.statuses) out.emplace_back(to_string(s));
    return out;
}

}  // namespace queens
