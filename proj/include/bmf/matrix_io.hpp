#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "bmf/error.hpp"
#include "bmf/observed_matrix.hpp"

namespace bmf {

struct LoadOptions {
    /// Rows/columns with fewer observations are dropped, repeatedly, until
    /// every remaining line has at least this many.
    int min_observed = 3;
};

struct LoadedMatrix {
    ObservedMatrix matrix;
    DatasetMeta meta;
    std::vector<int> kept_rows; ///< original row index of each output row
    std::vector<int> kept_cols;
};

/// Shortest round-trippable text for a double.
inline std::string format_double(double x) {
    if (std::isnan(x))
        return "nan";
    if (std::isinf(x))
        return x > 0 ? "inf" : "-inf";
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, res.ptr);
}

namespace detail {

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front())))
        s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back())))
        s.remove_suffix(1);
    return s;
}

inline bool is_missing_token(std::string_view s) {
    return s.empty() || (s.size() == 2 && std::toupper(static_cast<unsigned char>(s[0])) == 'N' &&
                         std::toupper(static_cast<unsigned char>(s[1])) == 'A');
}

/// Drop lines with fewer than `min_obs` observations until stable.
inline void filter_sparse_lines(const Eigen::MatrixXd& values, const Mask& mask, int min_obs,
                                std::vector<int>& rows, std::vector<int>& cols) {
    rows.resize(static_cast<std::size_t>(values.rows()));
    cols.resize(static_cast<std::size_t>(values.cols()));
    for (std::size_t i = 0; i < rows.size(); ++i)
        rows[i] = static_cast<int>(i);
    for (std::size_t j = 0; j < cols.size(); ++j)
        cols[j] = static_cast<int>(j);

    bool changed = true;
    while (changed) {
        changed = false;
        std::vector<int> next_rows;
        for (int i : rows) {
            int n = 0;
            for (int j : cols)
                n += mask(i, j) ? 1 : 0;
            if (n >= min_obs && n > 0)
                next_rows.push_back(i);
        }
        changed |= next_rows.size() != rows.size();
        rows = std::move(next_rows);

        std::vector<int> next_cols;
        for (int j : cols) {
            int n = 0;
            for (int i : rows)
                n += mask(i, j) ? 1 : 0;
            if (n >= min_obs && n > 0)
                next_cols.push_back(j);
        }
        changed |= next_cols.size() != cols.size();
        cols = std::move(next_cols);
    }
}

} // namespace detail

/// Parse the delimited-text matrix format: one matrix row per line, comma
/// or tab separated (auto-detected from the first data line), `NA` (any
/// case) or an empty field for a missing value, `#` lines ignored.
inline LoadedMatrix parse_matrix(std::istream& in, const LoadOptions& opts = {}, std::string name = {}) {
    std::vector<std::vector<double>> values;
    std::vector<std::vector<bool>> observed;
    char delim = 0;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        const auto t = detail::trim(line);
        if (t.empty() || t.front() == '#')
            continue;
        if (delim == 0)
            delim = line.find('\t') != std::string::npos ? '\t' : ',';

        std::vector<double> row;
        std::vector<bool> obs;
        std::string_view rest(line);
        while (true) {
            const auto pos = rest.find(delim);
            const auto field = detail::trim(rest.substr(0, pos));
            if (detail::is_missing_token(field)) {
                row.push_back(0.0);
                obs.push_back(false);
            } else {
                double v = 0.0;
                const auto res = std::from_chars(field.data(), field.data() + field.size(), v);
                if (res.ec != std::errc{} || res.ptr != field.data() + field.size() || !std::isfinite(v))
                    throw DataError("parse error at line " + std::to_string(line_no) + ": invalid value '" +
                                    std::string(field) + "'");
                row.push_back(v);
                obs.push_back(true);
            }
            if (pos == std::string_view::npos)
                break;
            rest.remove_prefix(pos + 1);
        }
        if (!values.empty() && row.size() != values.front().size())
            throw DataError("parse error at line " + std::to_string(line_no) + ": expected " +
                            std::to_string(values.front().size()) + " fields, found " +
                            std::to_string(row.size()));
        values.push_back(std::move(row));
        observed.push_back(std::move(obs));
    }
    if (values.empty())
        throw DataError("empty matrix: no data lines");

    const auto n_rows = static_cast<Eigen::Index>(values.size());
    const auto n_cols = static_cast<Eigen::Index>(values.front().size());
    Eigen::MatrixXd full(n_rows, n_cols);
    Mask mask(n_rows, n_cols);
    for (Eigen::Index i = 0; i < n_rows; ++i)
        for (Eigen::Index j = 0; j < n_cols; ++j) {
            full(i, j) = values[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
            mask(i, j) = observed[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
        }

    LoadedMatrix out;
    detail::filter_sparse_lines(full, mask, std::max(1, opts.min_observed), out.kept_rows, out.kept_cols);
    if (out.kept_rows.empty() || out.kept_cols.empty())
        throw DataError("empty matrix after dropping rows/columns with fewer than " +
                        std::to_string(opts.min_observed) + " observations");

    Eigen::MatrixXd kept(static_cast<Eigen::Index>(out.kept_rows.size()),
                         static_cast<Eigen::Index>(out.kept_cols.size()));
    Mask kept_mask(kept.rows(), kept.cols());
    for (Eigen::Index i = 0; i < kept.rows(); ++i)
        for (Eigen::Index j = 0; j < kept.cols(); ++j) {
            const int si = out.kept_rows[static_cast<std::size_t>(i)];
            const int sj = out.kept_cols[static_cast<std::size_t>(j)];
            kept(i, j) = mask(si, sj) ? full(si, sj) : 0.0;
            kept_mask(i, j) = mask(si, sj);
        }
    out.matrix = ObservedMatrix(std::move(kept), std::move(kept_mask));
    out.meta = out.matrix.meta(std::move(name));
    return out;
}

inline LoadedMatrix load_matrix(const std::string& path, const LoadOptions& opts = {}) {
    std::ifstream in(path);
    if (!in)
        throw DataError("cannot open matrix file '" + path + "'");
    return parse_matrix(in, opts, path);
}

/// Write in the format `parse_matrix` reads (comma separated, NA missing,
/// shortest round-trip doubles).
inline void write_matrix(std::ostream& out, const ObservedMatrix& m) {
    for (int i = 0; i < m.rows(); ++i) {
        for (int j = 0; j < m.cols(); ++j) {
            if (j > 0)
                out << ',';
            out << (m.observed(i, j) ? format_double(m.value(i, j)) : std::string("NA"));
        }
        out << '\n';
    }
}

inline void save_matrix(const std::string& path, const ObservedMatrix& m) {
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw DataError("cannot write matrix file '" + path + "'");
    write_matrix(out, m);
}

} // namespace bmf
