#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "bmf/error.hpp"

namespace bmf {

using Mask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

/// Shape and coverage summary of a loaded dataset.
struct DatasetMeta {
    std::string name;
    int rows = 0;
    int columns = 0;
    double fraction_observed = 0.0;
};

/// A partially observed I x J matrix R with observation set Omega.
///
/// Immutable once built. Besides the dense value/mask pair it keeps the
/// observed cells in row-major order plus per-row and per-column adjacency
/// lists, which is what every Gibbs conditional iterates over.
class ObservedMatrix {
  public:
    struct Cell {
        int row;
        int col;
        double value;
    };

    /// One observation seen from a row (other = column) or a column
    /// (other = row). `cell` indexes `cells()`.
    struct LineEntry {
        int other;
        double value;
        int cell;
    };

    ObservedMatrix() = default;

    ObservedMatrix(Eigen::MatrixXd values, Mask mask) : values_(std::move(values)), mask_(std::move(mask)) {
        if (values_.rows() != mask_.rows() || values_.cols() != mask_.cols())
            throw DataError("value matrix and mask have different shapes");
        if (values_.rows() == 0 || values_.cols() == 0)
            throw DataError("empty matrix");
        build_index();
        if (cells_.empty())
            throw DataError("matrix has no observed entries");
    }

    int rows() const noexcept { return static_cast<int>(values_.rows()); }
    int cols() const noexcept { return static_cast<int>(values_.cols()); }
    int n_observed() const noexcept { return static_cast<int>(cells_.size()); }
    double fraction_observed() const noexcept {
        return static_cast<double>(cells_.size()) / (static_cast<double>(rows()) * cols());
    }

    bool observed(int i, int j) const { return mask_(i, j); }
    /// Stored value; meaningful only where `observed(i, j)`.
    double value(int i, int j) const { return values_(i, j); }

    const Eigen::MatrixXd& values() const noexcept { return values_; }
    const Mask& mask() const noexcept { return mask_; }
    const std::vector<Cell>& cells() const noexcept { return cells_; }
    const std::vector<LineEntry>& row_entries(int i) const { return by_row_[static_cast<std::size_t>(i)]; }
    const std::vector<LineEntry>& col_entries(int j) const { return by_col_[static_cast<std::size_t>(j)]; }

    /// Adjacency lists for one side: rows when `rows_side`, else columns.
    const std::vector<std::vector<LineEntry>>& lines(bool rows_side) const noexcept {
        return rows_side ? by_row_ : by_col_;
    }

    /// True when every row and column has at least one observation.
    bool covers_all_lines() const {
        for (const auto& r : by_row_)
            if (r.empty())
                return false;
        for (const auto& c : by_col_)
            if (c.empty())
                return false;
        return true;
    }

    /// Same shape, observed only at the given cells (indices into `cells()`).
    ObservedMatrix restricted_to(const std::vector<int>& cell_ids) const {
        Mask m = Mask::Constant(values_.rows(), values_.cols(), false);
        for (int id : cell_ids) {
            const Cell& c = cells_.at(static_cast<std::size_t>(id));
            m(c.row, c.col) = true;
        }
        return ObservedMatrix(values_, std::move(m));
    }

    /// Same mask, new values at the observed cells.
    ObservedMatrix with_values(Eigen::MatrixXd values) const {
        return ObservedMatrix(std::move(values), mask_);
    }

    double observed_mean() const {
        double s = 0.0;
        for (const auto& c : cells_)
            s += c.value;
        return s / static_cast<double>(cells_.size());
    }

    /// Population variance of the observed values.
    double observed_variance() const {
        const double mean = observed_mean();
        double s = 0.0;
        for (const auto& c : cells_)
            s += (c.value - mean) * (c.value - mean);
        return s / static_cast<double>(cells_.size());
    }

    DatasetMeta meta(std::string name = {}) const {
        return DatasetMeta{std::move(name), rows(), cols(), fraction_observed()};
    }

  private:
    void build_index() {
        by_row_.assign(static_cast<std::size_t>(values_.rows()), {});
        by_col_.assign(static_cast<std::size_t>(values_.cols()), {});
        cells_.clear();
        for (int i = 0; i < values_.rows(); ++i) {
            for (int j = 0; j < values_.cols(); ++j) {
                if (!mask_(i, j))
                    continue;
                const double v = values_(i, j);
                if (!std::isfinite(v))
                    throw DataError("observed value at (" + std::to_string(i) + ", " + std::to_string(j) +
                                    ") is not finite");
                const int id = static_cast<int>(cells_.size());
                cells_.push_back({i, j, v});
                by_row_[static_cast<std::size_t>(i)].push_back({j, v, id});
                by_col_[static_cast<std::size_t>(j)].push_back({i, v, id});
            }
        }
    }

    Eigen::MatrixXd values_;
    Mask mask_;
    std::vector<Cell> cells_;
    std::vector<std::vector<LineEntry>> by_row_;
    std::vector<std::vector<LineEntry>> by_col_;
};

} // namespace bmf
