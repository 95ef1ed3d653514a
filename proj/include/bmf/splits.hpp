#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "bmf/error.hpp"
#include "bmf/observed_matrix.hpp"
#include "bmf/rng.hpp"

namespace bmf {

/// Assignment of every observed cell (index into ObservedMatrix::cells())
/// to a fold. K-fold plans test on each fold in turn; holdout plans have
/// two folds, fold 0 the test set and fold 1 the training set.
struct SplitPlan {
    std::vector<int> fold_of;
    int n_folds = 0;
    std::uint64_t seed = 0;
    bool holdout = false;

    /// Folds that serve as a test set.
    int n_test_folds() const { return holdout ? 1 : n_folds; }

    std::vector<int> test_cells(int fold) const {
        std::vector<int> out;
        for (std::size_t c = 0; c < fold_of.size(); ++c)
            if (fold_of[c] == fold)
                out.push_back(static_cast<int>(c));
        return out;
    }

    std::vector<int> train_cells(int fold) const {
        std::vector<int> out;
        for (std::size_t c = 0; c < fold_of.size(); ++c)
            if (fold_of[c] != fold)
                out.push_back(static_cast<int>(c));
        return out;
    }

    std::vector<int> fold_sizes() const {
        std::vector<int> s(static_cast<std::size_t>(n_folds), 0);
        for (int f : fold_of)
            ++s[static_cast<std::size_t>(f)];
        return s;
    }
};

namespace detail {

/// Per-line fold counts with the coverage rule: for every test fold f, each
/// row and column keeps at least one cell outside f.
class CoverageBook {
  public:
    CoverageBook(const ObservedMatrix& m, const SplitPlan& plan) : m_(m), plan_(plan) {
        const auto nf = static_cast<std::size_t>(plan.n_folds);
        rows_.assign(static_cast<std::size_t>(m.rows()), std::vector<int>(nf, 0));
        cols_.assign(static_cast<std::size_t>(m.cols()), std::vector<int>(nf, 0));
        for (std::size_t c = 0; c < plan.fold_of.size(); ++c)
            add(static_cast<int>(c), plan.fold_of[c], +1);
    }

    void add(int cell, int fold, int delta) {
        const auto& c = m_.cells()[static_cast<std::size_t>(cell)];
        rows_[static_cast<std::size_t>(c.row)][static_cast<std::size_t>(fold)] += delta;
        cols_[static_cast<std::size_t>(c.col)][static_cast<std::size_t>(fold)] += delta;
    }

    /// Test fold whose removal empties this line, or -1.
    int violation(bool row, int line) const {
        const auto& counts = (row ? rows_ : cols_)[static_cast<std::size_t>(line)];
        const int total = std::accumulate(counts.begin(), counts.end(), 0);
        for (int f = 0; f < plan_.n_test_folds(); ++f)
            if (total > 0 && total - counts[static_cast<std::size_t>(f)] == 0)
                return f;
        return -1;
    }

    bool cell_lines_ok(int cell) const {
        const auto& c = m_.cells()[static_cast<std::size_t>(cell)];
        return violation(true, c.row) < 0 && violation(false, c.col) < 0;
    }

  private:
    const ObservedMatrix& m_;
    const SplitPlan& plan_;
    std::vector<std::vector<int>> rows_;
    std::vector<std::vector<int>> cols_;
};

/// Swap cells between folds until no row/column loses all its training
/// cells. Swaps keep the fold sizes.
inline void repair_coverage(const ObservedMatrix& m, SplitPlan& plan, Rng& rng) {
    CoverageBook book(m, plan);
    const auto n_cells = static_cast<int>(plan.fold_of.size());
    auto& fold = plan.fold_of;

    for (int pass = 0; pass < 4; ++pass) {
        bool clean = true;
        for (int side = 0; side < 2; ++side) {
            const bool row = side == 0;
            const int n_lines = row ? m.rows() : m.cols();
            for (int line = 0; line < n_lines; ++line) {
                int f = book.violation(row, line);
                while (f >= 0) {
                    clean = false;
                    const auto& entries = row ? m.row_entries(line) : m.col_entries(line);
                    // Every cell of the line is in fold f; move one of them out.
                    const int c = entries[static_cast<std::size_t>(rng() % entries.size())].cell;
                    const int start = static_cast<int>(rng() % static_cast<std::uint64_t>(n_cells));
                    bool swapped = false;
                    for (int step = 0; step < n_cells && !swapped; ++step) {
                        const int d = (start + step) % n_cells;
                        const int g = fold[static_cast<std::size_t>(d)];
                        if (g == f)
                            continue;
                        book.add(c, f, -1);
                        book.add(d, g, -1);
                        book.add(c, g, +1);
                        book.add(d, f, +1);
                        if (book.cell_lines_ok(c) && book.cell_lines_ok(d)) {
                            fold[static_cast<std::size_t>(c)] = g;
                            fold[static_cast<std::size_t>(d)] = f;
                            swapped = true;
                        } else {
                            book.add(c, g, -1);
                            book.add(d, f, -1);
                            book.add(c, f, +1);
                            book.add(d, g, +1);
                        }
                    }
                    if (!swapped)
                        throw DataError(std::string("infeasible split: cannot keep ") + (row ? "row " : "column ") +
                                        std::to_string(line) + " observed in every training set");
                    f = book.violation(row, line);
                }
            }
        }
        if (clean)
            return;
    }
    throw DataError("infeasible split: coverage repair did not converge");
}

} // namespace detail

/// Random k-fold partition of the observed cells, fold sizes differing by
/// at most one, repaired so every training set covers every row and column.
inline SplitPlan make_kfold(const ObservedMatrix& m, int n_folds, std::uint64_t seed) {
    if (n_folds < 2)
        throw ConfigError("k-fold split needs n_folds >= 2");
    if (n_folds > m.n_observed())
        throw DataError("more folds than observed cells");
    Rng rng(derive_seed(seed, {11}));
    std::vector<int> perm(static_cast<std::size_t>(m.n_observed()));
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);

    SplitPlan plan;
    plan.n_folds = n_folds;
    plan.seed = seed;
    plan.fold_of.assign(perm.size(), 0);
    for (std::size_t p = 0; p < perm.size(); ++p)
        plan.fold_of[static_cast<std::size_t>(perm[p])] = static_cast<int>(p % static_cast<std::size_t>(n_folds));
    detail::repair_coverage(m, plan, rng);
    return plan;
}

/// Random holdout of round(fraction * |Omega|) cells as fold 0 (test); the
/// rest form fold 1 (train) and cover every row and column.
inline SplitPlan make_holdout(const ObservedMatrix& m, double fraction, std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction < 1.0))
        throw ConfigError("holdout fraction must be in (0, 1)");
    const auto n_test = static_cast<std::size_t>(std::llround(fraction * m.n_observed()));
    if (n_test < 1 || n_test >= static_cast<std::size_t>(m.n_observed()))
        throw DataError("holdout fraction leaves an empty test or training set");
    Rng rng(derive_seed(seed, {12}));
    std::vector<int> perm(static_cast<std::size_t>(m.n_observed()));
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);

    SplitPlan plan;
    plan.n_folds = 2;
    plan.seed = seed;
    plan.holdout = true;
    plan.fold_of.assign(perm.size(), 1);
    for (std::size_t p = 0; p < n_test; ++p)
        plan.fold_of[static_cast<std::size_t>(perm[p])] = 0;
    detail::repair_coverage(m, plan, rng);
    return plan;
}

} // namespace bmf
