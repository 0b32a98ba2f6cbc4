#pragma once

#include <span>
#include <vector>

#include "riskalloc/common.hpp"
#include "riskalloc/scenario.hpp"

namespace riskalloc {

/// Measurable allocation sampled on a scenario set: one action row per atom.
struct Policy {
    std::size_t dim = 0;
    std::vector<double> values;  // row-major, one row of `dim` entries per atom

    std::size_t rows() const { return dim == 0 ? 0 : values.size() / dim; }
    std::span<const double> row(std::size_t k) const { return {values.data() + k * dim, dim}; }
    std::span<double> row(std::size_t k) { return {values.data() + k * dim, dim}; }

    static Policy constant(std::size_t n_rows, std::vector<double> action) {
        Policy p;
        p.dim = action.size();
        p.values.reserve(n_rows * p.dim);
        for (std::size_t k = 0; k < n_rows; ++k)
            p.values.insert(p.values.end(), action.begin(), action.end());
        return p;
    }

    bool operator==(const Policy&) const = default;
};

/// Each atom row repeated m times, matching refine() atom order.
inline Policy duplicate_rows(const Policy& p, std::size_t m) {
    Policy out;
    out.dim = p.dim;
    out.values.reserve(p.values.size() * m);
    for (std::size_t k = 0; k < p.rows(); ++k) {
        auto r = p.row(k);
        for (std::size_t j = 0; j < m; ++j)
            out.values.insert(out.values.end(), r.begin(), r.end());
    }
    return out;
}

/// Rows from `a` on the given sorted index set, rows from `b` elsewhere.
/// Decomposability of the admissible classes makes any splice admissible.
inline Policy splice(const Policy& a, const Policy& b, const std::vector<std::size_t>& take_a) {
    if (a.dim != b.dim || a.values.size() != b.values.size())
        throw LengthMismatch("splice: policies live on different sets");
    Policy out = b;
    for (std::size_t k : take_a) {
        auto src = a.row(k);
        auto dst = out.row(k);
        std::copy(src.begin(), src.end(), dst.begin());
    }
    return out;
}

enum class PolicyClassKind { UniformBox, RectangularBox, Budget };

inline const char* policy_class_name(PolicyClassKind k) {
    switch (k) {
        case PolicyClassKind::UniformBox: return "uniform_box";
        case PolicyClassKind::RectangularBox: return "rectangular_box";
        case PolicyClassKind::Budget: return "budget";
    }
    return "?";
}

/**
 * @brief Admissible per-scenario action sets with a finite search grid.
 *
 * Boxes are [0, U] per dimension; Budget additionally caps the coordinate sum
 * by total(h) = base + slope * mean(h). Admissibility depends on h only, so
 * policies may be spliced atom by atom. The grid (resolution >= 2 per
 * dimension, lexicographic candidate order, last dimension fastest) is the
 * search device for the inner maximization; admissibility itself is the
 * continuous class membership, so off-grid rows such as Slater witnesses are
 * legitimate policies.
 */
class PolicyClass {
public:
    static PolicyClass uniform_box(std::size_t dim, double upper, std::size_t grid) {
        return PolicyClass(PolicyClassKind::UniformBox, dim,
                           std::vector<double>(dim, upper), grid, 0.0, 0.0);
    }

    static PolicyClass rectangular_box(std::vector<double> upper, std::size_t grid) {
        std::size_t dim = upper.size();
        return PolicyClass(PolicyClassKind::RectangularBox, dim, std::move(upper), grid, 0.0, 0.0);
    }

    static PolicyClass budget(std::size_t dim, double upper, std::size_t grid, double total_base,
                              double total_slope = 0.0) {
        PolicyClass c(PolicyClassKind::Budget, dim, std::vector<double>(dim, upper), grid,
                      total_base, total_slope);
        return c;
    }

    PolicyClassKind kind() const { return kind_; }
    std::size_t dim() const { return dim_; }
    std::size_t grid() const { return grid_; }
    const std::vector<double>& upper() const { return upper_; }
    double total_base() const { return total_base_; }
    double total_slope() const { return total_slope_; }

    double budget_total(std::span<const double> h) const {
        if (total_slope_ == 0.0)
            return total_base_;
        double mean = 0.0;
        for (double v : h)
            mean += v;
        return total_base_ + total_slope_ * (mean / static_cast<double>(h.size()));
    }

    bool admissible_row(std::span<const double> p, std::span<const double> h,
                        double tol = 1e-9) const {
        if (p.size() != dim_)
            return false;
        for (std::size_t d = 0; d < dim_; ++d)
            if (p[d] < -tol || p[d] > upper_[d] + tol)
                return false;
        if (kind_ == PolicyClassKind::Budget) {
            double total = 0.0;
            for (double v : p)
                total += v;
            if (total > budget_total(h) + tol)
                return false;
        }
        return true;
    }

    /// Grid candidates admissible at channel state h, in lexicographic order.
    std::vector<std::vector<double>> candidates(std::span<const double> h) const {
        std::vector<std::vector<double>> out;
        std::vector<std::size_t> idx(dim_, 0);
        std::vector<double> action(dim_);
        while (true) {
            for (std::size_t d = 0; d < dim_; ++d) {
                std::size_t j = idx[d];
                action[d] = (j + 1 == grid_)
                                ? upper_[d]
                                : upper_[d] * static_cast<double>(j) / static_cast<double>(grid_ - 1);
            }
            if (admissible_row(action, h, 1e-12))
                out.push_back(action);
            // odometer, last dimension fastest
            std::size_t d = dim_;
            while (d > 0) {
                --d;
                if (++idx[d] < grid_)
                    break;
                idx[d] = 0;
                if (d == 0)
                    return out;
            }
        }
    }

private:
    PolicyClass(PolicyClassKind k, std::size_t dim, std::vector<double> upper, std::size_t grid,
                double total_base, double total_slope)
        : kind_(k), dim_(dim), upper_(std::move(upper)), grid_(grid),
          total_base_(total_base), total_slope_(total_slope) {
        if (dim_ == 0)
            throw SchemaError("policy class: dimension must be positive");
        if (grid_ < 2)
            throw SchemaError("policy class: grid resolution must be at least 2");
        for (double u : upper_)
            if (!(u > 0.0) || !std::isfinite(u))
                throw SchemaError("policy class: upper bounds must be positive and finite");
        if (kind_ == PolicyClassKind::Budget && !(total_base_ > 0.0))
            throw SchemaError("policy class: budget total must be positive");
    }

    PolicyClassKind kind_;
    std::size_t dim_;
    std::vector<double> upper_;
    std::size_t grid_;
    double total_base_;
    double total_slope_;
};

}  // namespace riskalloc
