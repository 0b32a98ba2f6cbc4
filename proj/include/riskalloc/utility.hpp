#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "riskalloc/common.hpp"

namespace riskalloc {

enum class UtilityKind { WeightedSum, SumLog, Min, AffineFloor, Callback };

inline const char* utility_kind_name(UtilityKind k) {
    switch (k) {
        case UtilityKind::WeightedSum: return "weighted_sum";
        case UtilityKind::SumLog: return "sum_log";
        case UtilityKind::Min: return "min";
        case UtilityKind::AffineFloor: return "affine_floor";
        case UtilityKind::Callback: return "callback";
    }
    return "?";
}

/**
 * @brief Member of the closed concave family over x.
 *
 * WeightedSum, SumLog, and Min contribute one row; AffineFloor(x_min)
 * contributes one affine row x_i - x_min_i per component, i.e. the vector
 * constraint x >= x_min. Concavity is what the closed family guarantees;
 * Callback entries exist only so that instance construction can reject them
 * (NonconcaveUtility), since an arbitrary evaluator proves nothing.
 */
class Utility {
public:
    static Utility weighted_sum(std::vector<double> weights) {
        if (weights.empty())
            throw SchemaError("weighted_sum: needs at least one weight");
        Utility u(UtilityKind::WeightedSum, weights.size());
        u.coef_ = std::move(weights);
        return u;
    }

    static Utility sum_log(std::size_t dim, double offset) {
        if (dim == 0 || !(offset > 0.0))
            throw SchemaError("sum_log: needs positive dimension and offset");
        Utility u(UtilityKind::SumLog, dim);
        u.offset_ = offset;
        return u;
    }

    static Utility min(std::size_t dim) {
        if (dim == 0)
            throw SchemaError("min: needs positive dimension");
        return Utility(UtilityKind::Min, dim);
    }

    static Utility affine_floor(std::vector<double> x_min) {
        if (x_min.empty())
            throw SchemaError("affine_floor: needs at least one floor entry");
        Utility u(UtilityKind::AffineFloor, x_min.size());
        u.coef_ = std::move(x_min);
        return u;
    }

    static Utility callback(std::size_t dim, std::function<double(std::span<const double>)> fn) {
        Utility u(UtilityKind::Callback, dim);
        u.fn_ = std::move(fn);
        return u;
    }

    UtilityKind kind() const { return kind_; }
    std::size_t dim() const { return dim_; }
    double offset() const { return offset_; }
    const std::vector<double>& coefficients() const { return coef_; }

    std::size_t rows() const { return kind_ == UtilityKind::AffineFloor ? dim_ : 1; }

    /// Separable rows make the dual x-step solvable per coordinate.
    bool separable() const {
        return kind_ == UtilityKind::WeightedSum || kind_ == UtilityKind::SumLog ||
               kind_ == UtilityKind::AffineFloor;
    }

    void value(std::span<const double> x, std::span<double> out) const {
        if (x.size() != dim_ || out.size() != rows())
            throw LengthMismatch("utility: argument dimension mismatch");
        switch (kind_) {
            case UtilityKind::WeightedSum: {
                StableSum s;
                for (std::size_t i = 0; i < dim_; ++i)
                    s.add_product(coef_[i], x[i]);
                out[0] = s.value();
                return;
            }
            case UtilityKind::SumLog: {
                StableSum s;
                for (std::size_t i = 0; i < dim_; ++i) {
                    double arg = offset_ + x[i];
                    if (!(arg > 0.0))
                        throw DomainError("sum_log: offset + x must stay positive on X");
                    s.add(std::log(arg));
                }
                out[0] = s.value();
                return;
            }
            case UtilityKind::Min: {
                double m = x[0];
                for (std::size_t i = 1; i < dim_; ++i)
                    m = std::min(m, x[i]);
                out[0] = m;
                return;
            }
            case UtilityKind::AffineFloor:
                for (std::size_t i = 0; i < dim_; ++i)
                    out[i] = x[i] - coef_[i];
                return;
            case UtilityKind::Callback:
                out[0] = fn_ ? fn_(x) : 0.0;
                return;
        }
        throw DomainError("utility: unknown kind");
    }

    double scalar(std::span<const double> x) const {
        double out;
        value(x, {&out, 1});
        return out;
    }

    /// Supergradient of one row. Min returns the indicator of its first
    /// attaining coordinate, a valid choice for projected ascent.
    void supergradient(std::span<const double> x, std::size_t row, std::span<double> out) const {
        if (x.size() != dim_ || out.size() != dim_ || row >= rows())
            throw LengthMismatch("utility: supergradient dimension mismatch");
        std::fill(out.begin(), out.end(), 0.0);
        switch (kind_) {
            case UtilityKind::WeightedSum:
                std::copy(coef_.begin(), coef_.end(), out.begin());
                return;
            case UtilityKind::SumLog:
                for (std::size_t i = 0; i < dim_; ++i)
                    out[i] = 1.0 / (offset_ + x[i]);
                return;
            case UtilityKind::Min: {
                std::size_t arg = 0;
                for (std::size_t i = 1; i < dim_; ++i)
                    if (x[i] < x[arg])
                        arg = i;
                out[arg] = 1.0;
                return;
            }
            case UtilityKind::AffineFloor:
                out[row] = 1.0;
                return;
            case UtilityKind::Callback:
                throw NonconcaveUtility("callback utility has no certified supergradient");
        }
    }

private:
    Utility(UtilityKind k, std::size_t dim) : kind_(k), dim_(dim) {}

    UtilityKind kind_;
    std::size_t dim_;
    double offset_ = 1.0;
    std::vector<double> coef_;
    std::function<double(std::span<const double>)> fn_;
};

}  // namespace riskalloc
