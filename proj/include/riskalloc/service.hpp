#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <utility>
#include <vector>

#include "riskalloc/common.hpp"

namespace riskalloc {

enum class ServiceFamily { InterferenceRate, AwgnRate, OutageIndicator, Table, Callback };

inline const char* service_family_name(ServiceFamily f) {
    switch (f) {
        case ServiceFamily::InterferenceRate: return "interference_rate";
        case ServiceFamily::AwgnRate: return "awgn_rate";
        case ServiceFamily::OutageIndicator: return "outage_indicator";
        case ServiceFamily::Table: return "table";
        case ServiceFamily::Callback: return "callback";
    }
    return "?";
}

/**
 * @brief Vector service map f(p, h) in R^dim.
 *
 * The analytic families are total on R^{dim} x R^{dim}. Table services carry
 * their own scenario points and candidate actions and snap the arguments to
 * the nearest stored entry (lexicographic tie-break), which keeps them total
 * and well defined on refined scenario sets, whose points are bitwise copies.
 * Callbacks must be pure: instances cache service values per (atom, action).
 */
class ServiceSpec {
public:
    using Fn = std::function<void(std::span<const double> p, std::span<const double> h,
                                  std::span<double> out)>;

    /// f_i = log2(1 + h_i p_i / (noise + coupling * sum_{j != i} h_j p_j))
    static ServiceSpec interference_rate(std::size_t users, double noise, double coupling) {
        if (users == 0)
            throw SchemaError("interference_rate: needs at least one user");
        if (!(noise > 0.0) || coupling < 0.0)
            throw SchemaError("interference_rate: noise must be positive, coupling nonnegative");
        ServiceSpec s(ServiceFamily::InterferenceRate, users);
        s.noise_ = noise;
        s.coupling_ = coupling;
        return s;
    }

    /// f_i = log2(1 + h_i p_i)
    static ServiceSpec awgn_rate(std::size_t users) {
        if (users == 0)
            throw SchemaError("awgn_rate: needs at least one user");
        return ServiceSpec(ServiceFamily::AwgnRate, users);
    }

    /// f_i = reward_i * [ log2(1 + h_i p_i) >= threshold_i ]
    static ServiceSpec outage_indicator(std::vector<double> threshold, std::vector<double> reward) {
        if (threshold.size() != reward.size() || threshold.empty())
            throw SchemaError("outage_indicator: threshold and reward lengths must match");
        ServiceSpec s(ServiceFamily::OutageIndicator, threshold.size());
        s.threshold_ = std::move(threshold);
        s.reward_ = std::move(reward);
        return s;
    }

    /// Explicit value table over stored scenario points and candidate actions:
    /// values[i][k][c] for component i, atom k, candidate c.
    static ServiceSpec table(std::size_t dim, std::vector<std::vector<double>> points,
                             std::vector<std::vector<double>> candidates,
                             std::vector<std::vector<std::vector<double>>> values) {
        if (dim == 0 || values.size() != dim)
            throw SchemaError("table service: values must have one block per component");
        if (points.empty() || candidates.empty())
            throw SchemaError("table service: needs stored points and candidates");
        for (const auto& block : values) {
            if (block.size() != points.size())
                throw SchemaError("table service: value block rows must match points");
            for (const auto& row : block)
                if (row.size() != candidates.size())
                    throw SchemaError("table service: value row length must match candidates");
        }
        ServiceSpec s(ServiceFamily::Table, dim);
        s.tbl_points_ = std::move(points);
        s.tbl_candidates_ = std::move(candidates);
        s.tbl_values_ = std::move(values);
        return s;
    }

    static ServiceSpec callback(std::size_t dim, Fn fn) {
        if (dim == 0 || !fn)
            throw SchemaError("callback service: needs a dimension and an evaluator");
        ServiceSpec s(ServiceFamily::Callback, dim);
        s.fn_ = std::move(fn);
        return s;
    }

    ServiceFamily family() const { return family_; }
    std::size_t dim() const { return dim_; }
    double noise() const { return noise_; }
    double coupling() const { return coupling_; }
    const std::vector<double>& threshold() const { return threshold_; }
    const std::vector<double>& reward() const { return reward_; }
    const std::vector<std::vector<double>>& table_points() const { return tbl_points_; }
    const std::vector<std::vector<double>>& table_candidates() const { return tbl_candidates_; }
    const std::vector<std::vector<std::vector<double>>>& table_values() const { return tbl_values_; }

    void evaluate(std::span<const double> p, std::span<const double> h,
                  std::span<double> out) const {
        if (out.size() != dim_)
            throw LengthMismatch("service: output span has wrong dimension");
        switch (family_) {
            case ServiceFamily::InterferenceRate: {
                if (p.size() != dim_ || h.size() != dim_)
                    throw LengthMismatch("interference_rate: p and h must have dim entries");
                double total = 0.0;
                for (std::size_t j = 0; j < dim_; ++j)
                    total += h[j] * p[j];
                for (std::size_t i = 0; i < dim_; ++i) {
                    double own = h[i] * p[i];
                    out[i] = std::log2(1.0 + own / (noise_ + coupling_ * (total - own)));
                }
                return;
            }
            case ServiceFamily::AwgnRate: {
                if (p.size() != dim_ || h.size() != dim_)
                    throw LengthMismatch("awgn_rate: p and h must have dim entries");
                for (std::size_t i = 0; i < dim_; ++i)
                    out[i] = std::log2(1.0 + h[i] * p[i]);
                return;
            }
            case ServiceFamily::OutageIndicator: {
                if (p.size() != dim_ || h.size() != dim_)
                    throw LengthMismatch("outage_indicator: p and h must have dim entries");
                for (std::size_t i = 0; i < dim_; ++i) {
                    double rate = std::log2(1.0 + h[i] * p[i]);
                    out[i] = rate >= threshold_[i] ? reward_[i] : 0.0;
                }
                return;
            }
            case ServiceFamily::Table: {
                std::size_t k = nearest(tbl_points_, h);
                std::size_t c = nearest(tbl_candidates_, p);
                for (std::size_t i = 0; i < dim_; ++i)
                    out[i] = tbl_values_[i][k][c];
                return;
            }
            case ServiceFamily::Callback:
                fn_(p, h, out);
                return;
        }
        throw DomainError("service: unknown family");
    }

private:
    ServiceSpec(ServiceFamily f, std::size_t dim) : family_(f), dim_(dim) {}

    static std::size_t nearest(const std::vector<std::vector<double>>& rows,
                               std::span<const double> x) {
        std::size_t best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (std::size_t r = 0; r < rows.size(); ++r) {
            double d = 0.0;
            std::size_t n = std::min(rows[r].size(), x.size());
            for (std::size_t j = 0; j < n; ++j) {
                double diff = rows[r][j] - x[j];
                d += diff * diff;
            }
            if (d < best_d) {
                best_d = d;
                best = r;
            }
        }
        return best;
    }

    ServiceFamily family_;
    std::size_t dim_;
    double noise_ = 1.0;
    double coupling_ = 1.0;
    std::vector<double> threshold_;
    std::vector<double> reward_;
    std::vector<std::vector<double>> tbl_points_;
    std::vector<std::vector<double>> tbl_candidates_;
    std::vector<std::vector<std::vector<double>>> tbl_values_;
    Fn fn_;
};

}  // namespace riskalloc
