#pragma once

#include <cstddef>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "riskalloc/common.hpp"

namespace riskalloc {

/// Finite random variable aligned with a ScenarioSet: one value per atom.
using RandomVariable = std::vector<double>;

/**
 * @brief Finitely supported scenario distribution.
 *
 * Atoms are channel-state vectors h_k in R^dim with strictly positive weights
 * that sum to one. The atom order is part of the value: all reductions and
 * tie-breaks run in ascending atom index, which is what makes results
 * reproducible under any execution schedule.
 */
class ScenarioSet {
public:
    ScenarioSet() = default;

    std::size_t size() const { return weights_.size(); }
    std::size_t dim() const { return dim_; }

    std::span<const double> point(std::size_t k) const {
        return {points_.data() + k * dim_, dim_};
    }
    double weight(std::size_t k) const { return weights_[k]; }
    std::span<const double> weights() const { return weights_; }

    friend ScenarioSet make_scenario_set(const std::vector<std::vector<double>>& points,
                                         const std::vector<double>& weights);
    friend ScenarioSet refine(const ScenarioSet& s, std::size_t m);

private:
    std::vector<double> points_;   // row-major, size() * dim_
    std::vector<double> weights_;  // strictly positive, sums to 1 within 1e-12
    std::size_t dim_ = 0;
};

/// Validates and normalizes: weights strictly positive, all points of equal
/// dimension, total weight within 1e-9 of one (then rescaled exactly once).
inline ScenarioSet make_scenario_set(const std::vector<std::vector<double>>& points,
                                     const std::vector<double>& weights) {
    if (points.size() != weights.size())
        throw LengthMismatch("scenario set: points and weights count differ");
    if (points.empty())
        throw LengthMismatch("scenario set: needs at least one atom");

    ScenarioSet s;
    s.dim_ = points.front().size();
    if (s.dim_ == 0)
        throw LengthMismatch("scenario set: zero-dimensional points");
    s.points_.reserve(points.size() * s.dim_);
    for (const auto& p : points) {
        if (p.size() != s.dim_)
            throw LengthMismatch("scenario set: ragged point dimensions");
        s.points_.insert(s.points_.end(), p.begin(), p.end());
    }

    StableSum total;
    for (double w : weights) {
        if (!(w > 0.0) || !std::isfinite(w))
            throw NonPositiveWeight("scenario set: weights must be strictly positive");
        total.add(w);
    }
    double t = total.value();
    if (std::abs(t - 1.0) > 1e-9)
        throw WeightSumOutOfRange("scenario set: weights sum to " + std::to_string(t));
    s.weights_ = weights;
    if (t != 1.0) {
        for (double& w : s.weights_)
            w /= t;
    }
    return s;
}

/**
 * @brief Split every atom into m copies at the same point.
 *
 * Copy weights are the telescoping differences of the prefixes
 * fl(w*(j+1)/m) (last prefix forced to w). Consecutive prefixes are within a
 * factor two of each other, so each difference is exact (Sterbenz) and the m
 * copies sum back to w exactly; each copy equals w/m to within one ulp. This
 * is what makes refined expectations reproduce the originals bit for bit.
 */
inline ScenarioSet refine(const ScenarioSet& s, std::size_t m) {
    if (m == 0)
        throw DomainError("refine: factor must be positive");
    if (m == 1)
        return s;
    ScenarioSet r;
    r.dim_ = s.dim();
    r.points_.reserve(s.size() * m * s.dim());
    r.weights_.reserve(s.size() * m);
    for (std::size_t k = 0; k < s.size(); ++k) {
        auto pt = s.point(k);
        double w = s.weight(k);
        double prev = 0.0;
        for (std::size_t j = 0; j < m; ++j) {
            double prefix = (j + 1 == m) ? w
                                         : (w * static_cast<double>(j + 1)) / static_cast<double>(m);
            r.points_.insert(r.points_.end(), pt.begin(), pt.end());
            r.weights_.push_back(prefix - prev);
            prev = prefix;
        }
    }
    return r;
}

/// Value list for the refined set: each entry of z repeated m times, matching
/// the atom order produced by refine().
inline RandomVariable duplicate(const RandomVariable& z, std::size_t m) {
    RandomVariable out;
    out.reserve(z.size() * m);
    for (double v : z)
        out.insert(out.end(), m, v);
    return out;
}

inline void require_aligned(const ScenarioSet& s, const RandomVariable& z, const char* what) {
    if (z.size() != s.size())
        throw Misalignment(std::string(what) + ": variable not aligned with scenario set");
}

/// E{Z} as a fixed-order compensated sum over ascending atom index.
inline double expectation(const ScenarioSet& s, const RandomVariable& z) {
    require_aligned(s, z, "expectation");
    return stable_dot(s.weights(), z);
}

/// One row per atom: w then the point coordinates, >= 15 significant digits.
inline void write_scenario_table(std::ostream& os, const ScenarioSet& s) {
    char buf[32];
    for (std::size_t k = 0; k < s.size(); ++k) {
        std::snprintf(buf, sizeof buf, "%.17g", s.weight(k));
        os << buf;
        for (double h : s.point(k)) {
            std::snprintf(buf, sizeof buf, "%.17g", h);
            os << ' ' << buf;
        }
        os << '\n';
    }
}

inline ScenarioSet read_scenario_table(std::istream& is) {
    std::vector<std::vector<double>> points;
    std::vector<double> weights;
    std::string line;
    while (std::getline(is, line)) {
        std::size_t start = line.find_first_not_of(" \t\r");
        if (start == std::string::npos || line[start] == '#')
            continue;
        std::istringstream row(line);
        double w;
        if (!(row >> w))
            throw SchemaError("scenario table: unreadable weight in line '" + line + "'");
        std::vector<double> pt;
        double h;
        while (row >> h)
            pt.push_back(h);
        if (pt.empty())
            throw SchemaError("scenario table: atom without coordinates");
        weights.push_back(w);
        points.push_back(std::move(pt));
    }
    return make_scenario_set(points, weights);
}

inline ScenarioSet read_scenario_table(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw SchemaError("cannot open scenario table: " + path);
    return read_scenario_table(in);
}

}  // namespace riskalloc
