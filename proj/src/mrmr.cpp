#include "lupi/mrmr.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace lupi {

using Eigen::Index;
using Eigen::VectorXd;

void DiscretizationConfig::validate() const
{
    if (n_bins < 2) {
        throw std::invalid_argument("discretize: need at least 2 bins");
    }
}

std::vector<int> discretize(const VectorXd& values, const DiscretizationConfig& config)
{
    config.validate();
    const Index n = values.size();
    if (n == 0) {
        throw std::invalid_argument("discretize: empty input");
    }
    if (!values.allFinite()) {
        throw std::invalid_argument("discretize: non-finite value");
    }
    std::vector<Index> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return values(a) < values(b); });

    std::vector<int> labels(static_cast<size_t>(n));
    Index r = 0;
    while (r < n) {
        Index end = r;
        while (end + 1 < n && values(order[static_cast<size_t>(end + 1)]) == values(order[static_cast<size_t>(r)])) {
            ++end;
        }
        const int bin = static_cast<int>((r * config.n_bins) / n);
        for (Index t = r; t <= end; ++t) {
            labels[static_cast<size_t>(order[static_cast<size_t>(t)])] = bin;
        }
        r = end + 1;
    }
    return labels;
}

double mutual_information(const std::vector<int>& a, const std::vector<int>& b)
{
    if (a.size() != b.size()) {
        throw std::invalid_argument("mutual_information: lengths " + std::to_string(a.size()) + " and " +
                                    std::to_string(b.size()) + " differ");
    }
    if (a.empty()) {
        throw std::invalid_argument("mutual_information: empty input");
    }
    const auto [amin, amax] = std::minmax_element(a.begin(), a.end());
    const auto [bmin, bmax] = std::minmax_element(b.begin(), b.end());
    if (*amin < 0 || *bmin < 0) {
        throw std::invalid_argument("mutual_information: labels must be non-negative");
    }
    const size_t na = static_cast<size_t>(*amax) + 1;
    const size_t nb = static_cast<size_t>(*bmax) + 1;
    std::vector<double> joint(na * nb, 0.0);
    std::vector<double> pa(na, 0.0);
    std::vector<double> pb(nb, 0.0);
    for (size_t i = 0; i < a.size(); ++i) {
        joint[static_cast<size_t>(a[i]) * nb + static_cast<size_t>(b[i])] += 1.0;
        pa[static_cast<size_t>(a[i])] += 1.0;
        pb[static_cast<size_t>(b[i])] += 1.0;
    }
    const double n = static_cast<double>(a.size());
    double mi = 0.0;
    for (size_t u = 0; u < na; ++u) {
        for (size_t v = 0; v < nb; ++v) {
            const double c = joint[u * nb + v];
            if (c > 0.0) {
                // p(u,v) ln(p(u,v) / (p(u) p(v))) with counts: c/n ln(c n / (c_u c_v)).
                mi += c / n * std::log(c * n / (pa[u] * pb[v]));
            }
        }
    }
    return std::max(mi, 0.0);
}

SelectionResult select_mid(const Eigen::MatrixXd& features, const VectorXd& target, int k,
                           const DiscretizationConfig& config)
{
    const Index n = features.rows();
    const Index p = features.cols();
    if (k < 0 || k > p) {
        throw std::invalid_argument("select_mid: cannot select " + std::to_string(k) + " of " + std::to_string(p) +
                                    " features");
    }
    if (n < 2) {
        throw std::invalid_argument("select_mid: need at least 2 samples");
    }
    if (target.size() != n) {
        throw std::invalid_argument("select_mid: target length does not match sample count");
    }

    const std::vector<int> y = discretize(target, config);
    std::vector<std::vector<int>> columns(static_cast<size_t>(p));
    SelectionResult result;
    result.relevance_scores.resize(p);
    for (Index j = 0; j < p; ++j) {
        columns[static_cast<size_t>(j)] = discretize(features.col(j), config);
        result.relevance_scores(j) = mutual_information(columns[static_cast<size_t>(j)], y);
    }
    result.mid_scores_at_selection.resize(k);

    std::vector<bool> taken(static_cast<size_t>(p), false);
    std::vector<double> redundancy(static_cast<size_t>(p), 0.0); // sum over selected, in selection order
    for (int step = 0; step < k; ++step) {
        Index best = -1;
        double best_score = 0.0;
        for (Index j = 0; j < p; ++j) {
            if (taken[static_cast<size_t>(j)]) {
                continue;
            }
            double score = result.relevance_scores(j);
            if (step > 0) {
                score -= redundancy[static_cast<size_t>(j)] / static_cast<double>(step);
            }
            if (best < 0 || score > best_score + kMidTieTolerance) {
                best = j;
                best_score = score;
            }
        }
        taken[static_cast<size_t>(best)] = true;
        result.selected_indices.push_back(static_cast<int>(best));
        result.mid_scores_at_selection(step) = best_score;
        if (step + 1 < k) {
            const std::vector<int>& chosen = columns[static_cast<size_t>(best)];
            for (Index j = 0; j < p; ++j) {
                if (!taken[static_cast<size_t>(j)]) {
                    redundancy[static_cast<size_t>(j)] += mutual_information(columns[static_cast<size_t>(j)], chosen);
                }
            }
        }
    }
    return result;
}

} // namespace lupi
