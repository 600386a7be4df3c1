#include "robmix/types.hpp"

#include <cmath>
#include <cstdio>

namespace robmix {

std::string EstimatorSpec::label() const {
    if (kind == EstimatorKind::MLE) {
        return "mle";
    }
    char buf[64];
    std::snprintf(buf, sizeof(buf), "mdpde_%g", alpha);
    return buf;
}

void GroupedDataset::validate() const {
    if (groups.empty()) {
        throw std::invalid_argument("dataset has no groups");
    }
    for (std::size_t i = 0; i < groups.size(); ++i) {
        const Group& g = groups[i];
        if (g.y.size() != m || g.X.rows() != m || g.Z.rows() != m) {
            throw std::invalid_argument("group " + std::to_string(i) + " does not have m rows");
        }
        if (g.X.cols() != p || g.Z.cols() != q) {
            throw std::invalid_argument("group " + std::to_string(i) + " has wrong design width");
        }
    }
    const long min_obs = p + q * (q + 1) / 2;
    if (total_observations() <= min_obs) {
        throw std::invalid_argument("total sample size n*m must exceed p + q(q+1)/2");
    }
}

}  // namespace robmix
