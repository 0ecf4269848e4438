#include "tsgps/fisher.hpp"

#include <algorithm>
#include <cmath>

namespace tsgps {

namespace {

constexpr double kTieSlack = 1e-7;

double log_point(const LogFactorialTable& lf, std::int64_t a, std::int64_t b,
                 std::int64_t c, std::int64_t d) {
    return lf(a + b) + lf(c + d) + lf(a + c) + lf(b + d) -
           lf(a) - lf(b) - lf(c) - lf(d) - lf(a + b + c + d);
}

} // namespace

LogFactorialTable::LogFactorialTable(std::int64_t max_n) {
    if (max_n < 0) max_n = 0;
    values_.resize(static_cast<std::size_t>(max_n) + 1, 0.0);
    for (std::int64_t n = 1; n <= max_n; ++n)
        values_[static_cast<std::size_t>(n)] =
            values_[static_cast<std::size_t>(n - 1)] + std::log(static_cast<double>(n));
}

double fisher_point_probability(const ContingencyTable& t) {
    t.validate();
    LogFactorialTable lf(t.total());
    return fisher_point_probability(t, lf);
}

double fisher_point_probability(const ContingencyTable& t, const LogFactorialTable& lf) {
    t.validate();
    if (t.total() == 0) return 1.0;
    return std::exp(log_point(lf, t.a, t.b, t.c, t.d));
}

FisherResult fisher_exact(const ContingencyTable& t) {
    t.validate();
    LogFactorialTable lf(t.total());
    return fisher_exact(t, lf);
}

FisherResult fisher_exact(const ContingencyTable& t, const LogFactorialTable& lf) {
    t.validate();
    const std::int64_t r1 = t.a + t.b;
    const std::int64_t r2 = t.c + t.d;
    const std::int64_t c1 = t.a + t.c;
    const std::int64_t c2 = t.b + t.d;
    if (r1 == 0 || r2 == 0 || c1 == 0 || c2 == 0)
        return {1.0, true};

    const double log_obs = log_point(lf, t.a, t.b, t.c, t.d);
    const double cutoff = log_obs + std::log1p(kTieSlack);

    // All tables with these margins are indexed by a in [lo, hi].
    const std::int64_t lo = std::max<std::int64_t>(0, c1 - r2);
    const std::int64_t hi = std::min(r1, c1);
    double p = 0.0;
    for (std::int64_t a = lo; a <= hi; ++a) {
        const double lp = log_point(lf, a, r1 - a, c1 - a, r2 - c1 + a);
        if (lp <= cutoff) p += std::exp(lp);
    }
    return {std::clamp(p, 0.0, 1.0), false};
}

double fisher_exact_two_sided(const ContingencyTable& t) {
    return fisher_exact(t).p;
}

} // namespace tsgps
