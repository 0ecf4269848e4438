#pragma once

#include <cstdint>
#include <vector>

#include "tsgps/errors.hpp"

namespace tsgps {

/// 2x2 contingency table:
///
///                 label < 0.5   label > 0.5
///   pattern up        a             b
///   pattern down      c             d
struct ContingencyTable {
    std::int64_t a = 0, b = 0, c = 0, d = 0;

    std::int64_t total() const { return a + b + c + d; }

    void validate() const {
        if (a < 0 || b < 0 || c < 0 || d < 0)
            throw ParamError("contingency counts must be non-negative");
    }
};

struct FisherResult {
    double p = 1.0;
    bool degenerate = false; // a zero row or column margin
};

/// Precomputed ln(n!) values so screening can share one table across
/// all candidate pairs (and across threads; the table is immutable).
class LogFactorialTable {
public:
    explicit LogFactorialTable(std::int64_t max_n);

    double operator()(std::int64_t n) const { return values_[static_cast<std::size_t>(n)]; }
    std::int64_t max_n() const { return static_cast<std::int64_t>(values_.size()) - 1; }

private:
    std::vector<double> values_;
};

/// Exact hypergeometric probability of the table given its margins,
/// via log-factorial accumulation:
/// p = (a+b)! (c+d)! (a+c)! (b+d)! / (a! b! c! d! n!).
double fisher_point_probability(const ContingencyTable& t);
double fisher_point_probability(const ContingencyTable& t, const LogFactorialTable& lf);

/// Two-sided exact test: the sum of point probabilities of every table
/// with the same margins whose point probability does not exceed the
/// observed one (relative slack 1e-7 absorbs float ties). Clamped to
/// [0,1]. A zero margin makes the table the only one possible; that is
/// reported as p = 1 with the degenerate flag set.
FisherResult fisher_exact(const ContingencyTable& t);
FisherResult fisher_exact(const ContingencyTable& t, const LogFactorialTable& lf);

/// Convenience: two-sided p-value only.
double fisher_exact_two_sided(const ContingencyTable& t);

} // namespace tsgps
