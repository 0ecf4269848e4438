#include <doctest.h>

#include "oracles.hpp"
#include "tsgps/fisher.hpp"
#include "tsgps/rng.hpp"

using namespace tsgps;

TEST_SUITE("fisher") {

TEST_CASE("point probability, hand tables") {
    // (2,0,0,2): (2! 2! 2! 2!) / (2! 0! 0! 2! 4!) = 16/96... with 0! = 1
    CHECK(fisher_point_probability({2, 0, 0, 2}) == doctest::Approx(1.0 / 6.0).epsilon(1e-12));
    CHECK(fisher_point_probability({1, 1, 1, 1}) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(fisher_point_probability({0, 0, 0, 0}) == doctest::Approx(1.0));
    CHECK(fisher_point_probability({0, 0, 3, 4}) == doctest::Approx(1.0));
}

TEST_CASE("two-sided, hand tables") {
    CHECK(fisher_exact_two_sided({2, 0, 0, 2}) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    CHECK(fisher_exact_two_sided({1, 1, 1, 1}) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("degenerate margins report p = 1") {
    FisherResult r = fisher_exact({0, 0, 5, 7});
    CHECK(r.p == 1.0);
    CHECK(r.degenerate);
    r = fisher_exact({3, 0, 4, 0});
    CHECK(r.p == 1.0);
    CHECK(r.degenerate);
    r = fisher_exact({1, 1, 1, 1});
    CHECK_FALSE(r.degenerate);
}

TEST_CASE("negative counts rejected") {
    CHECK_THROWS_AS(fisher_point_probability({-1, 1, 1, 1}), ParamError);
}

TEST_CASE("random tables match the exact-binomial oracle") {
    Rng rng(20240611);
    for (int iter = 0; iter < 500; ++iter) {
        ContingencyTable t{static_cast<std::int64_t>(rng.index(8)),
                           static_cast<std::int64_t>(rng.index(8)),
                           static_cast<std::int64_t>(rng.index(8)),
                           static_cast<std::int64_t>(rng.index(7))};
        if (t.total() == 0) continue;
        CHECK(fisher_point_probability(t) ==
              doctest::Approx(oracles::fisher_point_oracle(t)).epsilon(1e-10));
        CHECK(fisher_exact_two_sided(t) ==
              doctest::Approx(oracles::fisher_two_sided_oracle(t)).epsilon(1e-10));
    }
}

TEST_CASE("point probabilities over fixed margins sum to 1") {
    Rng rng(7);
    for (int iter = 0; iter < 200; ++iter) {
        const std::int64_t n = 1 + static_cast<std::int64_t>(rng.index(25));
        const std::int64_t r1 = static_cast<std::int64_t>(rng.index(n + 1));
        const std::int64_t c1 = static_cast<std::int64_t>(rng.index(n + 1));
        const std::int64_t lo = std::max<std::int64_t>(0, c1 - (n - r1));
        const std::int64_t hi = std::min(r1, c1);
        if (lo > hi) continue;
        LogFactorialTable lf(n);
        double sum = 0.0;
        for (std::int64_t a = lo; a <= hi; ++a)
            sum += fisher_point_probability(
                {a, r1 - a, c1 - a, (n - r1) - (c1 - a)}, lf);
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-10));
    }
}

TEST_CASE("invariances") {
    Rng rng(99);
    for (int iter = 0; iter < 200; ++iter) {
        ContingencyTable t{static_cast<std::int64_t>(rng.index(10)),
                           static_cast<std::int64_t>(rng.index(10)),
                           static_cast<std::int64_t>(rng.index(10)),
                           static_cast<std::int64_t>(rng.index(10))};
        if (t.total() == 0) continue;
        const double p = fisher_exact_two_sided(t);
        CHECK(p >= 0.0);
        CHECK(p <= 1.0);
        // simultaneous row and column swap
        CHECK(fisher_exact_two_sided({t.d, t.c, t.b, t.a}) == doctest::Approx(p).epsilon(1e-12));
        // label swap: a<->b, c<->d
        CHECK(fisher_exact_two_sided({t.b, t.a, t.d, t.c}) == doctest::Approx(p).epsilon(1e-12));
    }
}

} // TEST_SUITE
