// Benchmark: OpenMP kernels against the serial references, plus the
// parallel pair screen against a single-threaded run. Outputs verify
// bit-identical results while timing both paths.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <string>

#include "tsgps/data_io.hpp"
#include "tsgps/screen.hpp"
#include "tsgps/tensor.hpp"

using namespace tsgps;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

Tensor random_tensor(std::size_t r, std::size_t c, Rng& rng) {
    Tensor t(r, c);
    for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] = rng.uniform(-1.0, 1.0);
    return t;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    double mx = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        mx = std::max(mx, std::abs(a.data()[i] - b.data()[i]));
    return mx;
}

void bench_matmul(int threads, int reps) {
    std::printf("\nmatmul: serial reference vs %d threads (%d reps)\n", threads,
                reps);
    std::printf("%-18s %12s %12s %9s %10s\n", "shape", "serial s", "parallel s",
                "speedup", "max|diff|");
    Rng rng(7);
    for (const auto [m, k, n] : {std::array<std::size_t, 3>{256, 256, 256},
                                 std::array<std::size_t, 3>{512, 512, 512},
                                 std::array<std::size_t, 3>{1120, 40, 160},
                                 std::array<std::size_t, 3>{1120, 160, 40}}) {
        Tensor a = random_tensor(m, k, rng);
        Tensor b = random_tensor(k, n, rng);

        kernels::set_threads(1);
        Tensor ref;
        auto t0 = Clock::now();
        for (int r = 0; r < reps; ++r) ref = kernels::matmul_serial(a, b);
        const double ts = seconds_since(t0) / reps;

        kernels::set_threads(threads);
        Tensor par;
        t0 = Clock::now();
        for (int r = 0; r < reps; ++r) par = kernels::matmul(a, b);
        const double tp = seconds_since(t0) / reps;

        const std::string shape = std::to_string(m) + "x" + std::to_string(k) +
                                  "." + std::to_string(n);
        std::printf("%-18s %12.6f %12.6f %8.2fx %10.2e\n", shape.c_str(), ts, tp,
                    ts / tp, max_abs_diff(ref, par));
    }
    kernels::set_threads(1);
}

void bench_screen(int threads) {
    SynthConfig cfg;
    cfg.samples_per_class = {300, 300};
    cfg.n_genes = 300;
    cfg.n_pathways = 15;
    cfg.planted_pairs = 15;
    cfg.flip_noise = 0.1;
    cfg.seed = 42;
    const SyntheticData data = generate_synthetic(cfg);

    std::printf("\npair screen: %zu genes, %zu samples\n", cfg.n_genes,
                static_cast<std::size_t>(data.expr.n_samples()));

    kernels::set_threads(1);
    auto t0 = Clock::now();
    const DgpPanel serial = select_dgps(data.expr, data.labels, data.catalog, 35);
    const double ts = seconds_since(t0);

    kernels::set_threads(threads);
    t0 = Clock::now();
    const DgpPanel parallel =
        select_dgps(data.expr, data.labels, data.catalog, 35);
    const double tp = seconds_since(t0);
    kernels::set_threads(1);

    bool identical = serial.k() == parallel.k();
    for (std::size_t i = 0; identical && i < serial.k(); ++i)
        identical = serial.pairs[i].g1 == parallel.pairs[i].g1 &&
                    serial.pairs[i].g2 == parallel.pairs[i].g2 &&
                    serial.pairs[i].p_value == parallel.pairs[i].p_value;

    std::printf("serial %6.3f s | %d threads %6.3f s | speedup %.2fx | panels %s\n",
                ts, threads, tp, ts / tp,
                identical ? "bit-identical" : "DIFFER (bug)");
}

} // namespace

int main(int argc, char** argv) {
    const int threads = argc > 1 ? std::atoi(argv[1]) : 4;
    const int reps = argc > 2 ? std::atoi(argv[2]) : 5;
    std::printf("kernel benchmark, %d threads\n", threads);
    bench_matmul(threads, reps);
    bench_screen(threads);
    return 0;
}
