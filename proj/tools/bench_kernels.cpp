// Times every dense kernel in its OpenMP and serial variants on
// transformer-shaped inputs and verifies that the two paths agree bitwise.
// Exits nonzero on any mismatch.

#include <chrono>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "pixeldoc/kernels.hpp"
#include "pixeldoc/rng.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace {

using pixeldoc::Rng;
namespace par = pixeldoc::kernels;
namespace ser = pixeldoc::kernels::serial;

std::vector<double> random_vec(std::size_t n, Rng& rng) {
    std::vector<double> v(n);
    for (double& x : v) x = rng.normal(0.0, 1.0);
    return v;
}

double time_ms(const std::function<void()>& fn, int reps) {
    fn();  // warm up
    const auto start = std::chrono::steady_clock::now();
    for (int i = 0; i < reps; ++i) fn();
    const auto end = std::chrono::steady_clock::now();
    return std::chrono::duration<double, std::milli>(end - start).count() / reps;
}

bool g_all_equal = true;

void report(const char* name, double serial_ms, double parallel_ms, bool equal) {
    std::printf("%-22s serial %8.3f ms   parallel %8.3f ms   speedup %5.2fx   %s\n", name,
                serial_ms, parallel_ms, serial_ms / parallel_ms, equal ? "bitwise equal" : "MISMATCH");
    g_all_equal = g_all_equal && equal;
}

}  // namespace

int main() {
#ifdef _OPENMP
    std::printf("OpenMP threads: %d\n", omp_get_max_threads());
#else
    std::printf("OpenMP not enabled; both paths run serially\n");
#endif
    const int reps = 5;
    Rng rng(1234);

    {
        const int m = 256, k = 256, n = 256;
        const auto a = random_vec(static_cast<std::size_t>(m) * k, rng);
        const auto b = random_vec(static_cast<std::size_t>(k) * n, rng);
        std::vector<double> cs(static_cast<std::size_t>(m) * n), cp(cs.size());
        const double ts = time_ms([&] { ser::matmul(cs.data(), a.data(), b.data(), m, k, n); }, reps);
        const double tp = time_ms([&] { par::matmul(cp.data(), a.data(), b.data(), m, k, n); }, reps);
        report("matmul 256^3", ts, tp, cs == cp);

        const double ts_nt =
            time_ms([&] { ser::matmul_nt(cs.data(), a.data(), b.data(), m, k, n); }, reps);
        const double tp_nt =
            time_ms([&] { par::matmul_nt(cp.data(), a.data(), b.data(), m, k, n); }, reps);
        report("matmul_nt 256^3", ts_nt, tp_nt, cs == cp);

        const double ts_tn =
            time_ms([&] { ser::matmul_tn(cs.data(), a.data(), b.data(), m, k, n); }, reps);
        const double tp_tn =
            time_ms([&] { par::matmul_tn(cp.data(), a.data(), b.data(), m, k, n); }, reps);
        report("matmul_tn 256^3", ts_tn, tp_tn, cs == cp);
    }
    {
        const int rows = 1024, cols = 1024;
        const auto x = random_vec(static_cast<std::size_t>(rows) * cols, rng);
        auto xs = x, xp = x;
        const double ts = time_ms(
            [&] {
                xs = x;
                ser::softmax_rows(xs.data(), rows, cols);
            },
            reps);
        const double tp = time_ms(
            [&] {
                xp = x;
                par::softmax_rows(xp.data(), rows, cols);
            },
            reps);
        report("softmax 1024x1024", ts, tp, xs == xp);
    }
    {
        const std::size_t n = 1u << 22;
        const auto x = random_vec(n, rng);
        const auto dy = random_vec(n, rng);
        std::vector<double> ys(n), yp(n), dxs(n), dxp(n);
        const double ts = time_ms([&] { ser::gelu_forward(ys.data(), x.data(), n); }, reps);
        const double tp = time_ms([&] { par::gelu_forward(yp.data(), x.data(), n); }, reps);
        report("gelu fwd 4M", ts, tp, ys == yp);

        const double ts_b =
            time_ms([&] { ser::gelu_backward(dxs.data(), x.data(), dy.data(), n); }, reps);
        const double tp_b =
            time_ms([&] { par::gelu_backward(dxp.data(), x.data(), dy.data(), n); }, reps);
        report("gelu bwd 4M", ts_b, tp_b, dxs == dxp);
    }
    {
        const int rows = 4096, cols = 512;
        const std::size_t n = static_cast<std::size_t>(rows) * cols;
        const auto x = random_vec(n, rng);
        const auto gamma = random_vec(cols, rng);
        const auto beta = random_vec(cols, rng);
        const auto dy = random_vec(n, rng);
        std::vector<double> ys(n), yp(n), means(rows), meanp(rows), rstds(rows), rstdp(rows);
        const double ts = time_ms(
            [&] {
                ser::layernorm_forward(ys.data(), means.data(), rstds.data(), x.data(),
                                       gamma.data(), beta.data(), rows, cols, 1e-5);
            },
            reps);
        const double tp = time_ms(
            [&] {
                par::layernorm_forward(yp.data(), meanp.data(), rstdp.data(), x.data(),
                                       gamma.data(), beta.data(), rows, cols, 1e-5);
            },
            reps);
        report("layernorm fwd 4096x512", ts, tp, ys == yp && means == meanp && rstds == rstdp);

        std::vector<double> dxs(n), dxp(n), dgs(cols), dgp(cols), dbs(cols), dbp(cols);
        const double ts_b = time_ms(
            [&] {
                std::fill(dgs.begin(), dgs.end(), 0.0);
                std::fill(dbs.begin(), dbs.end(), 0.0);
                ser::layernorm_backward(dxs.data(), dgs.data(), dbs.data(), dy.data(), x.data(),
                                        gamma.data(), means.data(), rstds.data(), rows, cols);
            },
            reps);
        const double tp_b = time_ms(
            [&] {
                std::fill(dgp.begin(), dgp.end(), 0.0);
                std::fill(dbp.begin(), dbp.end(), 0.0);
                par::layernorm_backward(dxp.data(), dgp.data(), dbp.data(), dy.data(), x.data(),
                                        gamma.data(), meanp.data(), rstdp.data(), rows, cols);
            },
            reps);
        report("layernorm bwd 4096x512", ts_b, tp_b, dxs == dxp && dgs == dgp && dbs == dbp);
    }

    if (!g_all_equal) {
        std::printf("FAILED: parallel and serial paths disagree\n");
        return 1;
    }
    std::printf("all kernels bitwise equal across paths\n");
    return 0;
}
