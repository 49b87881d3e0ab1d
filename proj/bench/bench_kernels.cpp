// Times the OpenMP kernels against the serial reference on identical inputs.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>

#include "CLI11.hpp"
#include "overfit/kernels.hpp"
#include "overfit/rng.hpp"

using namespace overfit;

namespace {

Matrix gaussian(Rng& rng, int rows, int cols) {
    std::normal_distribution<double> g(0.0, 1.0);
    Matrix a(rows, cols);
    for (Eigen::Index k = 0; k < a.size(); ++k) a.data()[k] = g(rng);
    return a;
}

double best_of(int reps, const std::function<void()>& f) {
    double best = 1e300;
    for (int r = 0; r < reps; ++r) {
        const auto t0 = std::chrono::steady_clock::now();
        f();
        best = std::min(best, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    }
    return best;
}

void report(const char* name, double fast, double ref, double check) {
    std::printf("%-34s omp %10.4f ms  serial %10.4f ms  speedup %6.2fx  |diff| %.2e\n", name, 1e3 * fast, 1e3 * ref,
                ref / fast, check);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Kernel benchmark"};
    int reps = 5;
    std::int64_t samples = 200000;
    app.add_option("--reps", reps, "Repetitions per kernel (best time is reported)");
    app.add_option("--samples", samples, "Monte Carlo samples");
    CLI11_PARSE(app, argc, argv);

    Rng rng = make_rng(1);
    struct Shape {
        int d, n, m;
    };
    for (const Shape s : {Shape{1, 200, 100000}, Shape{50, 200, 20000}, Shape{2000, 200, 2000}}) {
        const Network net = Network::two_layer(gaussian(rng, s.n, s.d), gaussian(rng, s.n, 1).col(0),
                                               gaussian(rng, s.n, 1).col(0));
        const Matrix x = gaussian(rng, s.m, s.d);
        Vector a, b;
        const double fast = best_of(reps, [&] { a = forward_batch(net, x); });
        const double ref = best_of(reps, [&] { b = serial::forward_batch(net, x); });
        char name[64];
        std::snprintf(name, sizeof name, "forward d=%d n=%d m=%d", s.d, s.n, s.m);
        report(name, fast, ref, (a - b).cwiseAbs().maxCoeff());
    }

    for (const Shape s : {Shape{10, 50, 0}, Shape{500, 100, 0}}) {
        const Network net = Network::two_layer(gaussian(rng, s.n, s.d), gaussian(rng, s.n, 1).col(0),
                                               gaussian(rng, s.n, 1).col(0));
        ErrorEstimate a, b;
        const double fast = best_of(reps, [&] { a = clean_error_mc(net, s.d, samples, 7); });
        const double ref = best_of(reps, [&] { b = serial::clean_error_mc(net, s.d, samples, 7); });
        char name[64];
        std::snprintf(name, sizeof name, "sphere MC d=%d n=%d", s.d, s.n);
        report(name, fast, ref, std::abs(a.point_estimate - b.point_estimate));
    }

    const Network uni = Network::two_layer(gaussian(rng, 200, 1), gaussian(rng, 200, 1).col(0),
                                           gaussian(rng, 200, 1).col(0));
    ErrorEstimate a, b;
    const double fast = best_of(reps, [&] { a = clean_error_mc_interval(uni, samples, 7); });
    const double ref = best_of(reps, [&] { b = serial::clean_error_mc_interval(uni, samples, 7); });
    report("interval MC n=200", fast, ref, std::abs(a.point_estimate - b.point_estimate));
    return 0;
}
