#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "retina/error.hpp"
#include "retina/rng.hpp"
#include "retina/svm.hpp"
#include "test_util.hpp"

using namespace retina;
using namespace retina::svm;

namespace {

// Test-side oracle: maximize the dual by projected gradient ascent. The
// feasible set {0 <= a <= C, sum a_i y_i = 0} is handled by exact projection
// (bisection on the hyperplane multiplier), independent of the SMO path.
struct DualOracle {
    std::vector<double> alpha;
    double objective = 0.0;
};

DualOracle brute_force_dual(const std::vector<std::vector<double>>& x, const std::vector<int>& y,
                            const KernelSpec& kernel, double c, int iters = 60000) {
    const int n = static_cast<int>(x.size());
    std::vector<double> q(static_cast<std::size_t>(n) * n);
    double qmax = 0.0;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            q[i * n + j] = y[i] * y[j] * kernel_eval(kernel, x[i], x[j]);
            qmax = std::max(qmax, std::abs(q[i * n + j]));
        }

    const auto project = [&](std::vector<double>& a) {
        // find nu so that sum_i clip(a_i + nu y_i) y_i = 0
        double lo = -2.0 * c - 1.0, hi = 2.0 * c + 1.0;
        const auto balance = [&](double nu) {
            double s = 0.0;
            for (int i = 0; i < n; ++i) s += std::clamp(a[i] + nu * y[i], 0.0, c) * y[i];
            return s;
        };
        for (int it = 0; it < 200; ++it) {
            const double mid = (lo + hi) / 2.0;
            if (balance(mid) > 0)
                hi = mid;
            else
                lo = mid;
        }
        const double nu = (lo + hi) / 2.0;
        for (int i = 0; i < n; ++i) a[i] = std::clamp(a[i] + nu * y[i], 0.0, c);
    };

    const auto objective = [&](const std::vector<double>& a) {
        double obj = std::accumulate(a.begin(), a.end(), 0.0);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) obj -= 0.5 * a[i] * a[j] * q[i * n + j];
        return obj;
    };

    std::vector<double> a(n, 0.0);
    project(a);
    const double step = 1.0 / (qmax * n + 1.0);
    for (int it = 0; it < iters; ++it) {
        std::vector<double> g(n, 1.0);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) g[i] -= q[i * n + j] * a[j];
        for (int i = 0; i < n; ++i) a[i] += step * g[i];
        project(a);
    }
    return {a, objective(a)};
}

std::vector<std::vector<double>> blob_dataset(std::vector<int>& labels, int classes,
                                              int per_class, std::uint64_t seed) {
    // well-separated Gaussian blobs on a circle of radius 10
    Rng rng(seed);
    std::vector<std::vector<double>> points;
    for (int c = 0; c < classes; ++c) {
        const double cx = 10.0 * std::cos(2.0 * 3.14159265358979 * c / classes);
        const double cy = 10.0 * std::sin(2.0 * 3.14159265358979 * c / classes);
        for (int i = 0; i < per_class; ++i) {
            points.push_back({cx + rng.normal() * 0.5, cy + rng.normal() * 0.5});
            labels.push_back(c);
        }
    }
    return points;
}

} // namespace

TEST_CASE("rbf kernel of a point with itself is 1") {
    const KernelSpec k{KernelKind::kRbf, 0.7, 3, 0.0};
    Rng rng(1);
    for (int trial = 0; trial < 5; ++trial) {
        std::vector<double> x{rng.normal(), rng.normal(), rng.normal()};
        CHECK(kernel_eval(k, x, x) == doctest::Approx(1.0).epsilon(1e-15));
    }
}

TEST_CASE("degree-1 polynomial with gamma 1 and coef0 0 is the inner product") {
    const KernelSpec k{KernelKind::kPolynomial, 1.0, 1, 0.0};
    const std::vector<double> x{1.0, 2.0, -3.0}, z{0.5, -1.0, 2.0};
    CHECK(kernel_eval(k, x, z) == doctest::Approx(0.5 - 2.0 - 6.0).epsilon(1e-15));
}

TEST_CASE("rbf matches a direct evaluation of exp(-gamma |x-z|^2)") {
    const KernelSpec k{KernelKind::kRbf, 0.5, 3, 0.0};
    const std::vector<double> x{0.0, 0.0}, z{2.0, 0.0};
    CHECK(kernel_eval(k, x, z) == doctest::Approx(std::exp(-2.0)).epsilon(1e-15));
}

TEST_CASE("kernel_eval rejects dimension mismatches and bad params") {
    const KernelSpec k{KernelKind::kRbf, 1.0, 3, 0.0};
    CHECK_THROWS_AS(kernel_eval(k, std::vector<double>{1.0}, std::vector<double>{1.0, 2.0}),
                    InvalidArgument);
    const KernelSpec bad{KernelKind::kRbf, 0.0, 3, 0.0};
    CHECK_THROWS_AS(kernel_eval(bad, std::vector<double>{1.0}, std::vector<double>{1.0}),
                    InvalidArgument);
}

TEST_CASE("two separable 1-D points solve to alpha = 1/2, b = 0, f(x) = x") {
    const std::vector<std::vector<double>> x{{-1.0}, {1.0}};
    const std::vector<int> y{-1, 1};
    const KernelSpec linear{KernelKind::kPolynomial, 1.0, 1, 0.0};
    TrainParams params;
    params.C = 10.0;
    params.tol = 1e-6;
    SmoDiagnostics diag;
    const BinarySvm m = smo_train(x, y, linear, params, &diag);

    REQUIRE(diag.alpha.size() == 2);
    CHECK(diag.alpha[0] == doctest::Approx(0.5).epsilon(1e-6));
    CHECK(diag.alpha[1] == doctest::Approx(0.5).epsilon(1e-6));
    CHECK(m.bias == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(decision(m, std::vector<double>{0.0}) == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(decision(m, std::vector<double>{0.7}) == doctest::Approx(0.7).epsilon(1e-6));
    CHECK(decision(m, std::vector<double>{-2.0}) == doctest::Approx(-2.0).epsilon(1e-6));
}

TEST_CASE("XOR with rbf: symmetric support set matching the brute-force dual") {
    const std::vector<std::vector<double>> x{{1, 1}, {1, -1}, {-1, 1}, {-1, -1}};
    const std::vector<int> y{1, -1, -1, 1};
    const KernelSpec rbf{KernelKind::kRbf, 1.0, 3, 0.0};
    TrainParams params;
    params.C = 10.0;
    params.tol = 1e-8;
    SmoDiagnostics diag;
    const BinarySvm m = smo_train(x, y, rbf, params, &diag);

    // closed form by symmetry: all alphas equal 1/(1 + e^-8 - 2 e^-4)
    const double expected_alpha = 1.0 / (1.0 + std::exp(-8.0) - 2.0 * std::exp(-4.0));
    REQUIRE(m.support_vectors.size() == 4);
    for (double a : diag.alpha) CHECK(a == doctest::Approx(expected_alpha).epsilon(1e-6));
    CHECK(m.bias == doctest::Approx(0.0).epsilon(1e-9));

    const DualOracle oracle = brute_force_dual(x, y, rbf, params.C);
    CHECK(diag.dual_objective == doctest::Approx(oracle.objective).epsilon(1e-7));
    for (int i = 0; i < 4; ++i)
        CHECK(diag.alpha[i] == doctest::Approx(oracle.alpha[i]).epsilon(1e-4));

    // all four corners classified correctly
    for (int i = 0; i < 4; ++i)
        CHECK(decision(m, x[i]) * y[i] > 0);
}

TEST_CASE("SMO matches the brute-force dual on random small problems") {
    Rng rng(99);
    for (int trial = 0; trial < 10; ++trial) {
        const int n = 3 + static_cast<int>(rng.next_below(4)); // up to 6 points
        std::vector<std::vector<double>> x(n, std::vector<double>(2));
        std::vector<int> y(n);
        bool pos = false, neg = false;
        for (int i = 0; i < n; ++i) {
            x[i][0] = rng.normal();
            x[i][1] = rng.normal();
            y[i] = rng.next_double() < 0.5 ? 1 : -1;
            (y[i] == 1 ? pos : neg) = true;
        }
        if (!pos) y[0] = 1;
        if (!neg) y[1 % n] = -1;

        const KernelSpec kernel{trial % 2 == 0 ? KernelKind::kRbf : KernelKind::kPolynomial,
                                0.8, 2, 1.0};
        TrainParams params;
        params.C = 1.0 + static_cast<double>(rng.next_below(5));
        params.tol = 1e-6;
        params.seed = trial;
        SmoDiagnostics diag;
        smo_train(x, y, kernel, params, &diag);
        const DualOracle oracle = brute_force_dual(x, y, kernel, params.C);
        CHECK(std::abs(diag.dual_objective - oracle.objective) < 1e-4);
        CHECK(diag.max_kkt_violation <= params.tol);
    }
}

TEST_CASE("trained machines satisfy the dual constraints") {
    Rng rng(7);
    std::vector<std::vector<double>> x;
    std::vector<int> y;
    for (int i = 0; i < 30; ++i) {
        const double cls = i % 2 == 0 ? 1.0 : -1.0;
        x.push_back({cls * 2.0 + rng.normal(), rng.normal()});
        y.push_back(static_cast<int>(cls));
    }
    TrainParams params;
    params.C = 5.0;
    SmoDiagnostics diag;
    const BinarySvm m = smo_train(x, y, KernelSpec{KernelKind::kRbf, 0.5, 3, 0.0}, params, &diag);

    double sum = 0.0;
    for (double c : m.dual_coefs) sum += c;
    CHECK(std::abs(sum) < 1e-6);
    for (std::size_t i = 0; i < diag.alpha.size(); ++i) {
        CHECK(diag.alpha[i] >= 0.0);
        CHECK(diag.alpha[i] <= params.C + 1e-12);
    }
    CHECK(diag.max_kkt_violation <= params.tol);

    // margins at free support vectors sit on the boundary within tol
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (diag.alpha[i] > 1e-8 && diag.alpha[i] < params.C - 1e-8)
            CHECK(std::abs(y[i] * decision(m, x[i]) - 1.0) <= params.tol + 1e-9);
    }
}

TEST_CASE("decision matches an independent support-vector summation") {
    Rng rng(15);
    std::vector<std::vector<double>> x;
    std::vector<int> y;
    for (int i = 0; i < 12; ++i) {
        x.push_back({rng.normal(), rng.normal(), rng.normal()});
        y.push_back(i % 2 == 0 ? 1 : -1);
    }
    const KernelSpec kernel{KernelKind::kPolynomial, 0.3, 2, 1.0};
    const BinarySvm m = smo_train(x, y, kernel, TrainParams{});

    const std::vector<double> probe{0.2, -0.4, 1.1};
    double expected = m.bias;
    for (std::size_t i = 0; i < m.support_vectors.size(); ++i) {
        double dot = 0.0;
        for (int t = 0; t < 3; ++t) dot += m.support_vectors[i][t] * probe[t];
        expected += m.dual_coefs[i] * std::pow(0.3 * dot + 1.0, 2);
    }
    CHECK(decision(m, probe) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("hinge objective is the margin violations plus the norm penalty") {
    const std::vector<std::vector<double>> x{{-1.0}, {1.0}};
    const std::vector<int> y{-1, 1};
    const KernelSpec linear{KernelKind::kPolynomial, 1.0, 1, 0.0};
    TrainParams params;
    params.C = 10.0;
    params.tol = 1e-6;
    const BinarySvm m = smo_train(x, y, linear, params);

    // separable with margins exactly 1: hinge term 0, so the value is
    // lambda |w|^2 with |w|^2 = 1
    CHECK(hinge_objective(m, x, y, 0.0) == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(hinge_objective(m, x, y, 0.5) == doctest::Approx(0.5).epsilon(1e-6));
}

TEST_CASE("hinge objective counts margin shortfalls") {
    // single support vector model built by hand: f(x) = 0.5 for x = 1
    BinarySvm m;
    m.kernel = KernelSpec{KernelKind::kPolynomial, 1.0, 1, 0.0};
    m.support_vectors = {{1.0}};
    m.dual_coefs = {0.5};
    m.bias = 0.0;
    CHECK(hinge_objective(m, {{1.0}}, {1}, 0.0) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("XOR hinge objective matches the value from the oracle alphas") {
    const std::vector<std::vector<double>> x{{1, 1}, {1, -1}, {-1, 1}, {-1, -1}};
    const std::vector<int> y{1, -1, -1, 1};
    const KernelSpec rbf{KernelKind::kRbf, 1.0, 3, 0.0};
    TrainParams params;
    params.C = 10.0;
    params.tol = 1e-8;
    const BinarySvm m = smo_train(x, y, rbf, params);

    const DualOracle oracle = brute_force_dual(x, y, rbf, params.C);
    BinarySvm from_oracle;
    from_oracle.kernel = rbf;
    for (int i = 0; i < 4; ++i) {
        from_oracle.support_vectors.push_back(x[i]);
        from_oracle.dual_coefs.push_back(oracle.alpha[i] * y[i]);
    }
    from_oracle.bias = 0.0; // by symmetry
    const double lambda = 1.0 / (2.0 * 4.0 * params.C);
    CHECK(hinge_objective(m, x, y, lambda) ==
          doctest::Approx(hinge_objective(from_oracle, x, y, lambda)).epsilon(1e-5));
}

TEST_CASE("ovo_train builds one machine per unordered pair") {
    std::vector<int> labels;
    const auto points = blob_dataset(labels, 2, 6, 0);
    const MultiSvm two = ovo_train(points, labels, {"a", "b"}, KernelSpec{}, TrainParams{});
    CHECK(two.machines.size() == 1);

    std::vector<int> labels5;
    const auto points5 = blob_dataset(labels5, 5, 4, 1);
    const MultiSvm five =
        ovo_train(points5, labels5, {"a", "b", "c", "d", "e"}, KernelSpec{}, TrainParams{});
    CHECK(five.machines.size() == 10);
    for (const auto& pm : five.machines) CHECK(pm.class_a < pm.class_b);
}

TEST_CASE("binary ovo prediction equals the sign decision") {
    std::vector<int> labels;
    const auto points = blob_dataset(labels, 2, 8, 3);
    const MultiSvm m = ovo_train(points, labels, {"neg", "pos"}, KernelSpec{}, TrainParams{});
    for (std::size_t i = 0; i < points.size(); ++i) {
        const std::vector<int> votes = ovo_votes(m, points[i]);
        const double f = decision(m.machines[0].machine, m.standardize(points[i]));
        CHECK(votes[f > 0 ? 1 : 0] == 1);
        CHECK(ovo_predict(m, points[i]) == (f > 0 ? 1 : 0));
    }
}

TEST_CASE("three separated blobs train to 100% accuracy with full votes at centers") {
    std::vector<int> labels;
    const auto points = blob_dataset(labels, 3, 10, 0);
    const MultiSvm m =
        ovo_train(points, labels, {"c0", "c1", "c2"}, KernelSpec{}, TrainParams{});

    int correct = 0;
    for (std::size_t i = 0; i < points.size(); ++i)
        correct += ovo_predict(m, points[i]) == labels[i];
    CHECK(correct == static_cast<int>(points.size()));

    // the center of blob 1 collects a vote from both of its pairs
    const std::vector<double> center{10.0 * std::cos(2.0 * 3.14159265358979 / 3),
                                     10.0 * std::sin(2.0 * 3.14159265358979 / 3)};
    const std::vector<int> votes = ovo_votes(m, center);
    CHECK(votes[1] == 2);
}

TEST_CASE("vote counts always sum to C(C-1)/2") {
    std::vector<int> labels;
    const auto points = blob_dataset(labels, 4, 5, 9);
    const MultiSvm m =
        ovo_train(points, labels, {"a", "b", "c", "d"}, KernelSpec{}, TrainParams{});
    Rng rng(4);
    for (int trial = 0; trial < 20; ++trial) {
        const std::vector<double> probe{rng.uniform(-12, 12), rng.uniform(-12, 12)};
        const std::vector<int> votes = ovo_votes(m, probe);
        CHECK(std::accumulate(votes.begin(), votes.end(), 0) == 6);
    }
}

TEST_CASE("ovo_train rejects data with an absent class") {
    std::vector<int> labels{0, 0, 1, 1};
    std::vector<std::vector<double>> points{{0, 0}, {0, 1}, {5, 5}, {5, 6}};
    CHECK_THROWS_AS(ovo_train(points, labels, {"a", "b", "c"}, KernelSpec{}, TrainParams{}),
                    InvalidArgument);
}

TEST_CASE("separable training is permutation invariant") {
    std::vector<int> labels;
    const auto points = blob_dataset(labels, 2, 8, 5);
    TrainParams params;
    params.tol = 1e-8;
    params.C = 10.0;
    const KernelSpec kernel{KernelKind::kRbf, 0.3, 3, 0.0};

    std::vector<int> y(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) y[i] = labels[i] == 0 ? -1 : 1;
    const BinarySvm m1 = smo_train(points, y, kernel, params);

    std::vector<std::size_t> perm(points.size());
    std::iota(perm.begin(), perm.end(), 0);
    Rng(123).shuffle(perm);
    std::vector<std::vector<double>> px(points.size());
    std::vector<int> py(points.size());
    for (std::size_t i = 0; i < perm.size(); ++i) {
        px[i] = points[perm[i]];
        py[i] = y[perm[i]];
    }
    const BinarySvm m2 = smo_train(px, py, kernel, params);

    Rng rng(6);
    for (int trial = 0; trial < 10; ++trial) {
        const std::vector<double> probe{rng.uniform(-12, 12), rng.uniform(-4, 4)};
        CHECK(decision(m1, probe) == doctest::Approx(decision(m2, probe)).epsilon(1e-6));
    }
}

TEST_CASE("scaling dual coefficients and bias scales the decision") {
    std::vector<int> labels;
    const auto points = blob_dataset(labels, 2, 5, 2);
    std::vector<int> y(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) y[i] = labels[i] == 0 ? -1 : 1;
    BinarySvm m = smo_train(points, y, KernelSpec{KernelKind::kRbf, 0.2, 3, 0.0}, TrainParams{});

    const std::vector<double> probe{1.0, -2.0};
    const double f = decision(m, probe);
    for (double& c : m.dual_coefs) c *= 3.0;
    m.bias *= 3.0;
    CHECK(decision(m, probe) == doctest::Approx(3.0 * f).epsilon(1e-12));
}

TEST_CASE("multisvm save/load round trips predictions") {
    TempDir tmp("svm");
    std::vector<int> labels;
    const auto points = blob_dataset(labels, 3, 6, 8);
    const MultiSvm m =
        ovo_train(points, labels, {"c0", "c1", "c2"},
                  KernelSpec{KernelKind::kPolynomial, 0.0, 2, 1.0}, TrainParams{});
    save(m, tmp / "m.svm");
    const MultiSvm back = load(tmp / "m.svm");

    CHECK(back.classes == m.classes);
    REQUIRE(back.machines.size() == m.machines.size());
    Rng rng(3);
    for (int trial = 0; trial < 10; ++trial) {
        const std::vector<double> probe{rng.uniform(-12, 12), rng.uniform(-12, 12)};
        CHECK(ovo_votes(back, probe) == ovo_votes(m, probe));
        for (std::size_t j = 0; j < m.machines.size(); ++j)
            CHECK(decision(back.machines[j].machine, back.standardize(probe)) ==
                  doctest::Approx(decision(m.machines[j].machine, m.standardize(probe)))
                      .epsilon(1e-12));
    }
}
