#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "retina/eigenpca.hpp"
#include "retina/error.hpp"
#include "retina/rng.hpp"
#include "test_util.hpp"

using namespace retina;
using namespace retina::pca;

namespace {

// Test-side oracle: dense D x D covariance eigen-decomposition via a plain
// Jacobi written here, independent of the snapshot route under test.
struct DenseEig {
    std::vector<double> eigenvalues;            // descending
    std::vector<std::vector<double>> components; // unit vectors
};

DenseEig dense_covariance_eig(const std::vector<std::vector<double>>& samples, int k) {
    const int m = static_cast<int>(samples.size());
    const int d = static_cast<int>(samples[0].size());
    std::vector<double> mean(d, 0.0);
    for (const auto& s : samples)
        for (int j = 0; j < d; ++j) mean[j] += s[j] / m;

    std::vector<std::vector<double>> cov(d, std::vector<double>(d, 0.0));
    for (const auto& s : samples)
        for (int a = 0; a < d; ++a)
            for (int b = 0; b < d; ++b)
                cov[a][b] += (s[a] - mean[a]) * (s[b] - mean[b]) / m;

    std::vector<std::vector<double>> v(d, std::vector<double>(d, 0.0));
    for (int i = 0; i < d; ++i) v[i][i] = 1.0;
    for (int sweep = 0; sweep < 200; ++sweep) {
        double off = 0.0;
        for (int p = 0; p < d; ++p)
            for (int q = p + 1; q < d; ++q) off += cov[p][q] * cov[p][q];
        if (off < 1e-26) break;
        for (int p = 0; p < d; ++p) {
            for (int q = p + 1; q < d; ++q) {
                if (std::abs(cov[p][q]) < 1e-300) continue;
                const double theta = (cov[q][q] - cov[p][p]) / (2.0 * cov[p][q]);
                const double t =
                    (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1));
                const double c = 1.0 / std::sqrt(t * t + 1), s = t * c;
                for (int i = 0; i < d; ++i) {
                    const double aip = cov[i][p], aiq = cov[i][q];
                    cov[i][p] = c * aip - s * aiq;
                    cov[i][q] = s * aip + c * aiq;
                }
                for (int i = 0; i < d; ++i) {
                    const double api = cov[p][i], aqi = cov[q][i];
                    cov[p][i] = c * api - s * aqi;
                    cov[q][i] = s * api + c * aqi;
                }
                for (int i = 0; i < d; ++i) {
                    const double vip = v[i][p], viq = v[i][q];
                    v[i][p] = c * vip - s * viq;
                    v[i][q] = s * vip + c * viq;
                }
            }
        }
    }

    std::vector<int> order(d);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) { return cov[a][a] > cov[b][b]; });

    DenseEig out;
    for (int r = 0; r < k; ++r) {
        const int e = order[r];
        out.eigenvalues.push_back(cov[e][e]);
        std::vector<double> u(d);
        for (int i = 0; i < d; ++i) u[i] = v[i][e];
        for (double x : u)
            if (std::abs(x) > 1e-12) {
                if (x < 0)
                    for (double& y : u) y = -y;
                break;
            }
        out.components.push_back(std::move(u));
    }
    return out;
}

std::vector<std::vector<double>> random_samples(int m, int d, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<std::vector<double>> samples(m, std::vector<double>(d));
    for (auto& s : samples)
        for (double& x : s) x = rng.normal();
    return samples;
}

} // namespace

TEST_CASE("image flattening is row-major and round trips") {
    GrayImage img(2, 2);
    img.pixels = {0.1, 0.2, 0.3, 0.4};
    const std::vector<double> v = image_to_vector(img);
    CHECK(v == std::vector<double>{0.1, 0.2, 0.3, 0.4});
    const GrayImage back = vector_to_image(v, 2, 2);
    CHECK(back.pixels == img.pixels);
    CHECK(image_to_vector(GrayImage(3, 3, 0.0)) == std::vector<double>(9, 0.0));
}

TEST_CASE("two-point fit recovers the hand-computed eigenpair") {
    // samples (1,0) and (-1,0): mean (0,0); Gram = [[1/2,-1/2],[-1/2,1/2]]
    // eigenvalues {1, 0}; the single admissible component is (1,0) with
    // lambda = 1
    const std::vector<std::vector<double>> samples{{1.0, 0.0}, {-1.0, 0.0}};
    const EigenModel model = fit_pca(samples, 1);
    REQUIRE(model.k() == 1);
    CHECK(model.mean[0] == doctest::Approx(0.0));
    CHECK(model.mean[1] == doctest::Approx(0.0));
    CHECK(model.eigenvalues[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(model.component(0)[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(model.component(0)[1] == doctest::Approx(0.0).epsilon(1e-12));

    // projections of the training points are the +-1 coefficients
    CHECK(project(model, samples[0])[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(project(model, samples[1])[0] == doctest::Approx(-1.0).epsilon(1e-12));
}

TEST_CASE("identical samples yield zero components and a warning") {
    const std::vector<std::vector<double>> samples(4, std::vector<double>{0.3, 0.7, 0.1});
    std::vector<std::string> warnings;
    const EigenModel model = fit_pca(samples, 2, &warnings);
    CHECK(model.k() == 0);
    CHECK(!warnings.empty());
}

TEST_CASE("snapshot eigenvalues and components match the dense covariance oracle") {
    Rng seeds(77);
    for (int trial = 0; trial < 20; ++trial) {
        const int m = 3 + static_cast<int>(seeds.next_below(8));  // M <= 10
        const int d = 2 + static_cast<int>(seeds.next_below(24)); // D <= 25
        const int k = std::min(m - 1, d);
        const auto samples = random_samples(m, d, seeds.next_u64());

        const EigenModel model = fit_pca(samples, k);
        const DenseEig oracle = dense_covariance_eig(samples, model.k());

        REQUIRE(model.k() <= k);
        for (int j = 0; j < model.k(); ++j) {
            const double lam = model.eigenvalues[j];
            const double want = oracle.eigenvalues[j];
            CHECK(std::abs(lam - want) <= 1e-8 * std::max(1.0, std::abs(want)));
            // components agree up to the shared sign convention
            for (int t = 0; t < d; ++t)
                CHECK(std::abs(model.component(j)[t] - oracle.components[j][t]) < 1e-6);
        }
    }
}

TEST_CASE("the eigenvalue identity lambda_k = (1/M) sum (u_k . phi_n)^2 holds on every fit") {
    Rng seeds(31);
    for (int trial = 0; trial < 10; ++trial) {
        const int m = 4 + static_cast<int>(seeds.next_below(6));
        const int d = 6 + static_cast<int>(seeds.next_below(10));
        const auto samples = random_samples(m, d, seeds.next_u64());
        const EigenModel model = fit_pca(samples, std::min(m - 1, d));

        for (int j = 0; j < model.k(); ++j) {
            double acc = 0.0;
            for (const auto& s : samples) {
                double dot = 0.0;
                for (int t = 0; t < d; ++t) dot += model.component(j)[t] * (s[t] - model.mean[t]);
                acc += dot * dot;
            }
            acc /= m;
            CHECK(std::abs(model.eigenvalues[j] - acc) <=
                  1e-8 * std::max(1.0, std::abs(acc)));
        }
    }
}

TEST_CASE("components are orthonormal and eigenvalues nonincreasing") {
    const auto samples = random_samples(8, 12, 5);
    const EigenModel model = fit_pca(samples, 7);
    for (int a = 0; a < model.k(); ++a) {
        for (int b = 0; b < model.k(); ++b) {
            double dot = 0.0;
            for (int t = 0; t < model.dim; ++t) dot += model.component(a)[t] * model.component(b)[t];
            CHECK(std::abs(dot - (a == b ? 1.0 : 0.0)) < 1e-6);
        }
    }
    for (int j = 1; j < model.k(); ++j)
        CHECK(model.eigenvalues[j] <= model.eigenvalues[j - 1] + 1e-12);
    for (double lam : model.eigenvalues) CHECK(lam >= 0.0);
}

TEST_CASE("fits are bit-stable across repeated runs") {
    const auto samples = random_samples(6, 9, 13);
    const EigenModel a = fit_pca(samples, 5);
    const EigenModel b = fit_pca(samples, 5);
    CHECK(a.components == b.components);
    CHECK(a.eigenvalues == b.eigenvalues);
}

TEST_CASE("projection examples and the Bessel bound") {
    const auto samples = random_samples(6, 9, 21);
    const EigenModel model = fit_pca(samples, 4);

    // projecting the mean gives zero coefficients
    for (double c : project(model, model.mean)) CHECK(std::abs(c) < 1e-9);

    // mean + u_1 projects to (1, 0, ..., 0)
    std::vector<double> x = model.mean;
    for (int t = 0; t < model.dim; ++t) x[t] += model.component(0)[t];
    const std::vector<double> coeffs = project(model, x);
    CHECK(coeffs[0] == doctest::Approx(1.0).epsilon(1e-9));
    for (int j = 1; j < model.k(); ++j) CHECK(std::abs(coeffs[j]) < 1e-9);

    // Bessel: projection energy never exceeds the centered norm
    Rng rng(2);
    for (int trial = 0; trial < 10; ++trial) {
        std::vector<double> y(model.dim);
        for (double& v : y) v = rng.normal();
        double energy = 0.0;
        for (double c : project(model, y)) energy += c * c;
        double norm = 0.0;
        for (int t = 0; t < model.dim; ++t) {
            const double c = y[t] - model.mean[t];
            norm += c * c;
        }
        CHECK(energy <= norm + 1e-9);
    }
}

TEST_CASE("reconstruct examples") {
    const auto samples = random_samples(5, 7, 33);
    const EigenModel model = fit_pca(samples, 4);

    // zero coefficients reconstruct the mean
    CHECK(reconstruct(model, std::vector<double>(model.k(), 0.0)) == model.mean);

    // project(reconstruct(c)) is the identity on the component span
    Rng rng(3);
    std::vector<double> c(model.k());
    for (double& v : c) v = rng.normal();
    const std::vector<double> back = project(model, reconstruct(model, c));
    for (int j = 0; j < model.k(); ++j) CHECK(back[j] == doctest::Approx(c[j]).epsilon(1e-9));
}

TEST_CASE("k = M-1 reconstructs every training sample") {
    const auto samples = random_samples(6, 10, 44);
    const EigenModel model = fit_pca(samples, 5);
    REQUIRE(model.k() == 5);
    for (const auto& s : samples) {
        const std::vector<double> back = reconstruct(model, project(model, s));
        double norm = 0.0, err = 0.0;
        for (int t = 0; t < model.dim; ++t) {
            norm += s[t] * s[t];
            const double d = back[t] - s[t];
            err += d * d;
        }
        CHECK(std::sqrt(err) <= 1e-6 * std::max(1.0, std::sqrt(norm)));
    }
}

TEST_CASE("fit_pca validates k and sample counts") {
    CHECK_THROWS_AS(fit_pca({{1.0, 2.0}}, 1), InvalidArgument);
    const auto samples = random_samples(4, 6, 1);
    CHECK_THROWS_AS(fit_pca(samples, 4), InvalidArgument); // k > M-1
    CHECK_THROWS_AS(fit_pca(samples, 0), InvalidArgument);
    CHECK_NOTHROW(fit_pca(samples, 3));
}

TEST_CASE("fit_pca_clamped applies the sparse-data rule with a warning") {
    const auto samples = random_samples(4, 6, 2);
    std::vector<std::string> warnings;
    const EigenModel model = fit_pca_clamped(samples, 40, &warnings);
    CHECK(model.k() == 3);
    REQUIRE(!warnings.empty());
    CHECK(warnings[0].find("clamped") != std::string::npos);
}

TEST_CASE("eigen model save/load round trip") {
    TempDir tmp("eigen");
    const auto samples = random_samples(5, 8, 3);
    EigenModel model = fit_pca(samples, 3);
    model.width = 4;
    model.height = 2;
    save(model, tmp / "m.eig");
    const EigenModel back = load(tmp / "m.eig");
    CHECK(back.dim == model.dim);
    CHECK(back.width == 4);
    CHECK(back.height == 2);
    CHECK(back.mean == model.mean);
    CHECK(back.components == model.components);
    CHECK(back.eigenvalues == model.eigenvalues);
}
