#include "retina/eigenpca.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "retina/error.hpp"
#include "retina/model_io.hpp"

namespace retina::pca {

std::vector<double> image_to_vector(const GrayImage& img) { return img.pixels; }

GrayImage vector_to_image(const std::vector<double>& v, int width, int height) {
    if (static_cast<std::size_t>(width) * height != v.size())
        throw InvalidArgument("vector_to_image: size does not match dimensions");
    GrayImage img(width, height);
    img.pixels = v;
    return img;
}

namespace detail {

void jacobi_eigen_sym(std::vector<double>& a, int n, std::vector<double>& eigenvalues,
                      std::vector<double>& v) {
    constexpr double kRelThreshold = 1e-12;
    constexpr int kMaxSweeps = 100;

    v.assign(static_cast<std::size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i) * n + i] = 1.0;

    const auto at = [n](std::vector<double>& m, int r, int c) -> double& {
        return m[static_cast<std::size_t>(r) * n + c];
    };

    double frob0 = 0.0;
    for (double x : a) frob0 += x * x;
    frob0 = std::sqrt(frob0);
    const double threshold = kRelThreshold * std::max(frob0, 1e-300);

    for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
        double off = 0.0;
        for (int p = 0; p < n; ++p)
            for (int q = p + 1; q < n; ++q) off += 2.0 * at(a, p, q) * at(a, p, q);
        if (std::sqrt(off) <= threshold) break;

        for (int p = 0; p < n - 1; ++p) {
            for (int q = p + 1; q < n; ++q) {
                const double apq = at(a, p, q);
                if (std::abs(apq) <= threshold / (static_cast<double>(n) * n)) continue;

                const double theta = (at(a, q, q) - at(a, p, p)) / (2.0 * apq);
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                const double tau = s / (1.0 + c);

                const double app = at(a, p, p), aqq = at(a, q, q);
                at(a, p, p) = app - t * apq;
                at(a, q, q) = aqq + t * apq;
                at(a, p, q) = 0.0;
                at(a, q, p) = 0.0;
                for (int i = 0; i < n; ++i) {
                    if (i == p || i == q) continue;
                    const double aip = at(a, i, p), aiq = at(a, i, q);
                    at(a, i, p) = aip - s * (aiq + tau * aip);
                    at(a, p, i) = at(a, i, p);
                    at(a, i, q) = aiq + s * (aip - tau * aiq);
                    at(a, q, i) = at(a, i, q);
                }
                for (int i = 0; i < n; ++i) {
                    const double vip = at(v, i, p), viq = at(v, i, q);
                    at(v, i, p) = vip - s * (viq + tau * vip);
                    at(v, i, q) = viq + s * (vip - tau * viq);
                }
            }
        }
    }

    eigenvalues.resize(n);
    for (int i = 0; i < n; ++i) eigenvalues[i] = at(a, i, i);
}

} // namespace detail

namespace {

void sign_fix(std::vector<double>& u) {
    for (double x : u) {
        if (std::abs(x) > 1e-12) {
            if (x < 0)
                for (double& y : u) y = -y;
            return;
        }
    }
}

EigenModel fit_impl(std::vector<std::vector<double>>& samples, int k,
                    std::vector<std::string>* warnings) {
    const int m = static_cast<int>(samples.size());
    const auto dim = static_cast<int>(samples[0].size());

    EigenModel model;
    model.dim = dim;
    model.mean.assign(dim, 0.0);
    for (const auto& s : samples) {
        if (static_cast<int>(s.size()) != dim)
            throw InvalidArgument("fit_pca: samples have inconsistent dimensions");
        for (int d = 0; d < dim; ++d) model.mean[d] += s[d];
    }
    for (int d = 0; d < dim; ++d) model.mean[d] /= m;

    // center in place: samples become the difference vectors Phi_n
    for (auto& s : samples)
        for (int d = 0; d < dim; ++d) s[d] -= model.mean[d];

    // Gram matrix G_ij = Phi_i . Phi_j / M
    std::vector<double> gram(static_cast<std::size_t>(m) * m);
    for (int i = 0; i < m; ++i) {
        for (int j = i; j < m; ++j) {
            double dot = 0.0;
            const double* a = samples[i].data();
            const double* b = samples[j].data();
            for (int d = 0; d < dim; ++d) dot += a[d] * b[d];
            gram[static_cast<std::size_t>(i) * m + j] = dot / m;
            gram[static_cast<std::size_t>(j) * m + i] = dot / m;
        }
    }

    std::vector<double> eigenvalues, v;
    detail::jacobi_eigen_sym(gram, m, eigenvalues, v);

    double lambda_max = 0.0;
    for (double l : eigenvalues) lambda_max = std::max(lambda_max, l);

    std::vector<int> order(m);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return eigenvalues[a] > eigenvalues[b]; });

    // map Gram eigenvectors back to D-space; drop numerically-null directions
    const double zero_cut = 1e-12 * std::max(lambda_max, 1.0);
    struct Mapped {
        double lambda;
        std::vector<double> u;
    };
    std::vector<Mapped> kept;
    for (int rank = 0; rank < m && static_cast<int>(kept.size()) < k; ++rank) {
        const int e = order[rank];
        const double lambda = eigenvalues[e];
        if (lambda <= zero_cut) break; // the rest are null directions
        std::vector<double> u(dim, 0.0);
        for (int n = 0; n < m; ++n) {
            const double w = v[static_cast<std::size_t>(n) * m + e];
            const double* phi = samples[n].data();
            for (int d = 0; d < dim; ++d) u[d] += w * phi[d];
        }
        double norm = 0.0;
        for (double x : u) norm += x * x;
        norm = std::sqrt(norm);
        if (norm < 1e-12) break;
        for (double& x : u) x /= norm;
        sign_fix(u);
        kept.push_back({std::max(lambda, 0.0), std::move(u)});
    }

    // degenerate eigenvalues: order ties by the sign-fixed first component,
    // ascending
    const double tie_eps = 1e-12 * std::max(lambda_max, 1.0);
    std::stable_sort(kept.begin(), kept.end(), [&](const Mapped& a, const Mapped& b) {
        if (std::abs(a.lambda - b.lambda) > tie_eps) return a.lambda > b.lambda;
        return a.u[0] < b.u[0];
    });

    if (static_cast<int>(kept.size()) < k && warnings)
        warnings->push_back("fit_pca: only " + std::to_string(kept.size()) + " of " +
                            std::to_string(k) + " requested components have nonzero variance");

    model.eigenvalues.reserve(kept.size());
    model.components.reserve(kept.size() * static_cast<std::size_t>(dim));
    for (auto& kc : kept) {
        model.eigenvalues.push_back(kc.lambda);
        model.components.insert(model.components.end(), kc.u.begin(), kc.u.end());
    }
    return model;
}

} // namespace

EigenModel fit_pca(std::vector<std::vector<double>> samples, int k,
                   std::vector<std::string>* warnings) {
    const int m = static_cast<int>(samples.size());
    if (m < 2) throw InvalidArgument("fit_pca requires at least 2 samples");
    const auto dim = static_cast<int>(samples[0].size());
    if (dim < 1) throw InvalidArgument("fit_pca: empty sample vectors");
    if (k < 1 || k > std::min(m - 1, dim))
        throw InvalidArgument("fit_pca: k must satisfy 1 <= k <= min(M-1, D)");
    return fit_impl(samples, k, warnings);
}

EigenModel fit_pca_clamped(std::vector<std::vector<double>> samples, int k,
                           std::vector<std::string>* warnings) {
    const int m = static_cast<int>(samples.size());
    if (m < 2) throw InvalidArgument("fit_pca requires at least 2 samples");
    const auto dim = static_cast<int>(samples[0].size());
    const int limit = std::min(m - 1, dim);
    if (k > limit) {
        if (warnings)
            warnings->push_back("fit_pca: k clamped from " + std::to_string(k) + " to " +
                                std::to_string(limit) + " (only " + std::to_string(m) +
                                " samples)");
        k = limit;
    }
    if (k < 1) throw InvalidArgument("fit_pca: k must be positive");
    return fit_impl(samples, k, warnings);
}

std::vector<double> project(const EigenModel& model, const std::vector<double>& x) {
    if (static_cast<int>(x.size()) != model.dim)
        throw InvalidArgument("project: vector dimension does not match model");
    std::vector<double> centered(model.dim);
    for (int d = 0; d < model.dim; ++d) centered[d] = x[d] - model.mean[d];
    std::vector<double> coeffs(model.k());
    for (int j = 0; j < model.k(); ++j) {
        const double* u = model.component(j);
        double dot = 0.0;
        for (int d = 0; d < model.dim; ++d) dot += u[d] * centered[d];
        coeffs[j] = dot;
    }
    return coeffs;
}

std::vector<double> reconstruct(const EigenModel& model, const std::vector<double>& coeffs) {
    if (static_cast<int>(coeffs.size()) != model.k())
        throw InvalidArgument("reconstruct: coefficient count does not match model");
    std::vector<double> x = model.mean;
    for (int j = 0; j < model.k(); ++j) {
        const double* u = model.component(j);
        for (int d = 0; d < model.dim; ++d) x[d] += coeffs[j] * u[d];
    }
    return x;
}

void save(const EigenModel& model, const std::filesystem::path& path) {
    io::ModelWriter w("eigen", 1);
    w.header()["dim"] = model.dim;
    w.header()["k"] = model.k();
    w.header()["width"] = model.width;
    w.header()["height"] = model.height;
    w.add_f64("mean", model.mean);
    w.add_f64("components", model.components);
    w.add_f64("eigenvalues", model.eigenvalues);
    w.save(path);
}

EigenModel load(const std::filesystem::path& path) {
    auto r = io::ModelReader::open(path, "eigen", 1);
    EigenModel model;
    model.dim = r.header().at("dim").get<int>();
    model.width = r.header().at("width").get<int>();
    model.height = r.header().at("height").get<int>();
    model.mean = r.read_f64("mean");
    model.components = r.read_f64("components");
    model.eigenvalues = r.read_f64("eigenvalues");
    if (static_cast<int>(model.mean.size()) != model.dim ||
        model.components.size() != model.eigenvalues.size() * static_cast<std::size_t>(model.dim))
        throw IoError("eigen model '" + path.string() + "' has inconsistent blob sizes");
    return model;
}

} // namespace retina::pca
