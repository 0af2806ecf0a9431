#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "retina/image.hpp"

namespace retina::pca {

// Eigenface model: sample mean, top-k orthonormal components and their
// eigenvalues (descending, 1/M covariance normalization).
struct EigenModel {
    int dim = 0;    // flattened pixel count D
    int width = 0;  // canonical image dims; 0 when fitted on raw vectors
    int height = 0;
    std::vector<double> mean;        // D
    std::vector<double> components;  // k x D, row-major
    std::vector<double> eigenvalues; // k, nonincreasing

    int k() const { return static_cast<int>(eigenvalues.size()); }
    const double* component(int j) const { return components.data() + static_cast<std::size_t>(j) * dim; }
};

// Row-major flatten; dimension bookkeeping is the caller's job.
std::vector<double> image_to_vector(const GrayImage& img);
GrayImage vector_to_image(const std::vector<double>& v, int width, int height);

// Snapshot-method PCA: eigen-decomposition of the M x M Gram matrix
// (1/M) Phi_i . Phi_j, eigenvectors mapped back to D-space, unit-normalized,
// sign-fixed so the first entry larger than 1e-12 in magnitude is positive.
// Components whose eigenvalue is numerically zero are dropped (with a
// warning); all samples identical therefore yields zero components.
// Requires M >= 2 and 1 <= k <= min(M-1, D).
EigenModel fit_pca(std::vector<std::vector<double>> samples, int k,
                   std::vector<std::string>* warnings = nullptr);

// Sparse-data variant: k above min(M-1, D) is clamped down with a warning
// instead of rejected.
EigenModel fit_pca_clamped(std::vector<std::vector<double>> samples, int k,
                           std::vector<std::string>* warnings = nullptr);

// Coefficients c_j = u_j . (x - mean).
std::vector<double> project(const EigenModel& model, const std::vector<double>& x);

// mean + sum_j c_j u_j.
std::vector<double> reconstruct(const EigenModel& model, const std::vector<double>& coeffs);

void save(const EigenModel& model, const std::filesystem::path& path);
EigenModel load(const std::filesystem::path& path);

namespace detail {

// Cyclic Jacobi for symmetric matrices: sweeps until the off-diagonal
// Frobenius norm falls below 1e-12 of the initial matrix norm, capped at 100
// sweeps. Eigenvectors come back as columns of V.
void jacobi_eigen_sym(std::vector<double>& a, int n, std::vector<double>& eigenvalues,
                      std::vector<double>& v);

} // namespace detail

} // namespace retina::pca
