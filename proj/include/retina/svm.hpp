#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace retina::svm {

enum class KernelKind { kRbf, kPolynomial };

std::string kernel_name(KernelKind k);
KernelKind kernel_from_name(const std::string& name);

struct KernelSpec {
    KernelKind kind = KernelKind::kRbf;
    double gamma = 1.0;
    int degree = 3;     // polynomial only
    double coef0 = 0.0; // polynomial only
};

// rbf: exp(-gamma |x - z|^2); polynomial: (gamma x.z + coef0)^degree
double kernel_eval(const KernelSpec& k, std::span<const double> x, std::span<const double> z);

struct TrainParams {
    double C = 1.0;
    double tol = 1e-3;     // KKT tolerance
    int max_passes = 2000; // cap on examine-all passes
    std::uint64_t seed = 0;
};

// Binary kernel machine. dual_coefs hold alpha_i * y_i for the retained
// support vectors, so f(x) = sum_i dual_coefs[i] K(sv_i, x) + bias.
struct BinarySvm {
    std::vector<std::vector<double>> support_vectors;
    std::vector<double> dual_coefs;
    double bias = 0.0;
    KernelSpec kernel;
};

// Per-fit audit values, filled on request by smo_train.
struct SmoDiagnostics {
    std::vector<double> alpha; // all training points, zeros included
    double bias = 0.0;
    double dual_objective = 0.0;
    double max_kkt_violation = 0.0;
};

// SMO on the dual: maximize sum(alpha) - 1/2 sum_ij alpha_i alpha_j y_i y_j K_ij
// subject to 0 <= alpha <= C and sum(alpha_i y_i) = 0. Outer loop takes the
// first KKT violator; the partner maximizes |E_i - E_j| with seeded-random
// tie-breaking. The bias is the mean over free support vectors, falling back
// to the midpoint of the bound-derived interval.
BinarySvm smo_train(const std::vector<std::vector<double>>& x, const std::vector<int>& y,
                    const KernelSpec& kernel, const TrainParams& params,
                    SmoDiagnostics* diagnostics = nullptr);

double decision(const BinarySvm& m, std::span<const double> x);

// Primal value of the hinge objective, with |w|^2 evaluated in kernel space.
// Reported for audit; the paper's lambda maps to C as lambda = 1/(2 n C).
double hinge_objective(const BinarySvm& m, const std::vector<std::vector<double>>& x,
                       const std::vector<int>& y, double lambda);

// One-vs-one multi-class set: one machine per unordered class pair (a < b),
// class a mapped to -1 and b to +1. Features are standardized per dimension
// with constants estimated on the training data and stored in the model.
struct MultiSvm {
    struct PairMachine {
        int class_a = 0;
        int class_b = 0;
        BinarySvm machine;
    };

    std::vector<std::string> classes;
    std::vector<PairMachine> machines; // C(C-1)/2, pairs in lexicographic order
    std::vector<double> feature_mean;
    std::vector<double> feature_scale; // 1/stddev; 0 for constant dimensions

    int num_classes() const { return static_cast<int>(classes.size()); }
    std::vector<double> standardize(std::span<const double> x) const;
};

// labels are dense ids indexing `classes`; every class must appear.
MultiSvm ovo_train(const std::vector<std::vector<double>>& features,
                   const std::vector<int>& labels, const std::vector<std::string>& classes,
                   KernelSpec kernel, const TrainParams& params);

// One vote per pairwise machine; a decision value of exactly 0 votes for the
// lower class index. Counts always sum to C(C-1)/2.
std::vector<int> ovo_votes(const MultiSvm& m, std::span<const double> x);

// argmax of the votes, ties resolved to the lowest class id
int ovo_predict(const MultiSvm& m, std::span<const double> x);

void save(const MultiSvm& m, const std::filesystem::path& path);
MultiSvm load(const std::filesystem::path& path);

} // namespace retina::svm
