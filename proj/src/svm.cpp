#include "retina/svm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <list>
#include <unordered_map>

#include "retina/error.hpp"
#include "retina/model_io.hpp"
#include "retina/rng.hpp"

namespace retina::svm {

std::string kernel_name(KernelKind k) {
    return k == KernelKind::kRbf ? "rbf" : "polynomial";
}

KernelKind kernel_from_name(const std::string& name) {
    if (name == "rbf") return KernelKind::kRbf;
    if (name == "polynomial" || name == "poly") return KernelKind::kPolynomial;
    throw InvalidArgument("unknown kernel '" + name + "' (want rbf or polynomial)");
}

double kernel_eval(const KernelSpec& k, std::span<const double> x, std::span<const double> z) {
    if (x.size() != z.size()) throw InvalidArgument("kernel_eval: dimension mismatch");
    if (!(k.gamma > 0)) throw InvalidArgument("kernel gamma must be positive");
    if (k.kind == KernelKind::kRbf) {
        double d2 = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double d = x[i] - z[i];
            d2 += d * d;
        }
        return std::exp(-k.gamma * d2);
    }
    if (k.degree < 1) throw InvalidArgument("polynomial degree must be >= 1");
    double dot = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) dot += x[i] * z[i];
    return std::pow(k.gamma * dot + k.coef0, k.degree);
}

namespace {

// Gram values for the solver: a full matrix up to 4096 points, a row-wise
// LRU cache beyond that.
class KernelCache {
public:
    KernelCache(const std::vector<std::vector<double>>& x, const KernelSpec& kernel)
        : x_(x), kernel_(kernel), n_(static_cast<int>(x.size())) {
        if (n_ <= kFullLimit) {
            full_.resize(static_cast<std::size_t>(n_) * n_);
            for (int i = 0; i < n_; ++i)
                for (int j = i; j < n_; ++j) {
                    const double v = kernel_eval(kernel_, x_[i], x_[j]);
                    if (!std::isfinite(v)) throw InvalidArgument("non-finite kernel value");
                    full_[static_cast<std::size_t>(i) * n_ + j] = v;
                    full_[static_cast<std::size_t>(j) * n_ + i] = v;
                }
        } else {
            capacity_ = std::max<std::size_t>(64, (std::size_t{1} << 26) / (sizeof(double) * n_));
        }
    }

    const double* row(int i) {
        if (!full_.empty()) return full_.data() + static_cast<std::size_t>(i) * n_;
        if (auto it = rows_.find(i); it != rows_.end()) {
            lru_.splice(lru_.begin(), lru_, it->second.second);
            return it->second.first.data();
        }
        if (rows_.size() >= capacity_) {
            rows_.erase(lru_.back());
            lru_.pop_back();
        }
        std::vector<double> r(n_);
        for (int j = 0; j < n_; ++j) r[j] = kernel_eval(kernel_, x_[i], x_[j]);
        lru_.push_front(i);
        auto [it, inserted] = rows_.emplace(i, std::make_pair(std::move(r), lru_.begin()));
        return it->second.first.data();
    }

    double at(int i, int j) { return row(i)[j]; }

private:
    static constexpr int kFullLimit = 4096;

    const std::vector<std::vector<double>>& x_;
    KernelSpec kernel_;
    int n_;
    std::vector<double> full_;
    std::size_t capacity_ = 0;
    std::unordered_map<int, std::pair<std::vector<double>, std::list<int>::iterator>> rows_;
    std::list<int> lru_;
};

struct Smo {
    const std::vector<std::vector<double>>& x;
    const std::vector<int>& y;
    TrainParams params;
    KernelCache cache;
    Rng rng;
    int n;
    std::vector<double> alpha;
    std::vector<double> fval; // f(x_i) under the current alpha and bias
    double bias = 0.0;

    Smo(const std::vector<std::vector<double>>& xs, const std::vector<int>& ys,
        const KernelSpec& kernel, const TrainParams& p)
        : x(xs), y(ys), params(p), cache(xs, kernel), rng(p.seed),
          n(static_cast<int>(xs.size())), alpha(xs.size(), 0.0), fval(xs.size(), 0.0) {}

    bool take_step(int i, int j) {
        if (i == j) return false;
        const double ai_old = alpha[i], aj_old = alpha[j];
        const double ei = fval[i] - y[i], ej = fval[j] - y[j];
        const double s = y[i] * y[j];
        const double c = params.C;

        double lo, hi;
        if (y[i] != y[j]) {
            lo = std::max(0.0, aj_old - ai_old);
            hi = std::min(c, c + aj_old - ai_old);
        } else {
            lo = std::max(0.0, ai_old + aj_old - c);
            hi = std::min(c, ai_old + aj_old);
        }
        if (lo >= hi) return false;

        const double kii = cache.at(i, i), kjj = cache.at(j, j), kij = cache.at(i, j);
        const double eta = kii + kjj - 2.0 * kij;

        double aj_new;
        if (eta > 0) {
            aj_new = aj_old + y[j] * (ei - ej) / eta;
            aj_new = std::clamp(aj_new, lo, hi);
        } else {
            // flat or convex along this direction: the constrained dual is
            // maximized at an endpoint. Compare the objective increments
            // dW(a) = W'(aj_old)(a - aj_old) - eta/2 (a - aj_old)^2.
            const double slope = y[j] * (ei - ej);
            const double dlo = lo - aj_old, dhi = hi - aj_old;
            const double gain_lo = slope * dlo - 0.5 * eta * dlo * dlo;
            const double gain_hi = slope * dhi - 0.5 * eta * dhi * dhi;
            if (gain_lo > gain_hi + 1e-12)
                aj_new = lo;
            else if (gain_hi > gain_lo + 1e-12)
                aj_new = hi;
            else
                return false;
        }

        if (std::abs(aj_new - aj_old) < 1e-12 * (aj_new + aj_old + 1e-12)) return false;
        const double ai_new = ai_old + s * (aj_old - aj_new);

        // Platt's bias update
        const double b_old = bias;
        const double b1 = bias - ei - y[i] * (ai_new - ai_old) * kii - y[j] * (aj_new - aj_old) * kij;
        const double b2 = bias - ej - y[i] * (ai_new - ai_old) * kij - y[j] * (aj_new - aj_old) * kjj;
        const bool i_free = ai_new > 0 && ai_new < c;
        const bool j_free = aj_new > 0 && aj_new < c;
        if (i_free)
            bias = b1;
        else if (j_free)
            bias = b2;
        else
            bias = (b1 + b2) / 2.0;

        alpha[i] = ai_new;
        alpha[j] = aj_new;

        const double di = y[i] * (ai_new - ai_old), dj = y[j] * (aj_new - aj_old);
        const double db = bias - b_old;
        const double* row_i = cache.row(i);
        const double* row_j = cache.row(j);
        for (int k = 0; k < n; ++k) fval[k] += di * row_i[k] + dj * row_j[k] + db;
        return true;
    }

    bool examine(int i) {
        const double ei = fval[i] - y[i];
        const double r = ei * y[i];
        const bool violates = (r < -params.tol && alpha[i] < params.C) ||
                              (r > params.tol && alpha[i] > 0);
        if (!violates) return false;

        // partner maximizing |E_i - E_j|, seeded-random tie-breaking
        double best = -1.0;
        std::vector<int> best_js;
        for (int j = 0; j < n; ++j) {
            if (j == i) continue;
            const double gap = std::abs(ei - (fval[j] - y[j]));
            if (gap > best + 1e-15) {
                best = gap;
                best_js.assign(1, j);
            } else if (gap >= best - 1e-15) {
                best_js.push_back(j);
            }
        }
        if (!best_js.empty()) {
            const int j = best_js[rng.next_below(best_js.size())];
            if (take_step(i, j)) return true;
        }

        // fall back to a seeded-random scan
        std::vector<int> order(n);
        for (int j = 0; j < n; ++j) order[j] = j;
        rng.shuffle(order);
        for (int j : order)
            if (j != i && take_step(i, j)) return true;
        return false;
    }

    void solve() {
        int passes = 0;
        bool examine_all = true;
        int num_changed = 1;
        while (num_changed > 0 || examine_all) {
            if (++passes > params.max_passes) break;
            num_changed = 0;
            if (examine_all) {
                for (int i = 0; i < n; ++i) num_changed += examine(i);
            } else {
                for (int i = 0; i < n; ++i)
                    if (alpha[i] > 0 && alpha[i] < params.C) num_changed += examine(i);
            }
            if (examine_all)
                examine_all = false;
            else if (num_changed == 0)
                examine_all = true;
        }
    }

    // g_i = f_i without the bias term
    double g(int i) const { return fval[i] - bias; }

    // final bias per the contract: mean over free SVs, else the midpoint of
    // the KKT-derived interval
    double final_bias() {
        double sum = 0.0;
        int free_count = 0;
        const double c = params.C;
        for (int i = 0; i < n; ++i) {
            if (alpha[i] > 1e-10 * c && alpha[i] < c * (1.0 - 1e-10)) {
                sum += y[i] - g(i);
                ++free_count;
            }
        }
        if (free_count > 0) return sum / free_count;

        double lower = -std::numeric_limits<double>::infinity();
        double upper = std::numeric_limits<double>::infinity();
        for (int i = 0; i < n; ++i) {
            const double cand = y[i] - g(i);
            const bool at_zero = alpha[i] <= 1e-10 * c;
            if ((y[i] > 0 && at_zero) || (y[i] < 0 && !at_zero))
                lower = std::max(lower, cand);
            else
                upper = std::min(upper, cand);
        }
        if (!std::isfinite(lower)) return upper;
        if (!std::isfinite(upper)) return lower;
        return (lower + upper) / 2.0;
    }

    double dual_objective() {
        double obj = 0.0;
        for (int i = 0; i < n; ++i) {
            if (alpha[i] == 0.0) continue;
            obj += alpha[i];
            const double* row_i = cache.row(i);
            double acc = 0.0;
            for (int j = 0; j < n; ++j) acc += alpha[j] * y[j] * row_i[j];
            obj -= 0.5 * alpha[i] * y[i] * acc;
        }
        return obj;
    }
};

} // namespace

BinarySvm smo_train(const std::vector<std::vector<double>>& x, const std::vector<int>& y,
                    const KernelSpec& kernel, const TrainParams& params,
                    SmoDiagnostics* diagnostics) {
    if (x.size() < 2 || x.size() != y.size())
        throw InvalidArgument("smo_train requires at least 2 labeled samples");
    if (!(params.C > 0) || !(params.tol > 0))
        throw InvalidArgument("smo_train: C and tol must be positive");
    bool has_pos = false, has_neg = false;
    for (int v : y) {
        if (v == 1)
            has_pos = true;
        else if (v == -1)
            has_neg = true;
        else
            throw InvalidArgument("smo_train labels must be -1 or +1");
    }
    if (!has_pos || !has_neg) throw InvalidArgument("smo_train requires both classes present");

    Smo smo(x, y, kernel, params);
    smo.solve();

    BinarySvm model;
    model.kernel = kernel;
    model.bias = smo.final_bias();
    for (int i = 0; i < smo.n; ++i) {
        if (smo.alpha[i] > 1e-12) {
            model.support_vectors.push_back(x[i]);
            model.dual_coefs.push_back(smo.alpha[i] * y[i]);
        }
    }

    if (diagnostics) {
        diagnostics->alpha = smo.alpha;
        diagnostics->bias = model.bias;
        diagnostics->dual_objective = smo.dual_objective();
        double worst = 0.0;
        for (int i = 0; i < smo.n; ++i) {
            const double margin = y[i] * (smo.g(i) + model.bias);
            if (smo.alpha[i] <= 1e-10 * params.C)
                worst = std::max(worst, 1.0 - margin); // want margin >= 1
            else if (smo.alpha[i] >= params.C * (1.0 - 1e-10))
                worst = std::max(worst, margin - 1.0); // want margin <= 1
            else
                worst = std::max(worst, std::abs(margin - 1.0));
        }
        diagnostics->max_kkt_violation = std::max(0.0, worst);
    }
    return model;
}

double decision(const BinarySvm& m, std::span<const double> x) {
    double f = m.bias;
    for (std::size_t i = 0; i < m.support_vectors.size(); ++i)
        f += m.dual_coefs[i] * kernel_eval(m.kernel, m.support_vectors[i], x);
    return f;
}

double hinge_objective(const BinarySvm& m, const std::vector<std::vector<double>>& x,
                       const std::vector<int>& y, double lambda) {
    if (x.size() != y.size() || x.empty())
        throw InvalidArgument("hinge_objective: bad inputs");
    double hinge = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i)
        hinge += std::max(0.0, 1.0 - y[i] * decision(m, x[i]));
    hinge /= static_cast<double>(x.size());

    double w2 = 0.0;
    for (std::size_t i = 0; i < m.support_vectors.size(); ++i)
        for (std::size_t j = 0; j < m.support_vectors.size(); ++j)
            w2 += m.dual_coefs[i] * m.dual_coefs[j] *
                  kernel_eval(m.kernel, m.support_vectors[i], m.support_vectors[j]);
    return hinge + lambda * w2;
}

std::vector<double> MultiSvm::standardize(std::span<const double> x) const {
    if (x.size() != feature_mean.size())
        throw InvalidArgument("MultiSvm: feature dimension mismatch");
    std::vector<double> out(x.size());
    for (std::size_t d = 0; d < x.size(); ++d)
        out[d] = (x[d] - feature_mean[d]) * feature_scale[d];
    return out;
}

MultiSvm ovo_train(const std::vector<std::vector<double>>& features,
                   const std::vector<int>& labels, const std::vector<std::string>& classes,
                   KernelSpec kernel, const TrainParams& params) {
    const int num_classes = static_cast<int>(classes.size());
    if (num_classes < 2) throw InvalidArgument("ovo_train requires at least 2 classes");
    if (features.size() != labels.size() || features.empty())
        throw InvalidArgument("ovo_train: features/labels mismatch");
    const auto dim = features[0].size();

    std::vector<int> per_class(num_classes, 0);
    for (int l : labels) {
        if (l < 0 || l >= num_classes) throw InvalidArgument("ovo_train: label out of range");
        ++per_class[l];
    }
    for (int c = 0; c < num_classes; ++c)
        if (per_class[c] == 0)
            throw InvalidArgument("ovo_train: class '" + classes[c] + "' absent from training data");

    if (kernel.gamma <= 0) kernel.gamma = 1.0 / static_cast<double>(dim); // libsvm-style default

    MultiSvm model;
    model.classes = classes;
    model.feature_mean.assign(dim, 0.0);
    model.feature_scale.assign(dim, 0.0);
    for (const auto& f : features) {
        if (f.size() != dim) throw InvalidArgument("ovo_train: inconsistent feature dimensions");
        for (std::size_t d = 0; d < dim; ++d) model.feature_mean[d] += f[d];
    }
    for (std::size_t d = 0; d < dim; ++d) model.feature_mean[d] /= static_cast<double>(features.size());
    for (const auto& f : features)
        for (std::size_t d = 0; d < dim; ++d) {
            const double c = f[d] - model.feature_mean[d];
            model.feature_scale[d] += c * c;
        }
    for (std::size_t d = 0; d < dim; ++d) {
        const double stddev = std::sqrt(model.feature_scale[d] / static_cast<double>(features.size()));
        model.feature_scale[d] = stddev > 1e-12 ? 1.0 / stddev : 0.0;
    }

    std::vector<std::vector<double>> standardized(features.size());
    for (std::size_t i = 0; i < features.size(); ++i)
        standardized[i] = model.standardize(features[i]);

    const Rng seeder(params.seed);
    int pair_index = 0;
    for (int a = 0; a < num_classes; ++a) {
        for (int b = a + 1; b < num_classes; ++b, ++pair_index) {
            std::vector<std::vector<double>> xs;
            std::vector<int> ys;
            for (std::size_t i = 0; i < standardized.size(); ++i) {
                if (labels[i] == a) {
                    xs.push_back(standardized[i]);
                    ys.push_back(-1);
                } else if (labels[i] == b) {
                    xs.push_back(standardized[i]);
                    ys.push_back(+1);
                }
            }
            TrainParams pair_params = params;
            pair_params.seed = seeder.derive("ovo-pair", static_cast<std::uint64_t>(pair_index))
                                   .next_u64();
            model.machines.push_back({a, b, smo_train(xs, ys, kernel, pair_params)});
        }
    }
    return model;
}

std::vector<int> ovo_votes(const MultiSvm& m, std::span<const double> x) {
    const std::vector<double> z = m.standardize(x);
    std::vector<int> votes(m.num_classes(), 0);
    for (const auto& pm : m.machines) {
        const double f = decision(pm.machine, z);
        ++votes[f > 0 ? pm.class_b : pm.class_a]; // f == 0 votes for the lower index
    }
    return votes;
}

int ovo_predict(const MultiSvm& m, std::span<const double> x) {
    const std::vector<int> votes = ovo_votes(m, x);
    int best = 0;
    for (int c = 1; c < static_cast<int>(votes.size()); ++c)
        if (votes[c] > votes[best]) best = c;
    return best;
}

void save(const MultiSvm& m, const std::filesystem::path& path) {
    io::ModelWriter w("multisvm", 1);
    w.header()["classes"] = m.classes;
    if (!m.machines.empty()) {
        const KernelSpec& k = m.machines.front().machine.kernel;
        w.header()["kernel"] = {{"kind", kernel_name(k.kind)},
                                {"gamma", k.gamma},
                                {"degree", k.degree},
                                {"coef0", k.coef0}};
    }
    w.header()["dim"] = m.feature_mean.size();
    auto machines_json = nlohmann::ordered_json::array();
    for (const auto& pm : m.machines)
        machines_json.push_back({{"a", pm.class_a},
                                 {"b", pm.class_b},
                                 {"num_sv", pm.machine.support_vectors.size()}});
    w.header()["machines"] = machines_json;

    w.add_f64("feature_mean", m.feature_mean);
    w.add_f64("feature_scale", m.feature_scale);
    for (std::size_t i = 0; i < m.machines.size(); ++i) {
        const auto& pm = m.machines[i];
        std::vector<double> flat;
        flat.reserve(pm.machine.support_vectors.size() * m.feature_mean.size());
        for (const auto& sv : pm.machine.support_vectors)
            flat.insert(flat.end(), sv.begin(), sv.end());
        const std::string tag = "machine" + std::to_string(i);
        w.add_f64(tag + ".sv", flat);
        w.add_f64(tag + ".dual_coefs", pm.machine.dual_coefs);
        const double bias[1] = {pm.machine.bias};
        w.add_f64(tag + ".bias", bias);
    }
    w.save(path);
}

MultiSvm load(const std::filesystem::path& path) {
    auto r = io::ModelReader::open(path, "multisvm", 1);
    MultiSvm m;
    m.classes = r.header().at("classes").get<std::vector<std::string>>();
    KernelSpec kernel;
    if (r.header().contains("kernel")) {
        const auto& k = r.header().at("kernel");
        kernel.kind = kernel_from_name(k.at("kind").get<std::string>());
        kernel.gamma = k.at("gamma").get<double>();
        kernel.degree = k.at("degree").get<int>();
        kernel.coef0 = k.at("coef0").get<double>();
    }
    const auto dim = r.header().at("dim").get<std::size_t>();
    m.feature_mean = r.read_f64("feature_mean");
    m.feature_scale = r.read_f64("feature_scale");
    if (m.feature_mean.size() != dim || m.feature_scale.size() != dim)
        throw IoError("svm model '" + path.string() + "' has inconsistent dimensions");

    const auto& machines_json = r.header().at("machines");
    for (std::size_t i = 0; i < machines_json.size(); ++i) {
        MultiSvm::PairMachine pm;
        pm.class_a = machines_json[i].at("a").get<int>();
        pm.class_b = machines_json[i].at("b").get<int>();
        pm.machine.kernel = kernel;
        const auto num_sv = machines_json[i].at("num_sv").get<std::size_t>();
        const std::string tag = "machine" + std::to_string(i);
        const std::vector<double> flat = r.read_f64(tag + ".sv");
        if (flat.size() != num_sv * dim)
            throw IoError("svm model '" + path.string() + "' has a truncated SV blob");
        pm.machine.support_vectors.resize(num_sv);
        for (std::size_t s = 0; s < num_sv; ++s)
            pm.machine.support_vectors[s].assign(flat.begin() + s * dim,
                                                 flat.begin() + (s + 1) * dim);
        pm.machine.dual_coefs = r.read_f64(tag + ".dual_coefs");
        pm.machine.bias = r.read_f64(tag + ".bias").at(0);
        m.machines.push_back(std::move(pm));
    }
    return m;
}

} // namespace retina::svm
