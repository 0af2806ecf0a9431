#include "retina/fusion.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "retina/error.hpp"
#include "retina/imageio.hpp"
#include "retina/rng.hpp"

namespace retina::fusion {

using ordered_json = nlohmann::ordered_json;

std::vector<double> rgb_stream_vector(const StreamConfig& config, const RgbImage& img) {
    const GrayImage gray = resize_bilinear(to_gray(img), config.width, config.height);
    return pca::image_to_vector(enhance::clahe(gray, config.clahe));
}

std::vector<double> unet_stream_vector(const StreamConfig& config, const seg::SegNet& net,
                                       const RgbImage& img) {
    const GrayImage gray = resize_bilinear(to_gray(img), config.width, config.height);
    auto [mask, prob] = seg::predict_mask(net, gray);
    if (!config.use_binary_mask) return pca::image_to_vector(prob);
    std::vector<double> v(mask.pixels.size());
    for (std::size_t i = 0; i < mask.pixels.size(); ++i) v[i] = mask.pixels[i] ? 1.0 : 0.0;
    return v;
}

std::pair<std::vector<double>, std::vector<double>> stream_features(const TwoStreamModel& model,
                                                                    const RgbImage& img) {
    return {pca::project(model.eigen_rgb, rgb_stream_vector(model.config, img)),
            pca::project(model.eigen_unet, unet_stream_vector(model.config, model.segnet, img))};
}

std::vector<double> fused_scores(const std::vector<int>& votes_a, const std::vector<int>& votes_b,
                                 double w) {
    if (votes_a.size() != votes_b.size() || votes_a.empty())
        throw InvalidArgument("fused_scores: vote vector class counts differ");
    if (!(w >= 0.0 && w <= 1.0)) throw InvalidArgument("fused_scores: w must be in [0, 1]");
    const auto c = static_cast<double>(votes_a.size());
    const double total = c * (c - 1.0) / 2.0;
    std::vector<double> scores(votes_a.size());
    for (std::size_t i = 0; i < votes_a.size(); ++i)
        scores[i] = w * votes_a[i] / total + (1.0 - w) * votes_b[i] / total;
    return scores;
}

namespace {

int argmax_lowest(const std::vector<double>& scores) {
    int best = 0;
    for (int i = 1; i < static_cast<int>(scores.size()); ++i)
        if (scores[i] > scores[best]) best = i;
    return best;
}

} // namespace

std::pair<int, std::vector<double>> predict(const TwoStreamModel& model, const RgbImage& img) {
    const auto [feat_rgb, feat_unet] = stream_features(model, img);
    const std::vector<int> votes_a = svm::ovo_votes(model.svm_rgb, feat_rgb);
    const std::vector<int> votes_b = svm::ovo_votes(model.svm_unet, feat_unet);
    std::vector<double> scores = fused_scores(votes_a, votes_b, model.hybrid_w);
    return {argmax_lowest(scores), std::move(scores)};
}

const Bundle::KernelSvms& Bundle::kernel_svms(svm::KernelKind kind) const {
    const auto it = svms.find(kind);
    if (it == svms.end())
        throw InvalidArgument("bundle has no SVMs for kernel " + svm::kernel_name(kind));
    return it->second;
}

TwoStreamModel Bundle::model(svm::KernelKind kind) const {
    const KernelSvms& pair = kernel_svms(kind);
    TwoStreamModel m;
    m.config = config;
    m.segnet = segnet;
    m.eigen_rgb = eigen_rgb;
    m.eigen_unet = eigen_unet;
    m.svm_rgb = pair.rgb;
    m.svm_unet = pair.unet;
    m.hybrid_w = hybrid_w;
    return m;
}

void Bundle::save(const std::filesystem::path& dir) const {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create bundle directory: " + dir.string());

    seg::save(segnet, dir / "segnet.seg");
    pca::save(eigen_rgb, dir / "eigen_rgb.eig");
    pca::save(eigen_unet, dir / "eigen_unet.eig");
    ordered_json kernels = ordered_json::array();
    for (const auto& [kind, pair] : svms) {
        const std::string name = svm::kernel_name(kind);
        svm::save(pair.rgb, dir / ("svm_rgb_" + name + ".svm"));
        svm::save(pair.unet, dir / ("svm_unet_" + name + ".svm"));
        kernels.push_back(name);
    }
    split.save(dir / "split.json");

    ordered_json j;
    j["format"] = "two-stream-bundle";
    j["version"] = 1;
    j["width"] = config.width;
    j["height"] = config.height;
    j["clahe"] = {{"tiles_x", config.clahe.tiles_x},
                  {"tiles_y", config.clahe.tiles_y},
                  {"clip_limit", config.clahe.clip_limit}};
    j["k_rgb"] = config.k_rgb;
    j["k_unet"] = config.k_unet;
    j["use_binary_mask"] = config.use_binary_mask;
    j["kernels"] = kernels;
    j["selected_kernel"] = svm::kernel_name(selected_kernel);
    j["hybrid_w"] = hybrid_w;
    j["manifest_checksum"] = manifest_checksum;
    std::ofstream out(dir / "bundle.json");
    if (!out) throw IoError("cannot write bundle.json in " + dir.string());
    out << j.dump(2) << '\n';
}

Bundle Bundle::load(const std::filesystem::path& dir) {
    std::ifstream in(dir / "bundle.json");
    if (!in) throw IoError("not a bundle directory (missing bundle.json): " + dir.string());
    ordered_json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw IoError("malformed bundle.json in '" + dir.string() + "': " + e.what());
    }
    if (j.value("format", "") != "two-stream-bundle" || j.value("version", 0) != 1)
        throw IoError("incompatible bundle format/version in " + dir.string());

    Bundle b;
    b.config.width = j.at("width").get<int>();
    b.config.height = j.at("height").get<int>();
    b.config.clahe.tiles_x = j.at("clahe").at("tiles_x").get<int>();
    b.config.clahe.tiles_y = j.at("clahe").at("tiles_y").get<int>();
    b.config.clahe.clip_limit = j.at("clahe").at("clip_limit").get<double>();
    b.config.k_rgb = j.at("k_rgb").get<int>();
    b.config.k_unet = j.at("k_unet").get<int>();
    b.config.use_binary_mask = j.at("use_binary_mask").get<bool>();
    b.selected_kernel = svm::kernel_from_name(j.at("selected_kernel").get<std::string>());
    b.hybrid_w = j.at("hybrid_w").get<double>();
    b.manifest_checksum = j.value("manifest_checksum", "");

    b.segnet = seg::load(dir / "segnet.seg");
    b.eigen_rgb = pca::load(dir / "eigen_rgb.eig");
    b.eigen_unet = pca::load(dir / "eigen_unet.eig");
    for (const auto& name : j.at("kernels")) {
        const auto kind = svm::kernel_from_name(name.get<std::string>());
        Bundle::KernelSvms pair;
        pair.rgb = svm::load(dir / ("svm_rgb_" + name.get<std::string>() + ".svm"));
        pair.unet = svm::load(dir / ("svm_unet_" + name.get<std::string>() + ".svm"));
        b.svms.emplace(kind, std::move(pair));
    }
    b.split = DatasetSplit::load(dir / "split.json");
    return b;
}

std::string file_checksum(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open file for checksum: " + path.string());
    std::uint64_t h = 0xcbf29ce484222325ULL;
    char buf[4096];
    while (in.read(buf, sizeof buf) || in.gcount() > 0) {
        for (std::streamsize i = 0; i < in.gcount(); ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 0x100000001b3ULL;
        }
    }
    char out[19];
    std::snprintf(out, sizeof out, "%016llx", static_cast<unsigned long long>(h));
    return out;
}

namespace {

RgbImage load_entry(const std::filesystem::path& manifest_path, const Manifest& manifest,
                    int index) {
    return load_image(Manifest::resolve(manifest_path, manifest.entries[index].path));
}

} // namespace

Bundle train_two_stream(const std::filesystem::path& manifest_path, const Manifest& manifest,
                        const seg::SegNet& segnet, const TrainOptions& options,
                        std::vector<std::string>* warnings) {
    if (manifest.class_index.size() < 2)
        throw InvalidArgument("train_two_stream: manifest must contain at least 2 classes");

    Bundle bundle;
    bundle.config = options.config;
    bundle.segnet = segnet;
    bundle.manifest_checksum = file_checksum(manifest_path);
    bundle.split = split_manifest(manifest, options.seed, options.ratios, warnings);
    bundle.hybrid_w = 0.5;
    if (options.kernels.empty()) throw InvalidArgument("train_two_stream: no kernels requested");
    bundle.selected_kernel = options.kernels.front();

    const std::vector<int>& train_idx = bundle.split.train;
    if (train_idx.size() < 2) throw InvalidArgument("train_two_stream: train split too small");

    std::vector<int> labels(train_idx.size());
    for (std::size_t i = 0; i < train_idx.size(); ++i)
        labels[i] = manifest.label_of(train_idx[i]);

    // Stream A: enhancement -> PCA. The sample matrix is freed before the
    // segmentation stream is materialized to keep the peak footprint low.
    std::vector<std::vector<double>> feat_rgb;
    {
        std::vector<std::vector<double>> vectors(train_idx.size());
        for (std::size_t i = 0; i < train_idx.size(); ++i)
            vectors[i] =
                rgb_stream_vector(options.config, load_entry(manifest_path, manifest, train_idx[i]));
        bundle.eigen_rgb = pca::fit_pca_clamped(vectors, options.config.k_rgb, warnings);
        bundle.eigen_rgb.width = options.config.width;
        bundle.eigen_rgb.height = options.config.height;
        feat_rgb.resize(vectors.size());
        for (std::size_t i = 0; i < vectors.size(); ++i)
            feat_rgb[i] = pca::project(bundle.eigen_rgb, vectors[i]);
    }

    // Stream B: segmentation -> PCA.
    std::vector<std::vector<double>> feat_unet;
    {
        std::vector<std::vector<double>> vectors(train_idx.size());
        for (std::size_t i = 0; i < train_idx.size(); ++i)
            vectors[i] = unet_stream_vector(options.config, segnet,
                                            load_entry(manifest_path, manifest, train_idx[i]));
        bundle.eigen_unet = pca::fit_pca_clamped(vectors, options.config.k_unet, warnings);
        bundle.eigen_unet.width = options.config.width;
        bundle.eigen_unet.height = options.config.height;
        feat_unet.resize(vectors.size());
        for (std::size_t i = 0; i < vectors.size(); ++i)
            feat_unet[i] = pca::project(bundle.eigen_unet, vectors[i]);
    }

    const Rng seeder(options.seed);
    for (const auto kind : options.kernels) {
        svm::KernelSpec kernel;
        kernel.kind = kind;
        kernel.gamma = 0.0; // auto: 1/feature-dim
        // homogeneous polynomials on standardized coefficients have a
        // near-diagonal Gram; the inhomogeneous form keeps them usable
        if (kind == svm::KernelKind::kPolynomial) kernel.coef0 = 1.0;
        svm::TrainParams params = options.svm_params;
        Bundle::KernelSvms pair;
        params.seed = seeder.derive("svm-rgb", static_cast<std::uint64_t>(kind)).next_u64();
        pair.rgb = svm::ovo_train(feat_rgb, labels, manifest.class_index, kernel, params);
        params.seed = seeder.derive("svm-unet", static_cast<std::uint64_t>(kind)).next_u64();
        pair.unet = svm::ovo_train(feat_unet, labels, manifest.class_index, kernel, params);
        bundle.svms.emplace(kind, std::move(pair));
    }
    return bundle;
}

VoteTable compute_votes(const Bundle& bundle, const std::filesystem::path& manifest_path,
                        const Manifest& manifest, const std::vector<int>& indices) {
    VoteTable table;
    table.truth.reserve(indices.size());
    for (const auto& [kind, pair] : bundle.svms) {
        table.rgb[kind].reserve(indices.size());
        table.unet[kind].reserve(indices.size());
    }
    for (int idx : indices) {
        const RgbImage img = load_entry(manifest_path, manifest, idx);
        table.truth.push_back(manifest.label_of(idx));
        const std::vector<double> vec_rgb = rgb_stream_vector(bundle.config, img);
        const std::vector<double> vec_unet =
            unet_stream_vector(bundle.config, bundle.segnet, img);
        const std::vector<double> feat_rgb = pca::project(bundle.eigen_rgb, vec_rgb);
        const std::vector<double> feat_unet = pca::project(bundle.eigen_unet, vec_unet);
        for (const auto& [kind, pair] : bundle.svms) {
            table.rgb[kind].push_back(svm::ovo_votes(pair.rgb, feat_rgb));
            table.unet[kind].push_back(svm::ovo_votes(pair.unet, feat_unet));
        }
    }
    return table;
}

namespace {

double fused_accuracy(const VoteTable& table, svm::KernelKind kind, double w) {
    const auto& rgb = table.rgb.at(kind);
    const auto& unet = table.unet.at(kind);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < rgb.size(); ++i) {
        const std::vector<double> scores = fused_scores(rgb[i], unet[i], w);
        if (argmax_lowest(scores) == table.truth[i]) ++correct;
    }
    return rgb.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(rgb.size());
}

} // namespace

std::vector<RatioSweepRow> sweep_ratio(const Bundle& bundle,
                                       const std::filesystem::path& manifest_path,
                                       const Manifest& manifest,
                                       const std::vector<double>& ratio_grid,
                                       const std::vector<svm::KernelKind>& kernels) {
    if (ratio_grid.empty()) throw InvalidArgument("sweep_ratio: empty ratio grid");
    if (bundle.split.validation.empty())
        throw InvalidArgument("sweep_ratio: bundle has an empty validation split");

    const VoteTable val = compute_votes(bundle, manifest_path, manifest, bundle.split.validation);
    const VoteTable test = compute_votes(bundle, manifest_path, manifest, bundle.split.test);

    std::vector<RatioSweepRow> rows;
    for (const auto kind : kernels) {
        if (!bundle.svms.contains(kind))
            throw InvalidArgument("sweep_ratio: bundle has no " + svm::kernel_name(kind) +
                                  " machines");
        for (const double w : ratio_grid) {
            RatioSweepRow row;
            row.hybrid_w = w;
            row.kernel = kind;
            row.validation_accuracy = fused_accuracy(val, kind, w);
            row.test_accuracy = bundle.split.test.empty() ? 0.0 : fused_accuracy(test, kind, w);
            rows.push_back(row);
        }
    }
    return rows;
}

std::size_t best_row(const std::vector<RatioSweepRow>& rows) {
    if (rows.empty()) throw InvalidArgument("best_row: no sweep rows");
    std::size_t best = 0;
    for (std::size_t i = 1; i < rows.size(); ++i)
        if (rows[i].validation_accuracy > rows[best].validation_accuracy) best = i;
    return best;
}

ClassifierEvaluation evaluate_classifier(const Bundle& bundle,
                                         const std::filesystem::path& manifest_path,
                                         const Manifest& manifest,
                                         const std::vector<int>& indices) {
    if (indices.empty()) throw InvalidArgument("evaluate_classifier: empty index set");
    const VoteTable table = compute_votes(bundle, manifest_path, manifest, indices);
    ClassifierEvaluation eval;
    eval.truth = table.truth;
    const auto& rgb = table.rgb.at(bundle.selected_kernel);
    const auto& unet = table.unet.at(bundle.selected_kernel);
    for (std::size_t i = 0; i < rgb.size(); ++i)
        eval.predictions.push_back(
            argmax_lowest(fused_scores(rgb[i], unet[i], bundle.hybrid_w)));
    eval.accuracy = metrics::accuracy(eval.predictions, eval.truth);
    eval.confusion = metrics::confusion(eval.predictions, eval.truth,
                                        static_cast<int>(manifest.class_index.size()));
    return eval;
}

} // namespace retina::fusion
