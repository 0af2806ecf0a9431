#include "retina/manifest.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include <json.hpp>

#include "retina/error.hpp"
#include "retina/rng.hpp"

namespace retina {

using ordered_json = nlohmann::ordered_json;

namespace {

constexpr int kManifestSchema = 1;

ordered_json read_json_file(const std::filesystem::path& path, const char* what) {
    std::ifstream in(path);
    if (!in) throw IoError(std::string("cannot open ") + what + ": " + path.string());
    ordered_json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("malformed ") + what + " '" + path.string() + "': " + e.what());
    }
    return j;
}

void write_json_file(const std::filesystem::path& path, const ordered_json& j, const char* what) {
    std::ofstream out(path);
    if (!out) throw IoError(std::string("cannot write ") + what + ": " + path.string());
    out << j.dump(2) << '\n';
}

} // namespace

void Manifest::finalize() {
    std::set<std::string> paths;
    std::set<std::string> labels;
    for (const Entry& e : entries) {
        if (e.path.empty()) throw InvalidArgument("manifest entry with empty path");
        if (e.label.empty()) throw InvalidArgument("manifest entry with empty label: " + e.path);
        if (!paths.insert(e.path).second)
            throw InvalidArgument("duplicate path in manifest: " + e.path);
        labels.insert(e.label);
    }
    class_index.assign(labels.begin(), labels.end()); // std::set iterates sorted
}

int Manifest::class_id(const std::string& label) const {
    const auto it = std::lower_bound(class_index.begin(), class_index.end(), label);
    if (it == class_index.end() || *it != label)
        throw InvalidArgument("label not in manifest class index: " + label);
    return static_cast<int>(it - class_index.begin());
}

int Manifest::label_of(std::size_t entry) const { return class_id(entries.at(entry).label); }

Manifest Manifest::load(const std::filesystem::path& path) {
    const ordered_json j = read_json_file(path, "manifest");
    if (!j.contains("schema_version") || j["schema_version"].get<int>() != kManifestSchema)
        throw IoError("manifest '" + path.string() + "' has missing or unsupported schema_version");
    Manifest m;
    for (const auto& e : j.at("entries")) {
        m.entries.push_back({e.at("path").get<std::string>(), e.at("label").get<std::string>()});
    }
    m.finalize();
    return m;
}

void Manifest::save(const std::filesystem::path& path) const {
    ordered_json j;
    j["schema_version"] = kManifestSchema;
    j["entries"] = ordered_json::array();
    for (const Entry& e : entries) {
        j["entries"].push_back({{"path", e.path}, {"label", e.label}});
    }
    write_json_file(path, j, "manifest");
}

std::filesystem::path Manifest::resolve(const std::filesystem::path& manifest_path,
                                        const std::string& entry_path) {
    const std::filesystem::path p(entry_path);
    if (p.is_absolute()) return p;
    return manifest_path.parent_path() / p;
}

DatasetSplit DatasetSplit::load(const std::filesystem::path& path) {
    const ordered_json j = read_json_file(path, "split");
    DatasetSplit s;
    s.seed = j.at("seed").get<std::uint64_t>();
    s.train = j.at("train").get<std::vector<int>>();
    s.validation = j.at("validation").get<std::vector<int>>();
    s.test = j.at("test").get<std::vector<int>>();
    return s;
}

void DatasetSplit::save(const std::filesystem::path& path) const {
    ordered_json j;
    j["seed"] = seed;
    j["train"] = train;
    j["validation"] = validation;
    j["test"] = test;
    write_json_file(path, j, "split");
}

DatasetSplit split_manifest(const Manifest& m, std::uint64_t seed, const SplitRatios& ratios,
                            std::vector<std::string>* warnings) {
    const double sum = ratios.train + ratios.validation + ratios.test;
    if (ratios.train <= 0 || ratios.validation <= 0 || ratios.test <= 0 ||
        std::abs(sum - 1.0) > 1e-9)
        throw InvalidArgument("split ratios must be positive and sum to 1");

    // per-class index lists, in manifest order
    std::vector<std::vector<int>> by_class(m.class_index.size());
    for (std::size_t i = 0; i < m.entries.size(); ++i)
        by_class[m.class_id(m.entries[i].label)].push_back(static_cast<int>(i));

    const Rng base(seed);
    DatasetSplit split;
    split.seed = seed;
    for (std::size_t c = 0; c < by_class.size(); ++c) {
        std::vector<int>& idx = by_class[c];
        if (idx.size() < 3) {
            if (warnings)
                warnings->push_back("class '" + m.class_index[c] + "' has fewer than 3 entries; "
                                    "placed entirely in train");
            split.train.insert(split.train.end(), idx.begin(), idx.end());
            continue;
        }
        Rng rng = base.derive("split-class", c);
        rng.shuffle(idx);
        const auto n = static_cast<double>(idx.size());
        auto n_val = static_cast<std::size_t>(std::floor(ratios.validation * n + 0.5));
        auto n_test = static_cast<std::size_t>(std::floor(ratios.test * n + 0.5));
        n_val = std::min(n_val, idx.size());
        n_test = std::min(n_test, idx.size() - n_val);
        // train takes the rounding remainder
        const std::size_t n_train = idx.size() - n_val - n_test;
        split.train.insert(split.train.end(), idx.begin(), idx.begin() + n_train);
        split.validation.insert(split.validation.end(), idx.begin() + n_train,
                                idx.begin() + n_train + n_val);
        split.test.insert(split.test.end(), idx.begin() + n_train + n_val, idx.end());
    }
    return split;
}

} // namespace retina
