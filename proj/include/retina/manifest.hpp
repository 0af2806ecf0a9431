#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace retina {

// Dataset manifest: image paths with class label strings. Class ids are
// dense 0..C-1 in lexicographic label order and are derived, not stored.
struct Manifest {
    struct Entry {
        std::string path;  // relative to the manifest file's directory
        std::string label;
    };

    std::vector<Entry> entries;
    std::vector<std::string> class_index; // sorted unique labels

    // Rebuilds class_index and validates: no duplicate paths, no empty labels.
    void finalize();

    int class_id(const std::string& label) const;
    int label_of(std::size_t entry) const; // dense class id of entries[entry]

    static Manifest load(const std::filesystem::path& path);
    void save(const std::filesystem::path& path) const;

    // entry path resolved against the manifest's directory
    static std::filesystem::path resolve(const std::filesystem::path& manifest_path,
                                         const std::string& entry_path);
};

struct SplitRatios {
    double train = 0.7;
    double validation = 0.1;
    double test = 0.2;
};

// Disjoint, exhaustive manifest index lists; regeneration with the same seed
// is bit-identical.
struct DatasetSplit {
    std::uint64_t seed = 0;
    std::vector<int> train;
    std::vector<int> validation;
    std::vector<int> test;

    static DatasetSplit load(const std::filesystem::path& path);
    void save(const std::filesystem::path& path) const;
};

// Stratified split: each class is shuffled by a seeded generator and cut as
// close to the ratios as integer rounding allows, train taking the remainder.
// Classes with fewer than 3 entries go entirely to train and a warning is
// appended to `warnings` when given.
DatasetSplit split_manifest(const Manifest& m, std::uint64_t seed,
                            const SplitRatios& ratios = SplitRatios{},
                            std::vector<std::string>* warnings = nullptr);

} // namespace retina
