#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace retina::io {

// Model container: one line of JSON (the header) terminated by '\n', followed
// by the concatenated little-endian blobs declared in header["blobs"]. See
// docs/FORMATS.md for the byte layout of each model kind.
class ModelWriter {
public:
    explicit ModelWriter(std::string format, int version);

    nlohmann::ordered_json& header() { return header_; }

    void add_f64(const std::string& name, std::span<const double> values);
    void add_f32(const std::string& name, std::span<const double> values); // stored as float32
    void add_i32(const std::string& name, std::span<const std::int32_t> values);

    void save(const std::filesystem::path& path) const;

private:
    nlohmann::ordered_json header_;
    std::vector<char> payload_;
};

class ModelReader {
public:
    // Throws IoError if the file is missing, the header is malformed, or the
    // format/version do not match.
    static ModelReader open(const std::filesystem::path& path, const std::string& expected_format,
                            int expected_version);

    const nlohmann::ordered_json& header() const { return header_; }

    // Blobs must be consumed in declaration order; name and type are checked.
    std::vector<double> read_f64(const std::string& name);
    std::vector<double> read_f32(const std::string& name); // widened to double
    std::vector<std::int32_t> read_i32(const std::string& name);

private:
    nlohmann::ordered_json header_;
    std::vector<char> payload_;
    std::size_t payload_offset_ = 0;
    std::size_t blob_index_ = 0;
    std::string path_;

    const nlohmann::ordered_json& next_blob(const std::string& name, const char* dtype);
};

} // namespace retina::io
