#include "retina/model_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "retina/error.hpp"

static_assert(std::endian::native == std::endian::little,
              "model files are little-endian; big-endian hosts are unsupported");

namespace retina::io {

using ordered_json = nlohmann::ordered_json;

ModelWriter::ModelWriter(std::string format, int version) {
    header_["format"] = std::move(format);
    header_["version"] = version;
    header_["blobs"] = ordered_json::array();
}

namespace {

template <typename T>
void append_raw(std::vector<char>& payload, const T* data, std::size_t count) {
    const auto* bytes = reinterpret_cast<const char*>(data);
    payload.insert(payload.end(), bytes, bytes + count * sizeof(T));
}

} // namespace

void ModelWriter::add_f64(const std::string& name, std::span<const double> values) {
    header_["blobs"].push_back({{"name", name}, {"dtype", "f64"}, {"count", values.size()}});
    append_raw(payload_, values.data(), values.size());
}

void ModelWriter::add_f32(const std::string& name, std::span<const double> values) {
    header_["blobs"].push_back({{"name", name}, {"dtype", "f32"}, {"count", values.size()}});
    std::vector<float> narrowed(values.begin(), values.end());
    append_raw(payload_, narrowed.data(), narrowed.size());
}

void ModelWriter::add_i32(const std::string& name, std::span<const std::int32_t> values) {
    header_["blobs"].push_back({{"name", name}, {"dtype", "i32"}, {"count", values.size()}});
    append_raw(payload_, values.data(), values.size());
}

void ModelWriter::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write model file: " + path.string());
    out << header_.dump() << '\n';
    out.write(payload_.data(), static_cast<std::streamsize>(payload_.size()));
    if (!out) throw IoError("short write on model file: " + path.string());
}

ModelReader ModelReader::open(const std::filesystem::path& path,
                              const std::string& expected_format, int expected_version) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open model file: " + path.string());

    std::string header_line;
    if (!std::getline(in, header_line))
        throw IoError("model file missing header line: " + path.string());

    ModelReader r;
    r.path_ = path.string();
    try {
        r.header_ = ordered_json::parse(header_line);
    } catch (const nlohmann::json::exception& e) {
        throw IoError("malformed model header in '" + path.string() + "': " + e.what());
    }
    if (!r.header_.contains("format") || r.header_["format"] != expected_format)
        throw IoError("model file '" + path.string() + "' is not a " + expected_format + " model");
    if (!r.header_.contains("version") || r.header_["version"].get<int>() != expected_version)
        throw IoError("model file '" + path.string() + "' has an incompatible version");

    r.payload_.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    return r;
}

const ordered_json& ModelReader::next_blob(const std::string& name, const char* dtype) {
    const auto& blobs = header_.at("blobs");
    if (blob_index_ >= blobs.size())
        throw IoError("model file '" + path_ + "' has no blob '" + name + "'");
    const auto& blob = blobs[blob_index_++];
    if (blob.at("name") != name || blob.at("dtype") != dtype)
        throw IoError("model file '" + path_ + "': expected blob '" + name + "' (" + dtype +
                      "), found '" + blob.at("name").get<std::string>() + "'");
    return blob;
}

namespace {

template <typename T>
std::vector<T> take_raw(const std::vector<char>& payload, std::size_t& offset, std::size_t count,
                        const std::string& path) {
    const std::size_t bytes = count * sizeof(T);
    if (offset + bytes > payload.size())
        throw IoError("model file truncated: " + path);
    std::vector<T> out(count);
    std::memcpy(out.data(), payload.data() + offset, bytes);
    offset += bytes;
    return out;
}

} // namespace

std::vector<double> ModelReader::read_f64(const std::string& name) {
    const auto& blob = next_blob(name, "f64");
    return take_raw<double>(payload_, payload_offset_, blob.at("count").get<std::size_t>(), path_);
}

std::vector<double> ModelReader::read_f32(const std::string& name) {
    const auto& blob = next_blob(name, "f32");
    const auto raw =
        take_raw<float>(payload_, payload_offset_, blob.at("count").get<std::size_t>(), path_);
    return {raw.begin(), raw.end()};
}

std::vector<std::int32_t> ModelReader::read_i32(const std::string& name) {
    const auto& blob = next_blob(name, "i32");
    return take_raw<std::int32_t>(payload_, payload_offset_, blob.at("count").get<std::size_t>(),
                                  path_);
}

} // namespace retina::io
