#include "planrank/blobfile.hpp"

#include <cstring>
#include <fstream>

namespace planrank {

namespace {

std::uint64_t fnv1a64(const std::string& bytes) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

void append_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void append_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void append_f64(std::string& out, double d) {
    std::uint64_t bits;
    std::memcpy(&bits, &d, sizeof(bits));
    append_u64(out, bits);
}

std::uint32_t read_u32(const std::string& in, std::size_t& pos) {
    if (pos + 4 > in.size()) throw CorruptFileError("truncated file");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[pos++])) << (8 * i);
    return v;
}

std::uint64_t read_u64(const std::string& in, std::size_t& pos) {
    if (pos + 8 > in.size()) throw CorruptFileError("truncated file");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[pos++])) << (8 * i);
    return v;
}

double read_f64(const std::string& in, std::size_t& pos) {
    std::uint64_t bits = read_u64(in, pos);
    double d;
    std::memcpy(&d, &bits, sizeof(d));
    return d;
}

std::string slurp(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open: " + path);
    std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return bytes;
}

}  // namespace

void write_blob_file(const std::string& path, const std::string& magic,
                     std::uint32_t format_version, const nlohmann::ordered_json& meta,
                     const std::vector<std::pair<std::string, NumArray>>& blobs) {
    if (magic.size() != 8) throw std::invalid_argument("magic must be 8 bytes");

    nlohmann::ordered_json header;
    header["meta"] = meta;
    auto index = nlohmann::ordered_json::array();
    for (const auto& [name, arr] : blobs)
        index.push_back({{"name", name}, {"shape", arr.shape()}});
    header["blobs"] = std::move(index);
    std::string header_json = header.dump();

    std::string out = magic;
    append_u32(out, format_version);
    append_u64(out, header_json.size());
    out += header_json;
    for (const auto& [name, arr] : blobs)
        for (std::size_t i = 0; i < arr.size(); ++i) append_f64(out, arr[i]);
    append_u64(out, fnv1a64(out));

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw std::runtime_error("write failed: " + path);
}

namespace {

BlobFile parse_blob_file(const std::string& bytes, const std::string& path,
                         const std::string* expected_magic, const std::uint32_t* expected_version) {
    if (bytes.size() < 8 + 4 + 8 + 8) throw CorruptFileError("truncated file: " + path);

    std::uint64_t stored_sum;
    {
        std::size_t pos = bytes.size() - 8;
        stored_sum = read_u64(bytes, pos);
    }
    std::string body = bytes.substr(0, bytes.size() - 8);
    if (fnv1a64(body) != stored_sum)
        throw CorruptFileError("checksum mismatch: " + path);

    std::size_t pos = 0;
    std::string magic = body.substr(0, 8);
    pos = 8;
    if (expected_magic && magic != *expected_magic)
        throw CorruptFileError("unexpected file type (magic '" + magic + "'): " + path);

    BlobFile file;
    file.format_version = read_u32(body, pos);
    if (expected_version && file.format_version != *expected_version)
        throw VersionMismatchError("format version " + std::to_string(file.format_version) +
                                   ", expected " + std::to_string(*expected_version) + ": " + path);

    std::uint64_t header_len = read_u64(body, pos);
    if (pos + header_len > body.size()) throw CorruptFileError("truncated header: " + path);
    nlohmann::ordered_json header =
        nlohmann::ordered_json::parse(body.substr(pos, header_len), nullptr, false);
    if (header.is_discarded()) throw CorruptFileError("unreadable header: " + path);
    pos += header_len;

    file.meta = header.value("meta", nlohmann::ordered_json::object());
    for (const auto& entry : header.value("blobs", nlohmann::ordered_json::array())) {
        std::string name = entry.at("name").get<std::string>();
        std::vector<std::size_t> shape = entry.at("shape").get<std::vector<std::size_t>>();
        NumArray arr(shape);
        for (std::size_t i = 0; i < arr.size(); ++i) arr[i] = read_f64(body, pos);
        file.blobs.emplace_back(std::move(name), std::move(arr));
    }
    if (pos != body.size()) throw CorruptFileError("trailing bytes: " + path);
    return file;
}

}  // namespace

BlobFile read_blob_file(const std::string& path, const std::string& magic,
                        std::uint32_t expected_version) {
    return parse_blob_file(slurp(path), path, &magic, &expected_version);
}

nlohmann::ordered_json read_blob_meta(const std::string& path) {
    BlobFile file = parse_blob_file(slurp(path), path, nullptr, nullptr);
    nlohmann::ordered_json out;
    out["format_version"] = file.format_version;
    out["meta"] = file.meta;
    auto blobs = nlohmann::ordered_json::array();
    for (const auto& [name, arr] : file.blobs)
        blobs.push_back({{"name", name}, {"shape", arr.shape()}});
    out["blobs"] = std::move(blobs);
    return out;
}

}  // namespace planrank
