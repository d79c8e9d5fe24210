#include "lire/io_format.hpp"

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;

namespace lire {

std::uint32_t crc32(const void* data, std::size_t len, std::uint32_t seed) {
    static const std::array<std::uint32_t, 256> table = [] {
        std::array<std::uint32_t, 256> t{};
        for (std::uint32_t i = 0; i < 256; ++i) {
            std::uint32_t c = i;
            for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
            t[i] = c;
        }
        return t;
    }();
    std::uint32_t c = seed ^ 0xFFFFFFFFu;
    const auto* p = static_cast<const std::uint8_t*>(data);
    for (std::size_t i = 0; i < len; ++i) c = table[(c ^ p[i]) & 0xFF] ^ (c >> 8);
    return c ^ 0xFFFFFFFFu;
}

std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) raise(ErrorCode::io_error, "cannot open " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    return bytes;
}

void write_file_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) raise(ErrorCode::io_error, "cannot create " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
    out.flush();
    if (!out) raise(ErrorCode::io_error, "short write to " + path);
}

void write_file_atomic(const std::string& path, const std::vector<std::uint8_t>& bytes) {
    const std::string tmp = path + ".tmp";
    write_file_bytes(tmp, bytes);
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) raise(ErrorCode::io_error, "rename " + tmp + " -> " + path + ": " + ec.message());
}

std::vector<Vector> read_vector_file(const std::string& path, ElementType element_type) {
    auto bytes = read_file_bytes(path);
    ByteReader r(bytes.data(), bytes.size());
    std::vector<Vector> out;
    while (r.remaining() > 0) {
        std::uint32_t dim = r.u32();
        if (dim == 0) raise(ErrorCode::corruption, "zero-dimension record in " + path);
        Vector v(dim);
        if (element_type == ElementType::float32) {
            for (std::uint32_t d = 0; d < dim; ++d) v[d] = r.f32();
        } else {
            for (std::uint32_t d = 0; d < dim; ++d) v[d] = float(r.u8());
        }
        out.push_back(std::move(v));
    }
    return out;
}

void write_vector_file(const std::string& path, const std::vector<Vector>& vectors,
                       ElementType element_type) {
    std::vector<std::uint8_t> bytes;
    for (const Vector& v : vectors) {
        put_u32(bytes, std::uint32_t(v.size()));
        if (element_type == ElementType::float32) {
            for (float f : v) put_f32(bytes, f);
        } else {
            for (float f : v) put_u8(bytes, static_cast<std::uint8_t>(f));
        }
    }
    write_file_bytes(path, bytes);
}

std::map<std::string, std::string> parse_kv_text(const std::string& text) {
    std::map<std::string, std::string> out;
    std::istringstream in(text);
    std::string line;
    auto trim = [](std::string s) {
        std::size_t a = s.find_first_not_of(" \t\r");
        std::size_t b = s.find_last_not_of(" \t\r");
        return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    while (std::getline(in, line)) {
        if (auto hash = line.find('#'); hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            raise(ErrorCode::invalid_argument, "malformed key=value line: " + line);
        std::string key = trim(line.substr(0, eq));
        std::string val = trim(line.substr(eq + 1));
        if (key.empty()) raise(ErrorCode::invalid_argument, "empty key in line: " + line);
        out[key] = val;
    }
    return out;
}

std::map<std::string, std::string> parse_kv_file(const std::string& path) {
    auto bytes = read_file_bytes(path);
    return parse_kv_text(std::string(bytes.begin(), bytes.end()));
}

IndexConfig config_from_kv(const std::map<std::string, std::string>& kv) {
    IndexConfig cfg;
    auto get = [&](const char* key) -> const std::string* {
        auto it = kv.find(key);
        return it == kv.end() ? nullptr : &it->second;
    };
    if (auto* s = get("dim")) cfg.dim = std::uint32_t(std::stoul(*s));
    if (auto* s = get("element_type")) {
        if (*s == "float32")
            cfg.element_type = ElementType::float32;
        else if (*s == "uint8")
            cfg.element_type = ElementType::uint8;
        else
            raise(ErrorCode::invalid_argument, "unknown element_type: " + *s);
    }
    if (auto* s = get("split_limit")) cfg.split_limit = std::uint32_t(std::stoul(*s));
    if (auto* s = get("merge_threshold")) cfg.merge_threshold = std::uint32_t(std::stoul(*s));
    if (auto* s = get("reassign_range")) cfg.reassign_range = std::uint32_t(std::stoul(*s));
    if (auto* s = get("nprobe")) cfg.nprobe = std::uint32_t(std::stoul(*s));
    if (auto* s = get("replica_count")) cfg.replica_count = std::uint32_t(std::stoul(*s));
    if (auto* s = get("replica_distance_ratio")) cfg.replica_distance_ratio = std::stod(*s);
    if (auto* s = get("block_size")) cfg.block_size = std::uint32_t(std::stoul(*s));
    cfg.validate();
    return cfg;
}

}  // namespace lire
