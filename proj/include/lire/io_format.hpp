#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "lire/config.hpp"

namespace lire {

std::vector<std::uint8_t> read_file_bytes(const std::string& path);
void write_file_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes);
// Writes to a temp file and renames over the target.
void write_file_atomic(const std::string& path, const std::vector<std::uint8_t>& bytes);

// Vector file: records of (dim u32, dim elements) concatenated, little-endian,
// element encoding per element_type. The fvecs/bvecs layout.
std::vector<Vector> read_vector_file(const std::string& path, ElementType element_type);
void write_vector_file(const std::string& path, const std::vector<Vector>& vectors,
                       ElementType element_type);

// Flat key=value text: one pair per line, '#' starts a comment.
std::map<std::string, std::string> parse_kv_text(const std::string& text);
std::map<std::string, std::string> parse_kv_file(const std::string& path);

IndexConfig config_from_kv(const std::map<std::string, std::string>& kv);

}  // namespace lire
