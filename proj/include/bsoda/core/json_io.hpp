#ifndef BSODA_CORE_JSON_IO_HPP
#define BSODA_CORE_JSON_IO_HPP

#include <filesystem>
#include <string>
#include <string_view>

#include <json.hpp>

namespace bsoda {

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);

/// Parses JSON, converting nlohmann parse errors into ParseError with the
/// source name prefixed.
nlohmann::json parse_json(std::string_view text, std::string_view source);

/// 64-bit FNV-1a, rendered as 16 hex digits.
std::string fnv1a_hex(std::string_view bytes);

}  // namespace bsoda

#endif  // BSODA_CORE_JSON_IO_HPP
