#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>

namespace dsa {

std::string sha256_hex(std::span<const std::uint8_t> bytes);
std::string sha256_hex(const std::string& s);
std::string sha256_file_hex(const std::filesystem::path& p);

}  // namespace dsa
