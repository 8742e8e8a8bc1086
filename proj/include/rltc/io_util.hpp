#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace rltc {

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Whole-file read; throws IoError if unreadable.
std::vector<uint8_t> read_file(const std::string& path);

// Write-temp-then-rename so a failed write never leaves a torn file at path.
void write_file_atomic(const std::string& path, const void* data, size_t size);
void write_file_atomic(const std::string& path, const std::string& data);
void write_file_atomic(const std::string& path, const std::vector<uint8_t>& data);

} // namespace rltc
