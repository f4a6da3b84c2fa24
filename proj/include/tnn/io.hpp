#pragma once

// Small file/formatting helpers shared by checkpointing and artifact writers.

#include <cstdint>
#include <string>
#include <string_view>

namespace tnn {

// Writes via a temporary sibling file and renames into place, so readers never
// observe a partially written artifact.
void write_file_atomic(const std::string& path, std::string_view content);

std::string read_file(const std::string& path);

// Shortest decimal form that round-trips the exact double (deterministic,
// locale-independent); used for every CSV cell.
std::string format_double(double x);

// FNV-1a 64-bit content digest, reported as 16 hex digits.
std::uint64_t fnv1a64(std::string_view data);
std::string fnv1a64_hex(std::string_view data);

}  // namespace tnn
