// Internal little-endian packing and whole-file helpers shared by the binary
// container writers (clips, checkpoints). Not part of the public headers.
#pragma once

#include <cstdint>
#include <string>

#include "ous/common.hpp"

namespace ous::bytes {

void put_u16(std::string& b, uint16_t v);
void put_u32(std::string& b, uint32_t v);
void put_u64(std::string& b, uint64_t v);

uint16_t get_u16(const std::string& b, size_t off);
uint32_t get_u32(const std::string& b, size_t off);
uint64_t get_u64(const std::string& b, size_t off);

// `missing_kind` is thrown when the file cannot be opened, so callers can
// report a missing corpus (Io) differently from a missing checkpoint.
std::string read_file_bytes(const std::string& path, ErrorKind missing_kind);
void write_file_bytes(const std::string& path, const std::string& bytes);

}  // namespace ous::bytes
