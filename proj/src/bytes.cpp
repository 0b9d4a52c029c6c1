#include "bytes.hpp"

#include <fstream>
#include <iterator>

namespace ous::bytes {

void put_u16(std::string& b, uint16_t v) {
  b.push_back(static_cast<char>(v & 0xff));
  b.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_u32(std::string& b, uint32_t v) {
  put_u16(b, static_cast<uint16_t>(v & 0xffff));
  put_u16(b, static_cast<uint16_t>(v >> 16));
}

void put_u64(std::string& b, uint64_t v) {
  put_u32(b, static_cast<uint32_t>(v & 0xffffffffu));
  put_u32(b, static_cast<uint32_t>(v >> 32));
}

uint16_t get_u16(const std::string& b, size_t off) {
  return static_cast<uint16_t>(static_cast<unsigned char>(b[off]) |
                               (static_cast<unsigned char>(b[off + 1]) << 8));
}

uint32_t get_u32(const std::string& b, size_t off) {
  return static_cast<uint32_t>(get_u16(b, off)) |
         (static_cast<uint32_t>(get_u16(b, off + 2)) << 16);
}

uint64_t get_u64(const std::string& b, size_t off) {
  return static_cast<uint64_t>(get_u32(b, off)) |
         (static_cast<uint64_t>(get_u32(b, off + 4)) << 32);
}

std::string read_file_bytes(const std::string& path, ErrorKind missing_kind) {
  std::ifstream in(path, std::ios::binary);
  check(in.good(), missing_kind, "cannot open " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  check(!in.bad(), ErrorKind::Io, "read failure on " + path);
  return bytes;
}

void write_file_bytes(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  check(out.good(), ErrorKind::Io, "cannot open " + path + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  out.flush();
  check(out.good(), ErrorKind::Io, "write failure on " + path);
}

}  // namespace ous::bytes
