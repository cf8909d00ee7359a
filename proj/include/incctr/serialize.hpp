#pragma once

#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "incctr/types.hpp"

namespace incctr {

inline std::uint64_t fnv1a64(const void* data, std::size_t len,
                             std::uint64_t h = 0xcbf29ce484222325ULL) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Little-endian buffer writer. Numbers are emitted byte by byte so files are
// identical regardless of host endianness.
class BinaryWriter {
 public:
  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u16(std::uint16_t v) { put_le(v, 2); }
  void u32(std::uint32_t v) { put_le(v, 4); }
  void u64(std::uint64_t v) { put_le(v, 8); }
  void f64(double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    u64(bits);
  }
  void str(const std::string& s) {
    u64(s.size());
    buf_.append(s);
  }
  void raw(const void* data, std::size_t len) {
    buf_.append(static_cast<const char*>(data), len);
  }

  const std::string& buffer() const { return buf_; }
  std::string take() { return std::move(buf_); }

 private:
  void put_le(std::uint64_t v, int bytes) {
    for (int i = 0; i < bytes; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  std::string buf_;
};

class BinaryReader {
 public:
  explicit BinaryReader(std::string data) : buf_(std::move(data)) {}

  std::uint8_t u8() { return static_cast<std::uint8_t>(take(1)[0]); }
  std::uint16_t u16() { return static_cast<std::uint16_t>(get_le(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(get_le(4)); }
  std::uint64_t u64() { return get_le(8); }
  double f64() {
    std::uint64_t bits = u64();
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }
  std::string str() {
    std::uint64_t n = u64();
    return std::string(take(n), n);
  }
  void raw(void* out, std::size_t len) { std::memcpy(out, take(len), len); }

  bool exhausted() const { return pos_ == buf_.size(); }
  std::size_t remaining() const { return buf_.size() - pos_; }

 private:
  const char* take(std::size_t n) {
    if (pos_ + n > buf_.size()) throw DataError("truncated binary payload");
    const char* p = buf_.data() + pos_;
    pos_ += n;
    return p;
  }
  std::uint64_t get_le(int bytes) {
    const char* p = take(bytes);
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[i])) << (8 * i);
    return v;
  }
  std::string buf_;
  std::size_t pos_ = 0;
};

// Container framing shared by block and checkpoint files:
//   magic[8] | version u32 | payload_len u64 | fnv1a64(payload) u64 | payload
void write_container(const std::string& path, const char magic[8], std::uint32_t version,
                     const std::string& payload);

// Returns the payload; throws DataError on bad magic, version or checksum.
std::string read_container(const std::string& path, const char magic[8],
                           std::uint32_t expect_version);

}  // namespace incctr
