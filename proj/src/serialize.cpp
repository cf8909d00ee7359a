#include "incctr/serialize.hpp"

#include <cstdio>
#include <fstream>

namespace incctr {

void write_container(const std::string& path, const char magic[8], std::uint32_t version,
                     const std::string& payload) {
  BinaryWriter header;
  header.raw(magic, 8);
  header.u32(version);
  header.u64(payload.size());
  header.u64(fnv1a64(payload.data(), payload.size()));

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open for writing: " + path);
  out.write(header.buffer().data(), static_cast<std::streamsize>(header.buffer().size()));
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (!out) throw DataError("write failed: " + path);
}

std::string read_container(const std::string& path, const char magic[8],
                           std::uint32_t expect_version) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open: " + path);
  std::string contents((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  BinaryReader r(std::move(contents));
  char got_magic[8];
  if (r.remaining() < 28) throw DataError("file too short: " + path);
  r.raw(got_magic, 8);
  if (std::memcmp(got_magic, magic, 8) != 0) throw DataError("bad magic in " + path);
  std::uint32_t version = r.u32();
  if (version != expect_version)
    throw DataError("unsupported version " + std::to_string(version) + " in " + path);
  std::uint64_t len = r.u64();
  std::uint64_t checksum = r.u64();
  if (r.remaining() != len) throw DataError("payload length mismatch in " + path);
  std::string payload(len, '\0');
  r.raw(payload.data(), len);
  if (fnv1a64(payload.data(), payload.size()) != checksum)
    throw DataError("checksum mismatch in " + path);
  return payload;
}

}  // namespace incctr
