#include "ltmx/hash.hpp"

#include <array>
#include <cstdio>
#include <fstream>

#include "ltmx/error.hpp"

namespace ltmx {

std::string Digest::hex() const {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(state_));
  return buf;
}

std::string hash_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "' for hashing");
  Digest d;
  std::array<char, 1 << 16> buf{};
  while (in) {
    in.read(buf.data(), buf.size());
    const auto n = static_cast<std::size_t>(in.gcount());
    d.update(std::as_bytes(std::span<const char>(buf.data(), n)));
  }
  return d.hex();
}

}  // namespace ltmx
