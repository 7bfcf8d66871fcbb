#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>

namespace ltmx {

// Incremental FNV-1a 64-bit digest. Used for checkpoint provenance and the
// frozen-parameter check, not for security.
class Digest {
 public:
  void update(std::span<const std::byte> bytes) noexcept {
    for (std::byte b : bytes) {
      state_ ^= static_cast<std::uint8_t>(b);
      state_ *= 0x100000001b3ULL;
    }
  }
  template <typename T>
  void update_values(std::span<const T> values) noexcept {
    update(std::as_bytes(values));
  }
  std::uint64_t value() const noexcept { return state_; }
  std::string hex() const;

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

std::string hash_file(const std::string& path);

}  // namespace ltmx
