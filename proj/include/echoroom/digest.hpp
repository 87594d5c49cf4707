#pragma once

// FNV-1a based config digests so runs can state exactly what produced them.

#include <cstdint>
#include <cstring>
#include <string_view>

#include <echoroom/geometry.hpp>

namespace echoroom {

class Digest {
 public:
  Digest& bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h_ ^= p[i];
      h_ *= 0x100000001b3ull;
    }
    return *this;
  }
  Digest& feed(std::uint64_t v) { return bytes(&v, sizeof v); }
  Digest& feed(std::int64_t v) { return bytes(&v, sizeof v); }
  Digest& feed(double v) {
    if (v == 0.0) v = 0.0;  // collapse signed zero
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    return feed(bits);
  }
  Digest& feed(std::string_view s) { return bytes(s.data(), s.size()); }
  Digest& feed(const Point3& p) { return feed(p.x()).feed(p.y()).feed(p.z()); }

  std::uint64_t value() const { return h_; }

 private:
  std::uint64_t h_ = 0xcbf29ce484222325ull;
};

}  // namespace echoroom
