#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <type_traits>

namespace lsl::binary {

static_assert(std::endian::native == std::endian::little,
              "binary formats are little-endian; big-endian hosts need byte swapping");

template <class T>
  requires std::is_trivially_copyable_v<T>
void put(std::ostream& out, const T& value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

inline void put_bytes(std::ostream& out, const std::string& bytes) {
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

/// Reads raw little-endian values and tracks the byte offset for diagnostics.
class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  template <class T>
    requires std::is_trivially_copyable_v<T>
  bool get(T& value) {
    char buf[sizeof(T)];
    if (!read(buf, sizeof(T))) return false;
    std::memcpy(&value, buf, sizeof(T));
    return true;
  }

  bool read(char* dst, std::size_t n) {
    in_.read(dst, static_cast<std::streamsize>(n));
    const auto got = static_cast<std::size_t>(in_.gcount());
    offset_ += got;
    return got == n;
  }

  bool at_eof() {
    return in_.peek() == std::char_traits<char>::eof();
  }

  std::uint64_t offset() const { return offset_; }

 private:
  std::istream& in_;
  std::uint64_t offset_ = 0;
};

}  // namespace lsl::binary
