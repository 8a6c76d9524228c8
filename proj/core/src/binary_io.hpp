#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <string_view>
#include <vector>

#include "cdp/error.hpp"

namespace cdp::detail {

// Little-endian byte buffer writer; the whole payload is assembled in memory
// and flushed once.
class ByteWriter {
 public:
  void magic(std::string_view tag) { bytes_.insert(bytes_.end(), tag.begin(), tag.end()); }

  template <typename T>
  void put(T value) {
    static_assert(std::is_trivially_copyable_v<T>);
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                                 std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint8_t>>;
    static_assert(sizeof(T) == sizeof(U));
    U raw;
    std::memcpy(&raw, &value, sizeof raw);
    for (std::size_t i = 0; i < sizeof raw; ++i)
      bytes_.push_back(static_cast<char>((raw >> (8 * i)) & 0xff));
  }

  void flush(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(Errc::io, "cannot open for writing: " + path.string());
    out.write(bytes_.data(), static_cast<std::streamsize>(bytes_.size()));
    if (!out) fail(Errc::io, "write failed: " + path.string());
  }

 private:
  std::vector<char> bytes_;
};

class ByteReader {
 public:
  explicit ByteReader(const std::filesystem::path& path) : path_(path.string()) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(Errc::io, "cannot open: " + path_);
    bytes_.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  }

  void expect_magic(std::string_view tag) {
    if (bytes_.size() < tag.size() ||
        std::string_view(bytes_.data(), tag.size()) != tag)
      fail(Errc::bad_magic, path_ + ": expected magic \"" + std::string(tag) + "\"");
    pos_ += tag.size();
  }

  template <typename T>
  T get() {
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                                 std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint8_t>>;
    if (remaining() < sizeof(U))
      fail(Errc::truncated, path_ + ": truncated at byte " + std::to_string(pos_));
    U raw = 0;
    for (std::size_t i = 0; i < sizeof raw; ++i)
      raw |= static_cast<U>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += sizeof raw;
    T value;
    std::memcpy(&value, &raw, sizeof value);
    return value;
  }

  std::size_t remaining() const noexcept { return bytes_.size() - pos_; }
  const std::string& path() const noexcept { return path_; }

  // Fails with `truncated` when fewer than `needed` bytes are left and with
  // `dimension_mismatch` when more are left than the header accounts for.
  void expect_exact_payload(std::uint64_t needed) const {
    if (remaining() < needed)
      fail(Errc::truncated, path_ + ": payload truncated (" + std::to_string(remaining()) +
                                " of " + std::to_string(needed) + " bytes)");
    if (remaining() > needed)
      fail(Errc::dimension_mismatch,
           path_ + ": payload larger than header dimensions (" + std::to_string(remaining()) +
               " vs " + std::to_string(needed) + " bytes)");
  }

 private:
  std::string path_;
  std::vector<char> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace cdp::detail
