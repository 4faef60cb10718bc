#pragma once

// Little-endian encoding helpers shared by the index file, the batch file
// and the socket framing.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <utility>

#include "dlx/error.hpp"

namespace dlx::io {

static_assert(std::endian::native == std::endian::little ||
                  std::endian::native == std::endian::big,
              "mixed-endian platforms are not supported");

template <class T>
inline T byteswap_if_big(T value) {
  if constexpr (std::endian::native == std::endian::big && sizeof(T) > 1) {
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, &value, sizeof(T));
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(bytes[i], bytes[sizeof(T) - 1 - i]);
    std::memcpy(&value, bytes, sizeof(T));
  }
  return value;
}

class Writer {
 public:
  template <class T>
    requires std::is_arithmetic_v<T>
  void put(T value) {
    value = byteswap_if_big(value);
    char bytes[sizeof(T)];
    std::memcpy(bytes, &value, sizeof(T));
    buf_.append(bytes, sizeof(T));
  }

  void put_bytes(std::string_view bytes) { buf_.append(bytes); }

  template <class T>
    requires std::is_arithmetic_v<T>
  void put_array(std::span<const T> values) {
    if constexpr (std::endian::native == std::endian::little) {
      buf_.append(reinterpret_cast<const char*>(values.data()), values.size_bytes());
    } else {
      for (T v : values) put(v);
    }
  }

  // Length-prefixed string; LenT bounds the encodable length.
  template <class LenT>
  void put_string(std::string_view s) {
    if (s.size() > static_cast<std::size_t>(std::numeric_limits<LenT>::max()))
      throw ContractError("string too long for length prefix: " + std::string(s.substr(0, 32)));
    put(static_cast<LenT>(s.size()));
    put_bytes(s);
  }

  const std::string& buffer() const& noexcept { return buf_; }
  std::string take() && noexcept { return std::move(buf_); }

 private:
  std::string buf_;
};

class Reader {
 public:
  explicit Reader(std::string_view bytes, std::uint64_t base_offset = 0)
      : bytes_(bytes), base_(base_offset) {}

  template <class T>
    requires std::is_arithmetic_v<T>
  T get(const char* what) {
    need(sizeof(T), what);
    T value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return byteswap_if_big(value);
  }

  std::string_view get_bytes(std::size_t n, const char* what) {
    need(n, what);
    auto out = bytes_.substr(pos_, n);
    pos_ += n;
    return out;
  }

  template <class T>
    requires std::is_arithmetic_v<T>
  void get_array(std::span<T> out, const char* what) {
    need(out.size_bytes(), what);
    if constexpr (std::endian::native == std::endian::little) {
      std::memcpy(out.data(), bytes_.data() + pos_, out.size_bytes());
      pos_ += out.size_bytes();
    } else {
      for (auto& v : out) v = get<T>(what);
    }
  }

  template <class LenT>
  std::string get_string(const char* what) {
    auto len = get<LenT>(what);
    return std::string(get_bytes(len, what));
  }

  std::uint64_t offset() const noexcept { return base_ + pos_; }
  std::size_t remaining() const noexcept { return bytes_.size() - pos_; }
  bool at_end() const noexcept { return pos_ == bytes_.size(); }

  [[noreturn]] void fail(const std::string& what) const { throw FormatError(what, offset()); }

 private:
  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n)
      throw FormatError(std::string("truncated input while reading ") + what, offset());
  }

  std::string_view bytes_;
  std::size_t pos_ = 0;
  std::uint64_t base_;
};

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFoundError("cannot open file: " + path);
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw DataError("read failed: " + path);
  return data;
}

inline void write_file(const std::string& path, std::string_view data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open file for writing: " + path);
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) throw DataError("write failed: " + path);
}

}  // namespace dlx::io
