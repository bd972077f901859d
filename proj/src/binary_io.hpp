#pragma once

#include "mmos/error.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <vector>

namespace mmos::detail {

/// Append-only byte buffer with explicit-endianness writers.
class ByteWriter {
 public:
  void u32_le(std::uint32_t v) { put(v, 4, false); }
  void u64_le(std::uint64_t v) { put(v, 8, false); }
  void i32_le(std::int32_t v) { u32_le(static_cast<std::uint32_t>(v)); }
  void u32_be(std::uint32_t v) { put(v, 4, true); }
  void f32_le(float v) { u32_le(std::bit_cast<std::uint32_t>(v)); }
  void f64_le(double v) { u64_le(std::bit_cast<std::uint64_t>(v)); }
  void bytes(std::span<const std::uint8_t> b) { data_.insert(data_.end(), b.begin(), b.end()); }
  void byte(std::uint8_t b) { data_.push_back(b); }
  void tag(const char (&magic)[5]) {
    for (int i = 0; i < 4; ++i) data_.push_back(static_cast<std::uint8_t>(magic[i]));
  }

  const std::vector<std::uint8_t>& data() const noexcept { return data_; }

 private:
  void put(std::uint64_t v, int width, bool big_endian) {
    for (int i = 0; i < width; ++i) {
      const int shift = big_endian ? 8 * (width - 1 - i) : 8 * i;
      data_.push_back(static_cast<std::uint8_t>((v >> shift) & 0xffU));
    }
  }

  std::vector<std::uint8_t> data_;
};

/// Bounds-checked reader; every failure raises FormatError with the current offset.
class ByteReader {
 public:
  ByteReader(std::span<const std::uint8_t> data, std::string context) : data_(data), context_(std::move(context)) {}

  std::uint32_t u32_le() { return static_cast<std::uint32_t>(get(4, false)); }
  std::uint64_t u64_le() { return get(8, false); }
  std::int32_t i32_le() { return static_cast<std::int32_t>(u32_le()); }
  std::uint32_t u32_be() { return static_cast<std::uint32_t>(get(4, true)); }
  float f32_le() { return std::bit_cast<float>(u32_le()); }
  double f64_le() { return std::bit_cast<double>(u64_le()); }
  std::uint8_t byte() {
    require(1, "byte");
    return data_[offset_++];
  }
  std::span<const std::uint8_t> bytes(std::size_t n) {
    require(n, "payload");
    auto out = data_.subspan(offset_, n);
    offset_ += n;
    return out;
  }
  bool tag_equals(const char (&magic)[5]) {
    require(4, "magic");
    const bool ok = std::memcmp(data_.data() + offset_, magic, 4) == 0;
    offset_ += 4;
    return ok;
  }

  std::size_t offset() const noexcept { return offset_; }
  std::size_t remaining() const noexcept { return data_.size() - offset_; }
  [[noreturn]] void fail(const std::string& what) const { throw FormatError(context_ + ": " + what, offset_); }
  [[noreturn]] void fail_at(const std::string& what, std::size_t at) const {
    throw FormatError(context_ + ": " + what, at);
  }

 private:
  void require(std::size_t n, const char* what) const {
    if (remaining() < n) fail(std::string("truncated ") + what + " (need " + std::to_string(n) + " bytes, have " +
                              std::to_string(remaining()) + ")");
  }
  std::uint64_t get(int width, bool big_endian) {
    require(static_cast<std::size_t>(width), "integer");
    std::uint64_t v = 0;
    for (int i = 0; i < width; ++i) {
      const int shift = big_endian ? 8 * (width - 1 - i) : 8 * i;
      v |= static_cast<std::uint64_t>(data_[offset_ + static_cast<std::size_t>(i)]) << shift;
    }
    offset_ += static_cast<std::size_t>(width);
    return v;
  }

  std::span<const std::uint8_t> data_;
  std::string context_;
  std::size_t offset_ = 0;
};

std::vector<std::uint8_t> read_file_bytes(const std::string& path);
void write_file_bytes(const std::string& path, std::span<const std::uint8_t> bytes);

}  // namespace mmos::detail
