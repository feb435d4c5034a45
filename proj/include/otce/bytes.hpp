#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace otce {

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;

Bytes to_bytes(std::string_view s);
std::string to_string(ByteView b);

std::string to_hex(ByteView b);
/// Throws std::invalid_argument on odd length or non-hex characters.
Bytes from_hex(std::string_view hex);

/// Thrown by Decoder when the input does not hold a complete canonical encoding.
class DecodeError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Canonical length-prefixed encoding. Every variable-size field is written
/// as a big-endian u32 length followed by its bytes; integers are fixed-width
/// big-endian. Two values encode identically iff they are equal field-wise.
class Encoder {
public:
  Encoder& u8(std::uint8_t v);
  Encoder& u32(std::uint32_t v);
  Encoder& u64(std::uint64_t v);
  Encoder& f64(double v);
  Encoder& bytes(ByteView v);
  Encoder& str(std::string_view v);
  Encoder& strs(const std::vector<std::string>& v);

  const Bytes& data() const& { return buf_; }
  Bytes take() && { return std::move(buf_); }

private:
  Bytes buf_;
};

class Decoder {
public:
  explicit Decoder(ByteView data) : data_(data) {}

  std::uint8_t u8();
  std::uint32_t u32();
  std::uint64_t u64();
  double f64();
  Bytes bytes();
  std::string str();
  std::vector<std::string> strs();

  bool done() const { return pos_ == data_.size(); }
  /// Throws DecodeError if trailing bytes remain.
  void expect_done() const;

private:
  ByteView take(std::size_t n);

  ByteView data_;
  std::size_t pos_ = 0;
};

}  // namespace otce
