#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace teleguard {

// Little-endian fixed-width encoding, independent of host byte order.
class ByteWriter {
 public:
  void u8(std::uint8_t v) { bytes_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void f64(double v);
  void f64s(std::span<const double> values);
  void raw(std::string_view bytes) { bytes_.append(bytes); }

  const std::string& bytes() const { return bytes_; }
  std::string take() { return std::move(bytes_); }

 private:
  std::string bytes_;
};

// Reads what ByteWriter wrote. Running past the end throws CorruptFileError.
class ByteReader {
 public:
  explicit ByteReader(std::string_view bytes) : bytes_(bytes) {}

  std::uint8_t u8();
  std::uint32_t u32();
  std::uint64_t u64();
  double f64();
  void f64s(std::span<double> out);
  std::string_view raw(std::size_t count);

  std::size_t remaining() const { return bytes_.size() - pos_; }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t count) const;

  std::string_view bytes_;
  std::size_t pos_ = 0;
};

std::string hex_encode(std::string_view bytes);
// Throws CorruptFileError on odd length or non-hex characters.
std::string hex_decode(std::string_view text);

}  // namespace teleguard
