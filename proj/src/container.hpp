#pragma once

// Shared framing for the binary containers (FKT1, FMAP, BSC1):
//   4-byte magic | uint32 LE header length | UTF-8 JSON header | payload
// Payload blocks are little-endian float32 / uint32 in header order.

#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include <json.hpp>

#include "facesync/common.hpp"

namespace facesync::detail {

class ByteWriter {
 public:
  void magic(const char* m) { bytes_.insert(bytes_.end(), m, m + 4); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void f32(float f) {
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    u32(bits);
  }
  void raw(const std::string& s) { bytes_.insert(bytes_.end(), s.begin(), s.end()); }
  void header(const nlohmann::json& j) {
    const std::string text = j.dump();
    u32(static_cast<std::uint32_t>(text.size()));
    raw(text);
  }
  const std::vector<char>& bytes() const { return bytes_; }

 private:
  std::vector<char> bytes_;
};

class ByteReader {
 public:
  ByteReader(std::vector<char> bytes, std::string what)
      : bytes_(std::move(bytes)), what_(std::move(what)) {}

  void expect_magic(const char* m) {
    need(4);
    if (std::memcmp(bytes_.data() + pos_, m, 4) != 0)
      throw FormatError(what_ + ": bad magic bytes (expected " + std::string(m, 4) + ")");
    pos_ += 4;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  float f32() {
    const std::uint32_t bits = u32();
    float f;
    std::memcpy(&f, &bits, 4);
    return f;
  }
  nlohmann::json header() {
    const std::uint32_t n = u32();
    need(n);
    std::string text(bytes_.data() + pos_, n);
    pos_ += n;
    try {
      return nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(what_ + ": header is not valid JSON (" + e.what() + ")");
    }
  }
  void expect_end() const {
    if (pos_ != bytes_.size()) throw FormatError(what_ + ": trailing bytes after payload");
  }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw FormatError(what_ + ": truncated file");
  }
  std::vector<char> bytes_;
  std::string what_;
  std::size_t pos_ = 0;
};

std::vector<char> read_file(const std::string& path);
void write_file(const std::string& path, const std::vector<char>& bytes);

}  // namespace facesync::detail
