#pragma once

// Little-endian byte streams for the embedding and checkpoint files.

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <vector>

#include "cvgeo/error.hpp"

namespace cvgeo {

class ByteWriter {
 public:
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void f32s(std::span<const float> vs) {
    for (float v : vs) f32(v);
  }
  void bytes(const std::string& s) { buf_.insert(buf_.end(), s.begin(), s.end()); }
  /// u32 length followed by the raw bytes.
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s);
  }

  const std::vector<std::uint8_t>& buffer() const { return buf_; }

  void save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    out.write(reinterpret_cast<const char*>(buf_.data()), static_cast<std::streamsize>(buf_.size()));
    if (!out) throw IoError("write failed for '" + path.string() + "'");
  }

 private:
  std::vector<std::uint8_t> buf_;
};

class ByteReader {
 public:
  ByteReader(std::vector<std::uint8_t> data, std::string source) : data_(std::move(data)), source_(std::move(source)) {}

  static ByteReader open(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    std::vector<std::uint8_t> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return ByteReader(std::move(data), path.string());
  }

  std::uint8_t u8() {
    need(1);
    return data_[pos_++];
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(data_[pos_++]) << (8 * i);
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  void f32s(std::span<float> out) {
    need(4 * out.size());
    for (auto& v : out) v = f32();
  }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s(data_.begin() + static_cast<std::ptrdiff_t>(pos_), data_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
    pos_ += n;
    return s;
  }
  std::string str() { return bytes(u32()); }

  std::size_t remaining() const { return data_.size() - pos_; }
  const std::string& source() const { return source_; }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) {
      throw TruncationError("'" + source_ + "' is truncated: needed " + std::to_string(n) + " bytes at offset " +
                            std::to_string(pos_) + ", " + std::to_string(data_.size() - pos_) + " left");
    }
  }

  std::vector<std::uint8_t> data_;
  std::string source_;
  std::size_t pos_ = 0;
};

/// Reads a 4-byte magic and throws FormatError naming what was found.
inline void expect_magic(ByteReader& in, const std::string& magic) {
  if (in.remaining() < magic.size()) {
    throw TruncationError("'" + in.source() + "' is too short to hold the " + magic + " header");
  }
  const std::string found = in.bytes(magic.size());
  if (found != magic) {
    std::string shown;
    for (unsigned char c : found) shown += (c >= 0x20 && c < 0x7f) ? static_cast<char>(c) : '?';
    throw FormatError("'" + in.source() + "' has magic '" + shown + "', expected '" + magic + "'");
  }
}

}  // namespace cvgeo
