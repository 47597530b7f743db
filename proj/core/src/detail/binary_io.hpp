#pragma once

#include "bitsearch/error.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fmt/format.h>
#include <fstream>
#include <iterator>
#include <vector>

namespace bitsearch::detail {

// Little-endian encoder for the checkpoint formats.
class BinaryWriter {
 public:
  void bytes(const char* p, std::size_t n) { buf_.insert(buf_.end(), p, p + n); }

  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }

  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }

  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

  void save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError(fmt::format("cannot write '{}'", path.string()));
    out.write(buf_.data(), static_cast<std::streamsize>(buf_.size()));
    if (!out) throw CheckpointError(fmt::format("short write to '{}'", path.string()));
  }

 private:
  std::vector<char> buf_;
};

class BinaryReader {
 public:
  static BinaryReader open(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError(fmt::format("cannot open '{}'", path.string()));
    BinaryReader r;
    r.path_ = path.string();
    r.buf_.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    return r;
  }

  std::size_t remaining() const noexcept { return buf_.size() - pos_; }

  void expect_magic(const char (&magic)[4]) {
    if (remaining() < 4 || std::memcmp(buf_.data(), magic, 4) != 0) {
      throw CheckpointVersionError(fmt::format("'{}' does not start with magic '{}'", path_, std::string(magic, 4)));
    }
    pos_ = 4;
  }

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t{static_cast<unsigned char>(buf_[pos_ + i])} << (8 * i);
    pos_ += 4;
    return v;
  }

  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t{static_cast<unsigned char>(buf_[pos_ + i])} << (8 * i);
    pos_ += 8;
    return v;
  }

  double f64() { return std::bit_cast<double>(u64()); }

  void expect_end() const {
    if (pos_ != buf_.size()) {
      throw CorruptCheckpointError(fmt::format("'{}' has {} trailing bytes", path_, buf_.size() - pos_));
    }
  }

 private:
  void need(std::size_t n) const {
    if (remaining() < n) throw CorruptCheckpointError(fmt::format("'{}' is truncated at byte {}", path_, pos_));
  }

  std::string path_;
  std::vector<char> buf_;
  std::size_t pos_ = 0;
};

}  // namespace bitsearch::detail
