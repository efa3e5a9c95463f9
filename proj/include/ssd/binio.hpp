#pragma once

// Little-endian binary encoding shared by every artifact format (SSDO, SSDS,
// SSDP, SSDA, SSDL). Each file ends with a 64-bit FNV-1a digest over all
// preceding bytes.

#include <array>
#include <cstdint>
#include <fstream>
#include <span>
#include <string>
#include <string_view>

#include "ssd/common.hpp"

namespace ssd {

/// Incremental 64-bit FNV-1a.
class Fnv1a64 {
 public:
  void update(std::span<const std::uint8_t> bytes) {
    for (auto b : bytes) {
      state_ ^= b;
      state_ *= 0x100000001b3ULL;
    }
  }
  std::uint64_t value() const { return state_; }

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes);
std::uint64_t digest_floats(std::span<const float> values, std::uint64_t seed_digest = 0);

std::string hex_digest(std::uint64_t d);

class BinaryWriter {
 public:
  explicit BinaryWriter(const std::string& path);

  void magic(std::string_view tag);
  void u8(std::uint8_t v);
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void f32(float v);
  void f64(double v);
  void f32_array(std::span<const float> values);
  void bytes(std::span<const std::uint8_t> data);

  /// Appends the digest of everything written so far and closes the stream.
  void finish();

  std::uint64_t offset() const { return offset_; }

 private:
  void raw(const std::uint8_t* p, std::size_t n);

  std::ofstream out_;
  std::string path_;
  Fnv1a64 digest_;
  std::uint64_t offset_ = 0;
  bool finished_ = false;
};

class BinaryReader {
 public:
  explicit BinaryReader(const std::string& path);

  /// Reads and checks a 4-byte tag.
  void expect_magic(std::string_view tag);
  std::uint8_t u8();
  std::uint32_t u32();
  std::uint64_t u64();
  float f32();
  double f64();
  void f32_array(std::span<float> out);
  void bytes(std::span<std::uint8_t> out);

  /// Reads the trailing digest, compares it against the running digest and
  /// requires end-of-file afterwards.
  void verify_digest();

  std::uint64_t offset() const { return offset_; }
  const std::string& path() const { return path_; }

  /// Context prefix used in error messages, e.g. "record 17".
  void set_context(std::string ctx) { context_ = std::move(ctx); }

  [[noreturn]] void fail(const std::string& what) const;

 private:
  void raw(std::uint8_t* p, std::size_t n);

  std::ifstream in_;
  std::string path_;
  std::string context_;
  Fnv1a64 digest_;
  std::uint64_t offset_ = 0;
};

/// Returns the 4-byte magic of a file, or an empty string if unreadable.
std::string peek_magic(const std::string& path);

}  // namespace ssd
