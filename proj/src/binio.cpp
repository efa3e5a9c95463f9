#include "ssd/binio.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <numbers>

namespace ssd {

static_assert(std::endian::native == std::endian::little,
              "artifact encoding assumes a little-endian host");

double Rng::normal() {
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes) {
  Fnv1a64 h;
  h.update(bytes);
  return h.value();
}

std::uint64_t digest_floats(std::span<const float> values, std::uint64_t seed_digest) {
  Fnv1a64 h;
  if (seed_digest != 0) {
    std::uint8_t buf[8];
    std::memcpy(buf, &seed_digest, 8);
    h.update(buf);
  }
  h.update({reinterpret_cast<const std::uint8_t*>(values.data()), values.size() * sizeof(float)});
  return h.value();
}

std::string hex_digest(std::uint64_t d) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(d));
  return buf;
}

// ---------------------------------------------------------------------------

BinaryWriter::BinaryWriter(const std::string& path)
    : out_(path, std::ios::binary | std::ios::trunc), path_(path) {
  if (!out_) throw Error("cannot open '" + path + "' for writing");
}

void BinaryWriter::raw(const std::uint8_t* p, std::size_t n) {
  out_.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n));
  if (!out_) throw Error("write failed on '" + path_ + "'");
  digest_.update({p, n});
  offset_ += n;
}

void BinaryWriter::magic(std::string_view tag) {
  if (tag.size() != 4) throw Error("magic tags are 4 bytes");
  raw(reinterpret_cast<const std::uint8_t*>(tag.data()), 4);
}

void BinaryWriter::u8(std::uint8_t v) { raw(&v, 1); }

void BinaryWriter::u32(std::uint32_t v) {
  raw(reinterpret_cast<const std::uint8_t*>(&v), sizeof v);
}

void BinaryWriter::u64(std::uint64_t v) {
  raw(reinterpret_cast<const std::uint8_t*>(&v), sizeof v);
}

void BinaryWriter::f32(float v) { raw(reinterpret_cast<const std::uint8_t*>(&v), sizeof v); }

void BinaryWriter::f64(double v) { raw(reinterpret_cast<const std::uint8_t*>(&v), sizeof v); }

void BinaryWriter::f32_array(std::span<const float> values) {
  raw(reinterpret_cast<const std::uint8_t*>(values.data()), values.size_bytes());
}

void BinaryWriter::bytes(std::span<const std::uint8_t> data) { raw(data.data(), data.size()); }

void BinaryWriter::finish() {
  if (finished_) return;
  const std::uint64_t d = digest_.value();
  out_.write(reinterpret_cast<const char*>(&d), sizeof d);
  out_.close();
  if (!out_) throw Error("write failed on '" + path_ + "'");
  finished_ = true;
}

// ---------------------------------------------------------------------------

BinaryReader::BinaryReader(const std::string& path)
    : in_(path, std::ios::binary), path_(path) {
  if (!in_) throw Error("cannot open '" + path + "' for reading");
}

void BinaryReader::fail(const std::string& what) const {
  std::string msg = path_ + ": ";
  if (!context_.empty()) msg += context_ + ": ";
  throw FormatError(msg + what, offset_);
}

void BinaryReader::raw(std::uint8_t* p, std::size_t n) {
  in_.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in_.gcount()) != n) fail("truncated file");
  digest_.update({p, n});
  offset_ += n;
}

void BinaryReader::expect_magic(std::string_view tag) {
  char buf[4];
  raw(reinterpret_cast<std::uint8_t*>(buf), 4);
  if (std::string_view(buf, 4) != tag) {
    offset_ -= 4;
    fail("bad magic: expected '" + std::string(tag) + "'");
  }
}

std::uint8_t BinaryReader::u8() {
  std::uint8_t v;
  raw(&v, 1);
  return v;
}

std::uint32_t BinaryReader::u32() {
  std::uint32_t v;
  raw(reinterpret_cast<std::uint8_t*>(&v), sizeof v);
  return v;
}

std::uint64_t BinaryReader::u64() {
  std::uint64_t v;
  raw(reinterpret_cast<std::uint8_t*>(&v), sizeof v);
  return v;
}

float BinaryReader::f32() {
  float v;
  raw(reinterpret_cast<std::uint8_t*>(&v), sizeof v);
  return v;
}

double BinaryReader::f64() {
  double v;
  raw(reinterpret_cast<std::uint8_t*>(&v), sizeof v);
  return v;
}

void BinaryReader::f32_array(std::span<float> out) {
  raw(reinterpret_cast<std::uint8_t*>(out.data()), out.size_bytes());
}

void BinaryReader::bytes(std::span<std::uint8_t> out) { raw(out.data(), out.size()); }

void BinaryReader::verify_digest() {
  const std::uint64_t expected = digest_.value();
  std::uint64_t stored;
  in_.read(reinterpret_cast<char*>(&stored), sizeof stored);
  if (in_.gcount() != sizeof stored) fail("truncated file: missing digest");
  if (stored != expected) fail("digest mismatch: stored " + hex_digest(stored) + ", computed " + hex_digest(expected));
  offset_ += sizeof stored;
  if (in_.peek() != std::char_traits<char>::eof()) fail("trailing bytes after digest");
}

std::string peek_magic(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  char buf[4];
  if (!in.read(buf, 4)) return {};
  return std::string(buf, 4);
}

}  // namespace ssd
