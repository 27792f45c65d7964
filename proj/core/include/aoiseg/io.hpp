#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "aoiseg/raster.hpp"

namespace aoiseg {

// On-disk formats. All integers and floats are little-endian.
//
//   AOIR  raster      'A','O','I','R', u16 version=1, u32 H, u32 W,
//                     u16 channels, H*W*channels f32 (row-major,
//                     channel-minor)
//   AOIM  mask        'A','O','I','M', u16 version=1, u32 H, u32 W, u16 C,
//                     C planes of ceil(H*W/8) bytes, bit i of a plane =
//                     pixel i row-major, LSB-first
//
// Soft masks reuse AOIR with channels = C.

void save_raster(const std::string& path, const Raster& img);
Raster load_raster(const std::string& path);

void save_mask(const std::string& path, const MultiLabelMask& mask);
MultiLabelMask load_mask(const std::string& path);

void save_soft_mask(const std::string& path, const SoftMask& soft);
SoftMask load_soft_mask(const std::string& path);

/// Dataset manifest: UTF-8, tab-separated, header line "id\traster\tmask".
struct ManifestEntry {
  std::string id;
  std::string raster_path;
  std::string mask_path;
};

void write_manifest(const std::string& path,
                    const std::vector<ManifestEntry>& entries);

/// Relative paths in the file are resolved against the manifest's directory.
std::vector<ManifestEntry> read_manifest(const std::string& path);

namespace detail {

/// Append-only little-endian byte buffer.
class ByteWriter {
 public:
  void u8(std::uint8_t v) { bytes_.push_back(v); }
  void u16(std::uint16_t v);
  void u32(std::uint32_t v);
  void f32(float v);
  void raw(const void* data, std::size_t n);
  const std::vector<std::uint8_t>& bytes() const { return bytes_; }

 private:
  std::vector<std::uint8_t> bytes_;
};

/// Bounds-checked little-endian reader; throws truncated_file on overrun.
class ByteReader {
 public:
  ByteReader(const std::uint8_t* data, std::size_t n, std::string context)
      : data_(data), size_(n), context_(std::move(context)) {}

  std::uint8_t u8();
  std::uint16_t u16();
  std::uint32_t u32();
  float f32();
  void raw(void* out, std::size_t n);
  std::size_t remaining() const { return size_ - pos_; }
  bool at_end() const { return pos_ == size_; }

 private:
  void need(std::size_t n);
  const std::uint8_t* data_;
  std::size_t size_;
  std::size_t pos_ = 0;
  std::string context_;
};

std::vector<std::uint8_t> read_file(const std::string& path);
void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes);

/// CRC-32 (IEEE, zlib-compatible) of a byte range.
std::uint32_t crc32_of(const std::uint8_t* data, std::size_t n);

}  // namespace detail

}  // namespace aoiseg
