#include "aoiseg/io.hpp"

#include <zlib.h>

#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "aoiseg/error.hpp"

namespace aoiseg {

namespace detail {

void ByteWriter::u16(std::uint16_t v) {
  bytes_.push_back(static_cast<std::uint8_t>(v & 0xff));
  bytes_.push_back(static_cast<std::uint8_t>(v >> 8));
}

void ByteWriter::u32(std::uint32_t v) {
  for (int i = 0; i < 4; ++i) {
    bytes_.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
  }
}

void ByteWriter::f32(float v) {
  u32(std::bit_cast<std::uint32_t>(v));
}

void ByteWriter::raw(const void* data, std::size_t n) {
  const auto* p = static_cast<const std::uint8_t*>(data);
  bytes_.insert(bytes_.end(), p, p + n);
}

void ByteReader::need(std::size_t n) {
  if (size_ - pos_ < n) {
    fail(Errc::truncated_file,
         context_ + ": needed " + std::to_string(n) + " bytes at offset " +
             std::to_string(pos_) + ", only " + std::to_string(size_ - pos_) +
             " left");
  }
}

std::uint8_t ByteReader::u8() {
  need(1);
  return data_[pos_++];
}

std::uint16_t ByteReader::u16() {
  need(2);
  const std::uint16_t v = static_cast<std::uint16_t>(data_[pos_]) |
                          static_cast<std::uint16_t>(data_[pos_ + 1]) << 8;
  pos_ += 2;
  return v;
}

std::uint32_t ByteReader::u32() {
  need(4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) {
    v |= static_cast<std::uint32_t>(data_[pos_ + i]) << (8 * i);
  }
  pos_ += 4;
  return v;
}

float ByteReader::f32() { return std::bit_cast<float>(u32()); }

void ByteReader::raw(void* out, std::size_t n) {
  need(n);
  std::memcpy(out, data_ + pos_, n);
  pos_ += n;
}

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    fail(Errc::io_error, "cannot open " + path + " for reading");
  }
  in.seekg(0, std::ios::end);
  const auto size = in.tellg();
  in.seekg(0, std::ios::beg);
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(size));
  if (size > 0) {
    in.read(reinterpret_cast<char*>(bytes.data()), size);
  }
  if (!in) {
    fail(Errc::io_error, "read failed on " + path);
  }
  return bytes;
}

void write_file(const std::string& path,
                const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    fail(Errc::io_error, "cannot open " + path + " for writing");
  }
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  out.flush();
  if (!out) {
    fail(Errc::io_error, "write failed on " + path);
  }
}

std::uint32_t crc32_of(const std::uint8_t* data, std::size_t n) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  // zlib takes uInt chunks; split for very large payloads.
  while (n > 0) {
    const auto chunk = static_cast<uInt>(
        std::min<std::size_t>(n, 1u << 30));
    crc = ::crc32(crc, data, chunk);
    data += chunk;
    n -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

namespace {

void expect_magic(ByteReader& r, const char* magic, const char* what) {
  char got[4];
  r.raw(got, 4);
  if (std::memcmp(got, magic, 4) != 0) {
    fail(Errc::format_error,
         std::string(what) + ": bad magic, expected '" + magic + "'");
  }
  const std::uint16_t version = r.u16();
  if (version != 1) {
    fail(Errc::format_error, std::string(what) + ": unsupported version " +
                                 std::to_string(version));
  }
}

}  // namespace

}  // namespace detail

using detail::ByteReader;
using detail::ByteWriter;

void save_raster(const std::string& path, const Raster& img) {
  ByteWriter w;
  w.raw("AOIR", 4);
  w.u16(1);
  w.u32(img.height);
  w.u32(img.width);
  w.u16(img.channels);
  static_assert(std::endian::native == std::endian::little);
  w.raw(img.data.data(), img.data.size() * sizeof(float));
  detail::write_file(path, w.bytes());
}

Raster load_raster(const std::string& path) {
  const auto bytes = detail::read_file(path);
  ByteReader r(bytes.data(), bytes.size(), "AOIR " + path);
  detail::expect_magic(r, "AOIR", "AOIR");
  Raster img;
  img.height = r.u32();
  img.width = r.u32();
  img.channels = r.u16();
  if (img.height < 1 || img.width < 1 || img.channels < 1) {
    fail(Errc::format_error, "AOIR " + path + ": degenerate dimensions");
  }
  const std::size_t n = img.pixel_count() * img.channels;
  img.data.resize(n);
  r.raw(img.data.data(), n * sizeof(float));
  if (!r.at_end()) {
    fail(Errc::format_error, "AOIR " + path + ": trailing bytes");
  }
  for (const float v : img.data) {
    if (!std::isfinite(v)) {
      fail(Errc::non_finite_value, "AOIR " + path + ": NaN or Inf pixel");
    }
  }
  return img;
}

void save_mask(const std::string& path, const MultiLabelMask& mask) {
  ByteWriter w;
  w.raw("AOIM", 4);
  w.u16(1);
  w.u32(mask.height);
  w.u32(mask.width);
  w.u16(mask.classes);
  const std::size_t plane_bytes = (mask.pixel_count() + 7) / 8;
  const std::size_t pw = mask.plane_words();
  for (std::uint16_t cls = 0; cls < mask.classes; ++cls) {
    const std::uint64_t* plane = mask.words.data() + cls * pw;
    for (std::size_t b = 0; b < plane_bytes; ++b) {
      w.u8(static_cast<std::uint8_t>(plane[b / 8] >> (8 * (b % 8))));
    }
  }
  detail::write_file(path, w.bytes());
}

MultiLabelMask load_mask(const std::string& path) {
  const auto bytes = detail::read_file(path);
  ByteReader r(bytes.data(), bytes.size(), "AOIM " + path);
  detail::expect_magic(r, "AOIM", "AOIM");
  const std::uint32_t h = r.u32();
  const std::uint32_t w = r.u32();
  const std::uint16_t c = r.u16();
  if (h < 1 || w < 1 || c < 1) {
    fail(Errc::format_error, "AOIM " + path + ": degenerate dimensions");
  }
  MultiLabelMask mask = MultiLabelMask::empty(h, w, c);
  const std::size_t plane_bytes = (mask.pixel_count() + 7) / 8;
  const std::size_t pw = mask.plane_words();
  for (std::uint16_t cls = 0; cls < c; ++cls) {
    std::uint64_t* plane = mask.words.data() + cls * pw;
    for (std::size_t b = 0; b < plane_bytes; ++b) {
      plane[b / 8] |= static_cast<std::uint64_t>(r.u8()) << (8 * (b % 8));
    }
    // Trailing bits of the final byte must stay clear.
    const std::size_t tail = mask.pixel_count() % 64;
    if (tail != 0) {
      plane[pw - 1] &= (std::uint64_t(1) << tail) - 1;
    }
  }
  if (!r.at_end()) {
    fail(Errc::format_error, "AOIM " + path + ": trailing bytes");
  }
  return mask;
}

void save_soft_mask(const std::string& path, const SoftMask& soft) {
  Raster img;
  img.height = soft.height;
  img.width = soft.width;
  img.channels = soft.classes;
  img.data = soft.values;
  save_raster(path, img);
}

SoftMask load_soft_mask(const std::string& path) {
  Raster img = load_raster(path);
  SoftMask soft;
  soft.height = img.height;
  soft.width = img.width;
  soft.classes = img.channels;
  soft.values = std::move(img.data);
  return soft;
}

void write_manifest(const std::string& path,
                    const std::vector<ManifestEntry>& entries) {
  std::ostringstream out;
  out << "id\traster\tmask\n";
  for (const auto& e : entries) {
    out << e.id << '\t' << e.raster_path << '\t' << e.mask_path << '\n';
  }
  const std::string text = out.str();
  std::vector<std::uint8_t> bytes(text.begin(), text.end());
  detail::write_file(path, bytes);
}

std::vector<ManifestEntry> read_manifest(const std::string& path) {
  const auto bytes = detail::read_file(path);
  std::istringstream in(std::string(bytes.begin(), bytes.end()));
  std::string line;
  if (!std::getline(in, line) || line != "id\traster\tmask") {
    fail(Errc::format_error, "manifest " + path + ": missing header line");
  }
  const auto base = std::filesystem::path(path).parent_path();
  auto resolve = [&](const std::string& p) {
    std::filesystem::path fp(p);
    return fp.is_absolute() ? fp.string() : (base / fp).string();
  };
  std::vector<ManifestEntry> entries;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto t1 = line.find('\t');
    const auto t2 = line.find('\t', t1 == std::string::npos ? t1 : t1 + 1);
    if (t1 == std::string::npos || t2 == std::string::npos) {
      fail(Errc::format_error, "manifest " + path + ": malformed line " +
                                   std::to_string(lineno));
    }
    ManifestEntry e;
    e.id = line.substr(0, t1);
    e.raster_path = resolve(line.substr(t1 + 1, t2 - t1 - 1));
    e.mask_path = resolve(line.substr(t2 + 1));
    entries.push_back(std::move(e));
  }
  return entries;
}

}  // namespace aoiseg
