#include "nrroom/image.hpp"

#include <zlib.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <memory>

namespace nrroom {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

constexpr double kGamma = 2.2;

float srgb_to_linear(uint8_t v) {
  return static_cast<float>(std::pow(v / 255.0, kGamma));
}

uint8_t linear_to_srgb(float v) {
  double c = std::pow(std::clamp(static_cast<double>(v), 0.0, 1.0), 1.0 / kGamma);
  return static_cast<uint8_t>(std::lround(c * 255.0));
}

void be32(std::vector<uint8_t>& out, uint32_t v) {
  out.push_back(static_cast<uint8_t>(v >> 24));
  out.push_back(static_cast<uint8_t>(v >> 16));
  out.push_back(static_cast<uint8_t>(v >> 8));
  out.push_back(static_cast<uint8_t>(v));
}

uint32_t read_be32(const uint8_t* p) {
  return (static_cast<uint32_t>(p[0]) << 24) | (static_cast<uint32_t>(p[1]) << 16) |
         (static_cast<uint32_t>(p[2]) << 8) | p[3];
}

void append_chunk(std::vector<uint8_t>& out, const char type[4], const std::vector<uint8_t>& payload) {
  be32(out, static_cast<uint32_t>(payload.size()));
  std::size_t start = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), payload.begin(), payload.end());
  uint32_t crc = crc32(0, out.data() + start, static_cast<uInt>(out.size() - start));
  be32(out, crc);
}

std::vector<uint8_t> zlib_deflate(const std::vector<uint8_t>& in) {
  uLongf cap = compressBound(static_cast<uLong>(in.size()));
  std::vector<uint8_t> out(cap);
  if (compress2(out.data(), &cap, in.data(), static_cast<uLong>(in.size()), 6) != Z_OK)
    throw Error("zlib compression failed");
  out.resize(cap);
  return out;
}

std::vector<uint8_t> zlib_inflate(const std::vector<uint8_t>& in, std::size_t expected) {
  std::vector<uint8_t> out(expected);
  z_stream zs{};
  if (inflateInit(&zs) != Z_OK) throw Error("zlib init failed");
  zs.next_in = const_cast<Bytef*>(in.data());
  zs.avail_in = static_cast<uInt>(in.size());
  zs.next_out = out.data();
  zs.avail_out = static_cast<uInt>(out.size());
  int rc = inflate(&zs, Z_FINISH);
  inflateEnd(&zs);
  if (rc != Z_STREAM_END || zs.total_out != expected)
    throw FormatError("corrupt PNG stream");
  return out;
}

int paeth(int a, int b, int c) {
  int p = a + b - c;
  int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
  if (pa <= pb && pa <= pc) return a;
  if (pb <= pc) return b;
  return c;
}

std::vector<uint8_t> read_file(const std::string& path) {
  FilePtr f(std::fopen(path.c_str(), "rb"));
  if (!f) throw ValidationError("cannot open " + path);
  std::fseek(f.get(), 0, SEEK_END);
  long size = std::ftell(f.get());
  std::fseek(f.get(), 0, SEEK_SET);
  std::vector<uint8_t> buf(static_cast<std::size_t>(size));
  if (size > 0 && std::fread(buf.data(), 1, buf.size(), f.get()) != buf.size())
    throw FormatError("short read on " + path);
  return buf;
}

void write_file(const std::string& path, const void* data, std::size_t size) {
  FilePtr f(std::fopen(path.c_str(), "wb"));
  if (!f) throw ValidationError("cannot write " + path);
  if (std::fwrite(data, 1, size, f.get()) != size) throw Error("short write on " + path);
}

bool has_suffix(const std::string& s, const char* suffix) {
  std::size_t n = std::strlen(suffix);
  return s.size() >= n && s.compare(s.size() - n, n, suffix) == 0;
}

}  // namespace

void write_png(const std::string& path, const Image& img) {
  if (img.w <= 0 || img.h <= 0 || (img.c != 1 && img.c != 3))
    throw ValidationError("write_png expects 1 or 3 channels");
  const int bpp = img.c;
  std::vector<uint8_t> raw;
  raw.reserve(static_cast<std::size_t>(img.h) * (1 + img.w * bpp));
  for (int y = 0; y < img.h; ++y) {
    raw.push_back(0);  // filter: none
    for (int x = 0; x < img.w; ++x)
      for (int ch = 0; ch < bpp; ++ch) raw.push_back(linear_to_srgb(img.at(x, y, ch)));
  }
  std::vector<uint8_t> out = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  std::vector<uint8_t> ihdr;
  be32(ihdr, static_cast<uint32_t>(img.w));
  be32(ihdr, static_cast<uint32_t>(img.h));
  ihdr.push_back(8);                          // bit depth
  ihdr.push_back(img.c == 1 ? 0 : 2);         // gray / truecolor
  ihdr.push_back(0);
  ihdr.push_back(0);
  ihdr.push_back(0);                          // no interlace
  append_chunk(out, "IHDR", ihdr);
  append_chunk(out, "IDAT", zlib_deflate(raw));
  append_chunk(out, "IEND", {});
  write_file(path, out.data(), out.size());
}

Image read_png(const std::string& path) {
  std::vector<uint8_t> buf = read_file(path);
  static const uint8_t sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  if (buf.size() < 8 || std::memcmp(buf.data(), sig, 8) != 0)
    throw FormatError("not a PNG file: " + path);

  uint32_t w = 0, h = 0;
  int bit_depth = 0, color_type = 0, interlace = 0;
  std::vector<uint8_t> idat;
  std::size_t pos = 8;
  while (pos + 8 <= buf.size()) {
    uint32_t len = read_be32(buf.data() + pos);
    const char* type = reinterpret_cast<const char*>(buf.data() + pos + 4);
    if (pos + 12 + len > buf.size()) throw FormatError("truncated PNG chunk");
    const uint8_t* payload = buf.data() + pos + 8;
    if (std::memcmp(type, "IHDR", 4) == 0) {
      if (len != 13) throw FormatError("bad IHDR");
      w = read_be32(payload);
      h = read_be32(payload + 4);
      bit_depth = payload[8];
      color_type = payload[9];
      interlace = payload[12];
    } else if (std::memcmp(type, "IDAT", 4) == 0) {
      idat.insert(idat.end(), payload, payload + len);
    } else if (std::memcmp(type, "IEND", 4) == 0) {
      break;
    }
    pos += 12 + len;
  }
  if (w == 0 || h == 0) throw FormatError("PNG missing IHDR");
  if (bit_depth != 8) throw FormatError("only 8-bit PNG supported");
  if (interlace != 0) throw FormatError("interlaced PNG not supported");
  int src_ch;
  switch (color_type) {
    case 0: src_ch = 1; break;
    case 2: src_ch = 3; break;
    case 6: src_ch = 4; break;
    default: throw FormatError("unsupported PNG color type");
  }

  std::size_t stride = static_cast<std::size_t>(w) * src_ch;
  std::vector<uint8_t> raw = zlib_inflate(idat, (stride + 1) * h);

  // undo per-row filters in place
  std::vector<uint8_t> prev(stride, 0);
  Image img(static_cast<int>(w), static_cast<int>(h), src_ch == 1 ? 1 : 3);
  std::vector<uint8_t> cur(stride);
  for (uint32_t y = 0; y < h; ++y) {
    const uint8_t* row = raw.data() + y * (stride + 1);
    uint8_t filter = row[0];
    for (std::size_t i = 0; i < stride; ++i) {
      int a = i >= static_cast<std::size_t>(src_ch) ? cur[i - src_ch] : 0;
      int b = prev[i];
      int c = i >= static_cast<std::size_t>(src_ch) ? prev[i - src_ch] : 0;
      int x = row[1 + i];
      switch (filter) {
        case 0: break;
        case 1: x += a; break;
        case 2: x += b; break;
        case 3: x += (a + b) / 2; break;
        case 4: x += paeth(a, b, c); break;
        default: throw FormatError("bad PNG filter");
      }
      cur[i] = static_cast<uint8_t>(x & 0xff);
    }
    for (uint32_t xpix = 0; xpix < w; ++xpix)
      for (int ch = 0; ch < img.c; ++ch)
        img.at(static_cast<int>(xpix), static_cast<int>(y), ch) =
            srgb_to_linear(cur[xpix * src_ch + ch]);
    prev = cur;
  }
  return img;
}

namespace {

void put_u32le(std::vector<uint8_t>& out, uint32_t v) {
  out.push_back(static_cast<uint8_t>(v));
  out.push_back(static_cast<uint8_t>(v >> 8));
  out.push_back(static_cast<uint8_t>(v >> 16));
  out.push_back(static_cast<uint8_t>(v >> 24));
}

uint32_t get_u32le(const uint8_t* p) {
  return p[0] | (static_cast<uint32_t>(p[1]) << 8) | (static_cast<uint32_t>(p[2]) << 16) |
         (static_cast<uint32_t>(p[3]) << 24);
}

Image read_float_blob(const std::string& path, const char* magic, bool versioned) {
  std::vector<uint8_t> buf = read_file(path);
  std::size_t header = 4 + (versioned ? 4 : 0) + 8 + (versioned ? 0 : 4);
  if (buf.size() < header || std::memcmp(buf.data(), magic, 4) != 0)
    throw FormatError(std::string("bad ") + magic + " file: " + path);
  std::size_t off = 4;
  if (versioned) {
    uint32_t version = get_u32le(buf.data() + off);
    if (version != 1) throw FormatError(std::string("unsupported ") + magic + " version");
    off += 4;
  }
  Image img;
  img.w = static_cast<int>(get_u32le(buf.data() + off));
  img.h = static_cast<int>(get_u32le(buf.data() + off + 4));
  off += 8;
  if (versioned) {
    img.c = 3;
  } else {
    img.c = static_cast<int>(get_u32le(buf.data() + off));
    off += 4;
  }
  if (img.w <= 0 || img.h <= 0 || img.c <= 0 || img.c > 4)
    throw FormatError("bad image dims in " + path);
  std::size_t n = static_cast<std::size_t>(img.w) * img.h * img.c;
  if (buf.size() < off + 4 * n) throw FormatError("truncated image data in " + path);
  img.data.resize(n);
  std::memcpy(img.data.data(), buf.data() + off, 4 * n);
  return img;
}

}  // namespace

Image read_imgf(const std::string& path) { return read_float_blob(path, "IMGF", false); }

void write_imgf(const std::string& path, const Image& img) {
  std::vector<uint8_t> out;
  out.insert(out.end(), {'I', 'M', 'G', 'F'});
  put_u32le(out, static_cast<uint32_t>(img.w));
  put_u32le(out, static_cast<uint32_t>(img.h));
  put_u32le(out, static_cast<uint32_t>(img.c));
  std::size_t start = out.size();
  out.resize(start + img.data.size() * 4);
  std::memcpy(out.data() + start, img.data.data(), img.data.size() * 4);
  write_file(path, out.data(), out.size());
}

Image read_envm(const std::string& path) {
  Image img = read_float_blob(path, "ENVM", true);
  if (img.w != 2 * img.h) throw BadAspect();
  return img;
}

void write_envm(const std::string& path, const Image& img) {
  if (img.w != 2 * img.h) throw BadAspect();
  if (img.c != 3) throw ValidationError("ENVM requires 3 channels");
  std::vector<uint8_t> out;
  out.insert(out.end(), {'E', 'N', 'V', 'M'});
  put_u32le(out, 1);
  put_u32le(out, static_cast<uint32_t>(img.w));
  put_u32le(out, static_cast<uint32_t>(img.h));
  std::size_t start = out.size();
  out.resize(start + img.data.size() * 4);
  std::memcpy(out.data() + start, img.data.data(), img.data.size() * 4);
  write_file(path, out.data(), out.size());
}

Image read_image(const std::string& path) {
  if (has_suffix(path, ".png")) return read_png(path);
  if (has_suffix(path, ".imgf")) return read_imgf(path);
  if (has_suffix(path, ".envm")) return read_envm(path);
  throw ValidationError("unknown image extension: " + path);
}

void write_image(const std::string& path, const Image& img) {
  if (has_suffix(path, ".png")) return write_png(path, img);
  if (has_suffix(path, ".imgf")) return write_imgf(path, img);
  if (has_suffix(path, ".envm")) return write_envm(path, img);
  throw ValidationError("unknown image extension: " + path);
}

double psnr(const Image& a, const Image& b) {
  if (a.w != b.w || a.h != b.h || a.c != b.c) throw ValidationError("psnr: size mismatch");
  double mse = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    double d = static_cast<double>(a.data[i]) - b.data[i];
    mse += d * d;
  }
  mse /= static_cast<double>(a.data.size());
  if (mse <= 0) return 1e9;
  return -10.0 * std::log10(mse);
}

}  // namespace nrroom
