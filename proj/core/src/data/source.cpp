#include "ltmx/data/source.hpp"

#include <zlib.h>

#include <algorithm>
#include <array>
#include <cstring>
#include <fstream>
#include <iterator>
#include <tuple>

#include "ltmx/error.hpp"

namespace ltmx {

std::vector<std::int64_t> class_histogram(const LabeledSource& source) {
  std::vector<std::int64_t> counts(source.num_classes(), 0);
  for (std::size_t i = 0; i < source.size(); ++i) {
    const int y = source.label(i);
    if (y < 0 || y >= source.num_classes()) {
      throw DataError(source.name() + ": label " + std::to_string(y) + " out of range at index " +
                      std::to_string(i));
    }
    ++counts[y];
  }
  return counts;
}

ByteImageSource::ByteImageSource(std::string name, int channels, int height, int width,
                                 int num_classes, std::vector<std::uint8_t> pixels_chw,
                                 std::vector<int> labels)
    : name_(std::move(name)), channels_(channels), height_(height), width_(width),
      num_classes_(num_classes), pixels_(std::move(pixels_chw)), labels_(std::move(labels)) {
  const std::size_t per = static_cast<std::size_t>(channels_) * height_ * width_;
  if (pixels_.size() != per * labels_.size()) {
    throw DataError(name_ + ": pixel buffer holds " + std::to_string(pixels_.size()) +
                    " bytes, expected " + std::to_string(per * labels_.size()));
  }
  for (int y : labels_) {
    if (y < 0 || y >= num_classes_) throw DataError(name_ + ": label out of range");
  }
}

ModalityInput ByteImageSource::load(std::size_t index) const {
  if (index >= labels_.size()) throw DataError(name_ + ": index " + std::to_string(index) + " out of range");
  Image img(channels_, height_, width_);
  const std::size_t per = img.size();
  const std::uint8_t* src = pixels_.data() + index * per;
  for (std::size_t i = 0; i < per; ++i) img.pixels[i] = src[i] / 255.0;
  return img;
}

TabularSource::TabularSource(std::string name, TabularSchema schema, int num_classes,
                             std::vector<MetadataRecord> records, std::vector<int> labels)
    : name_(std::move(name)), schema_(std::move(schema)), num_classes_(num_classes),
      records_(std::move(records)), labels_(std::move(labels)) {
  if (records_.size() != labels_.size()) throw DataError(name_ + ": records and labels differ in length");
}

ModalityInput TabularSource::load(std::size_t index) const {
  return encode_tabular(records_.at(index), schema_);
}

namespace {

std::vector<std::uint8_t> read_all(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(const std::uint8_t* p) {
  return (std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) | (std::uint32_t{p[2]} << 8) | p[3];
}

}  // namespace

std::unique_ptr<ByteImageSource> read_idx_source(const std::string& name,
                                                 const std::string& images_path,
                                                 const std::string& labels_path) {
  const auto images = read_all(images_path);
  const auto labels = read_all(labels_path);
  if (images.size() < 16 || read_be32(images.data()) != 0x00000803) {
    throw DataError(images_path + ": not an idx3-ubyte image file");
  }
  if (labels.size() < 8 || read_be32(labels.data()) != 0x00000801) {
    throw DataError(labels_path + ": not an idx1-ubyte label file");
  }
  const std::uint32_t n = read_be32(images.data() + 4);
  const std::uint32_t rows = read_be32(images.data() + 8);
  const std::uint32_t cols = read_be32(images.data() + 12);
  if (read_be32(labels.data() + 4) != n) throw DataError("idx image and label counts differ");
  const std::size_t bytes = static_cast<std::size_t>(n) * rows * cols;
  if (images.size() != 16 + bytes || labels.size() != 8 + n) throw DataError("truncated idx file");

  std::vector<std::uint8_t> pixels(images.begin() + 16, images.end());
  std::vector<int> y(labels.begin() + 8, labels.end());
  return std::make_unique<ByteImageSource>(name, 1, static_cast<int>(rows), static_cast<int>(cols), 10,
                                           std::move(pixels), std::move(y));
}

// --- MATLAB level-5 MAT-file reader (numeric matrices only) ---------------

namespace {

enum MatType : std::uint32_t {
  miINT8 = 1, miUINT8 = 2, miINT16 = 3, miUINT16 = 4, miINT32 = 5, miUINT32 = 6,
  miSINGLE = 7, miDOUBLE = 9, miINT64 = 12, miUINT64 = 13, miMATRIX = 14, miCOMPRESSED = 15,
};

struct MatArray {
  std::string name;
  std::vector<std::int32_t> dims;
  std::vector<double> values;  // column-major
};

class MatCursor {
 public:
  MatCursor(const std::uint8_t* data, std::size_t size, bool swap) : p_(data), end_(data + size), swap_(swap) {}

  bool done() const { return p_ >= end_; }

  std::uint32_t u32(const std::uint8_t* at) const {
    std::uint32_t v;
    std::memcpy(&v, at, 4);
    return swap_ ? __builtin_bswap32(v) : v;
  }

  // Returns (type, payload pointer, payload size) and advances past padding.
  std::tuple<std::uint32_t, const std::uint8_t*, std::size_t> next() {
    if (end_ - p_ < 8) throw DataError("MAT file: truncated element tag");
    const std::uint32_t first = u32(p_);
    if ((first >> 16) != 0) {  // small data element, payload packed in the tag
      const std::uint32_t type = first & 0xffff;
      const std::size_t size = first >> 16;
      const std::uint8_t* payload = p_ + 4;
      p_ += 8;
      return {type, payload, size};
    }
    const std::size_t size = u32(p_ + 4);
    const std::uint8_t* payload = p_ + 8;
    if (static_cast<std::size_t>(end_ - payload) < size) throw DataError("MAT file: truncated element");
    std::size_t advance = 8 + size;
    if (first != miCOMPRESSED && advance % 8 != 0) advance += 8 - advance % 8;
    p_ = std::min(end_, p_ + advance);
    return {first, payload, size};
  }

  bool swap() const { return swap_; }

 private:
  const std::uint8_t* p_;
  const std::uint8_t* end_;
  bool swap_;
};

template <typename T>
T load_scalar(const std::uint8_t* p, bool swap) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  if (swap && sizeof(T) > 1) {
    auto* b = reinterpret_cast<std::uint8_t*>(&v);
    std::reverse(b, b + sizeof(T));
  }
  return v;
}

std::vector<double> decode_numeric(std::uint32_t type, const std::uint8_t* p, std::size_t bytes, bool swap) {
  std::vector<double> out;
  auto fill = [&](auto tag) {
    using T = decltype(tag);
    const std::size_t n = bytes / sizeof(T);
    out.resize(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = static_cast<double>(load_scalar<T>(p + i * sizeof(T), swap));
  };
  switch (type) {
    case miINT8: fill(std::int8_t{}); break;
    case miUINT8: fill(std::uint8_t{}); break;
    case miINT16: fill(std::int16_t{}); break;
    case miUINT16: fill(std::uint16_t{}); break;
    case miINT32: fill(std::int32_t{}); break;
    case miUINT32: fill(std::uint32_t{}); break;
    case miSINGLE: fill(float{}); break;
    case miDOUBLE: fill(double{}); break;
    case miINT64: fill(std::int64_t{}); break;
    case miUINT64: fill(std::uint64_t{}); break;
    default: throw DataError("MAT file: unsupported numeric element type " + std::to_string(type));
  }
  return out;
}

MatArray parse_matrix(const std::uint8_t* p, std::size_t size, bool swap) {
  MatCursor cur(p, size, swap);
  MatArray arr;
  auto [ftype, flags, fsize] = cur.next();
  (void)ftype;
  (void)fsize;
  const std::uint32_t mx_class = cur.u32(flags) & 0xff;
  if (mx_class < 6 || mx_class > 15) throw DataError("MAT file: only numeric arrays are supported");
  auto [dtype, dims, dsize] = cur.next();
  for (std::size_t i = 0; i + 4 <= dsize; i += 4) arr.dims.push_back(static_cast<std::int32_t>(cur.u32(dims + i)));
  (void)dtype;
  auto [ntype, name, nsize] = cur.next();
  (void)ntype;
  arr.name.assign(reinterpret_cast<const char*>(name), nsize);
  auto [rtype, real, rsize] = cur.next();
  arr.values = decode_numeric(rtype, real, rsize, swap);
  std::size_t expected = 1;
  for (auto d : arr.dims) expected *= static_cast<std::size_t>(d);
  if (arr.values.size() != expected) throw DataError("MAT file: array '" + arr.name + "' has wrong element count");
  return arr;
}

std::vector<std::uint8_t> inflate_all(const std::uint8_t* p, std::size_t size) {
  std::vector<std::uint8_t> out;
  z_stream zs{};
  if (inflateInit(&zs) != Z_OK) throw DataError("zlib init failed");
  zs.next_in = const_cast<Bytef*>(p);
  zs.avail_in = static_cast<uInt>(size);
  std::array<std::uint8_t, 1 << 16> buf{};
  int rc = Z_OK;
  while (rc != Z_STREAM_END) {
    zs.next_out = buf.data();
    zs.avail_out = static_cast<uInt>(buf.size());
    rc = inflate(&zs, Z_NO_FLUSH);
    if (rc != Z_OK && rc != Z_STREAM_END) {
      inflateEnd(&zs);
      throw DataError("MAT file: corrupt compressed element");
    }
    out.insert(out.end(), buf.data(), buf.data() + (buf.size() - zs.avail_out));
    if (rc == Z_OK && zs.avail_in == 0 && zs.avail_out != 0) break;
  }
  inflateEnd(&zs);
  return out;
}

void collect_arrays(MatCursor& cur, std::vector<MatArray>& out) {
  while (!cur.done()) {
    auto [type, payload, size] = cur.next();
    if (type == miCOMPRESSED) {
      const auto raw = inflate_all(payload, size);
      MatCursor inner(raw.data(), raw.size(), cur.swap());
      collect_arrays(inner, out);
    } else if (type == miMATRIX) {
      if (size > 0) out.push_back(parse_matrix(payload, size, cur.swap()));
    }
  }
}

}  // namespace

std::unique_ptr<ByteImageSource> read_svhn_mat_source(const std::string& name, const std::string& path) {
  const auto bytes = read_all(path);
  if (bytes.size() < 128) throw DataError(path + ": too small for a MAT file");
  if (std::memcmp(bytes.data(), "MATLAB 5.0", 10) != 0) {
    throw DataError(path + ": not a MATLAB 5.0 MAT file (v7.3/HDF5 files are not supported)");
  }
  const bool swap = bytes[126] == 'M' && bytes[127] == 'I';
  MatCursor cur(bytes.data() + 128, bytes.size() - 128, swap);
  std::vector<MatArray> arrays;
  collect_arrays(cur, arrays);

  const MatArray* x = nullptr;
  const MatArray* y = nullptr;
  for (const auto& a : arrays) {
    if (a.name == "X") x = &a;
    if (a.name == "y") y = &a;
  }
  if (!x || !y) throw DataError(path + ": expected variables X and y");
  if (x->dims.size() != 4 || x->dims[2] != 3) throw DataError(path + ": X must be HxWx3xN");
  const int h = x->dims[0];
  const int w = x->dims[1];
  const std::size_t n = static_cast<std::size_t>(x->dims[3]);
  if (y->values.size() != n) throw DataError(path + ": X and y disagree on sample count");

  std::vector<std::uint8_t> pixels(n * 3 * h * w);
  // MATLAB order is X(row, col, channel, sample), column-major.
  for (std::size_t s = 0; s < n; ++s) {
    for (int c = 0; c < 3; ++c) {
      for (int col = 0; col < w; ++col) {
        for (int row = 0; row < h; ++row) {
          const std::size_t src = row + static_cast<std::size_t>(h) * (col + static_cast<std::size_t>(w) * (c + 3 * s));
          pixels[((s * 3 + c) * h + row) * w + col] = static_cast<std::uint8_t>(x->values[src]);
        }
      }
    }
  }
  std::vector<int> labels(n);
  for (std::size_t s = 0; s < n; ++s) {
    const int v = static_cast<int>(y->values[s]);
    if (v < 1 || v > 10) throw DataError(path + ": label " + std::to_string(v) + " outside 1..10");
    labels[s] = v % 10;
  }
  return std::make_unique<ByteImageSource>(name, 3, h, w, 10, std::move(pixels), std::move(labels));
}

}  // namespace ltmx
