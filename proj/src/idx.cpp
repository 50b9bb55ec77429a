#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <iterator>

#include <fmt/format.h>

#include "sybilfl/data.hpp"

namespace sybilfl {
namespace {

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;

std::vector<unsigned char> read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IdxError(IdxError::Kind::Io, fmt::format("cannot open '{}'", path.string()));
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(const std::vector<unsigned char>& buf, std::size_t at, const std::filesystem::path& path) {
  if (buf.size() < at + 4) {
    throw IdxError(IdxError::Kind::Truncated, fmt::format("'{}' ends inside its header", path.string()));
  }
  return (std::uint32_t{buf[at]} << 24) | (std::uint32_t{buf[at + 1]} << 16) | (std::uint32_t{buf[at + 2]} << 8) |
         std::uint32_t{buf[at + 3]};
}

void put_be32(std::ofstream& out, std::uint32_t v) {
  const std::array<char, 4> b{static_cast<char>(v >> 24), static_cast<char>(v >> 16), static_cast<char>(v >> 8),
                              static_cast<char>(v)};
  out.write(b.data(), b.size());
}

struct IdxFile {
  std::vector<std::uint32_t> dims;
  std::vector<unsigned char> bytes;
  std::size_t payload_offset = 0;
};

IdxFile parse(const std::filesystem::path& path, std::uint32_t magic) {
  IdxFile f;
  f.bytes = read_all(path);
  const std::uint32_t got = read_be32(f.bytes, 0, path);
  if (got != magic) {
    throw IdxError(IdxError::Kind::BadMagic,
                   fmt::format("'{}' has magic 0x{:08x}, expected 0x{:08x}", path.string(), got, magic));
  }
  const std::size_t ndims = magic & 0xffu;
  std::size_t payload = 1;
  for (std::size_t d = 0; d < ndims; ++d) {
    f.dims.push_back(read_be32(f.bytes, 4 + 4 * d, path));
    payload *= f.dims.back();
  }
  f.payload_offset = 4 + 4 * ndims;
  if (f.bytes.size() < f.payload_offset + payload) {
    throw IdxError(IdxError::Kind::Truncated, fmt::format("'{}' declares {} payload bytes but holds {}", path.string(),
                                                          payload, f.bytes.size() - f.payload_offset));
  }
  return f;
}

}  // namespace

LabeledDataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
                        std::size_t num_classes) {
  const IdxFile images = parse(images_path, kImageMagic);
  const IdxFile labels = parse(labels_path, kLabelMagic);
  const std::size_t count = images.dims[0];
  if (labels.dims[0] != count) {
    throw IdxError(IdxError::Kind::CountMismatch,
                   fmt::format("'{}' holds {} images but '{}' holds {} labels", images_path.string(), count,
                               labels_path.string(), labels.dims[0]));
  }
  LabeledDataset out;
  out.num_classes = num_classes;
  out.image_shape = {1, images.dims[1], images.dims[2]};
  const std::size_t n = out.image_size();
  out.pixels.resize(count * n);
  for (std::size_t i = 0; i < count * n; ++i) {
    out.pixels[i] = static_cast<double>(images.bytes[images.payload_offset + i]) / 255.0;
  }
  out.labels.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    const int y = labels.bytes[labels.payload_offset + i];
    if (static_cast<std::size_t>(y) >= num_classes) {
      throw IdxError(IdxError::Kind::BadLabel,
                     fmt::format("'{}' sample {} has label {} outside [0, {})", labels_path.string(), i, y, num_classes));
    }
    out.labels[i] = y;
  }
  return out;
}

void write_idx(const LabeledDataset& data, const std::filesystem::path& images_path,
               const std::filesystem::path& labels_path) {
  data.validate();
  const auto& s = data.image_shape;
  if (s.size() != 3 || s[0] != 1) {
    throw std::invalid_argument(fmt::format("IDX writer needs (1,rows,cols) images, got {}", shape_string(s)));
  }
  std::ofstream img(images_path, std::ios::binary);
  std::ofstream lab(labels_path, std::ios::binary);
  if (!img) throw IdxError(IdxError::Kind::Io, fmt::format("cannot write '{}'", images_path.string()));
  if (!lab) throw IdxError(IdxError::Kind::Io, fmt::format("cannot write '{}'", labels_path.string()));
  put_be32(img, kImageMagic);
  put_be32(img, static_cast<std::uint32_t>(data.size()));
  put_be32(img, static_cast<std::uint32_t>(s[1]));
  put_be32(img, static_cast<std::uint32_t>(s[2]));
  for (double p : data.pixels) {
    const long v = std::lround(std::clamp(p, 0.0, 1.0) * 255.0);
    img.put(static_cast<char>(static_cast<unsigned char>(v)));
  }
  put_be32(lab, kLabelMagic);
  put_be32(lab, static_cast<std::uint32_t>(data.size()));
  for (int y : data.labels) lab.put(static_cast<char>(static_cast<unsigned char>(y)));
}

}  // namespace sybilfl
