#include "core/tensor_io.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>

namespace metalora {

namespace {

constexpr char kMagic[8] = {'M', 'T', 'K', 'T', 'N', 'S', 'R', '1'};

static_assert(std::endian::native == std::endian::little,
              "MTK1 reader/writer assumes a little-endian host");

void put_u32(std::ostream& os, std::uint32_t v) {
  char buf[4];
  std::memcpy(buf, &v, 4);
  os.write(buf, 4);
}

std::uint32_t get_u32(std::istream& is, const std::string& origin) {
  char buf[4];
  if (!is.read(buf, 4)) throw IoError("truncated MTK1 header in " + origin);
  std::uint32_t v;
  std::memcpy(&v, buf, 4);
  return v;
}

}  // namespace

void write_mtk1(std::ostream& os, const DenseTensor& t) {
  os.write(kMagic, 8);
  const unsigned char width = static_cast<unsigned char>(t.precision());
  os.put(static_cast<char>(width));
  if (t.order() > std::numeric_limits<std::uint32_t>::max()) throw IoError("tensor order too large for MTK1");
  put_u32(os, static_cast<std::uint32_t>(t.order()));
  for (std::size_t e : t.shape()) {
    if (e > std::numeric_limits<std::uint32_t>::max()) throw IoError("extent too large for MTK1");
    put_u32(os, static_cast<std::uint32_t>(e));
  }
  if (width == 8) {
    os.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.size() * 8));
  } else {
    for (std::size_t i = 0; i < t.size(); ++i) {
      const float f = static_cast<float>(t[i]);
      char buf[4];
      std::memcpy(buf, &f, 4);
      os.write(buf, 4);
    }
  }
  if (!os) throw IoError("failed to write MTK1 stream");
}

DenseTensor read_mtk1(std::istream& is, const std::string& origin) {
  char magic[8];
  if (!is.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0) {
    throw IoError("not an MTK1 tensor: bad magic in " + origin);
  }
  const int width = is.get();
  if (width != 4 && width != 8) {
    throw IoError(strf("bad MTK1 element width ", width, " in ", origin));
  }
  const std::uint32_t order = get_u32(is, origin);
  std::vector<std::size_t> shape(order);
  std::size_t count = 1;
  for (auto& e : shape) {
    e = get_u32(is, origin);
    if (e == 0) throw IoError("zero extent in MTK1 tensor in " + origin);
    count *= e;
  }
  std::vector<double> data(count);
  if (width == 8) {
    if (!is.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(count * 8))) {
      throw IoError("MTK1 payload shorter than header promises in " + origin);
    }
  } else {
    for (std::size_t i = 0; i < count; ++i) {
      char buf[4];
      if (!is.read(buf, 4)) throw IoError("MTK1 payload shorter than header promises in " + origin);
      float f;
      std::memcpy(&f, buf, 4);
      data[i] = static_cast<double>(f);
    }
  }
  // Reject trailing bytes so the payload length matches the header exactly.
  is.peek();
  if (!is.eof()) throw IoError("MTK1 payload longer than header promises in " + origin);

  DenseTensor t(std::move(shape), std::move(data));
  if (width == 4) t.to_precision(Precision::F32);
  return t;
}

void save_tensor(const std::filesystem::path& path, const DenseTensor& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for writing: " + path.string());
  write_mtk1(os, t);
  os.close();
  if (!os) throw IoError("failed writing " + path.string());
}

DenseTensor load_tensor(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open for reading: " + path.string());
  return read_mtk1(is, path.string());
}

}  // namespace metalora
