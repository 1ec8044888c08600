#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "core/tensor_io.hpp"
#include "oracles.hpp"

using namespace metalora;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const char* name) {
  const fs::path dir = fs::temp_directory_path() / "metalora_io_test";
  fs::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_CASE("mtk1 round trip is exact") {
  Rng rng(99);
  for (const auto& shape :
       {std::vector<std::size_t>{}, {1}, {5}, {3, 4}, {2, 3, 4}, {2, 2, 2, 2}}) {
    const DenseTensor t = testutil::rand_tensor(rng, shape, -1e6, 1e6);
    std::stringstream ss;
    write_mtk1(ss, t);
    const DenseTensor back = read_mtk1(ss);
    REQUIRE(back.same_shape(t));
    for (std::size_t i = 0; i < t.size(); ++i) CHECK(back[i] == t[i]);  // bitwise
  }
}

TEST_CASE("file round trip") {
  Rng rng(5);
  const DenseTensor t = testutil::rand_tensor(rng, {4, 7});
  const fs::path p = temp_file("roundtrip");
  save_tensor(p, t);
  const DenseTensor back = load_tensor(p);
  REQUIRE(back.same_shape(t));
  for (std::size_t i = 0; i < t.size(); ++i) CHECK(back[i] == t[i]);
}

TEST_CASE("bad magic rejected") {
  std::stringstream ss;
  ss << "NOTATNSRxxxxxxxxxxxx";
  CHECK_THROWS_AS(read_mtk1(ss), IoError);
}

TEST_CASE("truncated payload rejected") {
  const DenseTensor t({3, 3});
  std::stringstream ss;
  write_mtk1(ss, t);
  const std::string full = ss.str();
  std::stringstream cut(full.substr(0, full.size() - 5));
  CHECK_THROWS_AS(read_mtk1(cut), IoError);
}

TEST_CASE("trailing bytes rejected") {
  const DenseTensor t({2});
  std::stringstream ss;
  write_mtk1(ss, t);
  ss << "junk";
  CHECK_THROWS_AS(read_mtk1(ss), IoError);
}

TEST_CASE("float32 payloads load widened") {
  // Hand-built blob: magic, width 4, order 1, extent 2, floats {1.5, -2.25}.
  std::string blob = "MTKTNSR1";
  blob.push_back(4);
  const auto push_u32 = [&blob](std::uint32_t v) {
    for (int i = 0; i < 4; ++i) blob.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  };
  push_u32(1);
  push_u32(2);
  for (const float f : {1.5f, -2.25f}) {
    char buf[4];
    std::memcpy(buf, &f, 4);
    blob.append(buf, 4);
  }
  std::stringstream ss(blob);
  const DenseTensor t = read_mtk1(ss);
  REQUIRE(t.shape() == std::vector<std::size_t>{2});
  CHECK(t[0] == 1.5);
  CHECK(t[1] == -2.25);
}

TEST_CASE("missing file gives a readable error") {
  CHECK_THROWS_WITH_AS(load_tensor("/nonexistent/dir/blob"),
                       doctest::Contains("/nonexistent/dir/blob"), IoError);
}
