#include <cmath>
#include <cstring>
#include <fstream>
#include <vector>

#include "doctest.h"
#include "fetalsyn/errors.hpp"
#include "fetalsyn/volume_io.hpp"
#include "support.hpp"

using namespace fetalsyn;
using testing::TempDir;

namespace {

// Hand-built NIfTI-1 file: 348-byte header, 4 pad bytes, then the payload.
std::vector<char> nifti_bytes(Dims d, std::int16_t datatype, std::int16_t bitpix, float slope, float inter,
                              const std::vector<char>& payload) {
  std::vector<char> b(352, 0);
  const auto put = [&b](std::size_t at, auto v) { std::memcpy(b.data() + at, &v, sizeof v); };
  put(0, std::int32_t{348});
  const std::int16_t dim[8] = {3, static_cast<std::int16_t>(d.nx), static_cast<std::int16_t>(d.ny),
                               static_cast<std::int16_t>(d.nz), 1, 1, 1, 1};
  std::memcpy(b.data() + 40, dim, sizeof dim);
  put(70, datatype);
  put(72, bitpix);
  for (int i = 0; i < 8; ++i) put(76 + 4 * static_cast<std::size_t>(i), 1.0f);
  put(108, 352.0f);
  put(112, slope);
  put(116, inter);
  std::memcpy(b.data() + 344, "n+1", 4);
  b.resize(352 + payload.size());
  if (!payload.empty()) std::memcpy(b.data() + 352, payload.data(), payload.size());
  return b;
}

void write_bytes(const std::filesystem::path& p, const std::vector<char>& b) {
  std::ofstream os(p, std::ios::binary);
  os.write(b.data(), static_cast<std::streamsize>(b.size()));
}

template <class T>
std::vector<char> as_bytes(const std::vector<T>& v) {
  std::vector<char> b(v.size() * sizeof(T));
  std::memcpy(b.data(), v.data(), b.size());
  return b;
}

}  // namespace

TEST_SUITE("volume_io") {
  TEST_CASE("raw 4x4x4 of ones reads back as 64 ones") {
    TempDir dir("raw");
    const auto path = dir / "ones.raw";
    std::vector<float> ones(64, 1.0f);
    write_bytes(path, as_bytes(ones));
    std::ofstream(path.string() + ".hdr") << "dims: 4 4 4\ndtype: f32\norder: x-fastest\n";
    const Volume v = read_volume(path);
    CHECK(v.dims() == Dims{4, 4, 4});
    CHECK(v.size() == 64);
    for (std::size_t i = 0; i < v.size(); ++i) CHECK(v[i] == 1.0f);
  }

  TEST_CASE("round trip is bit-exact for both formats") {
    TempDir dir("rt");
    Volume v = testing::random_volume({5, 3, 7}, 11, -3.0, 3.0);
    v[0] = 1e-30f;
    for (const char* name : {"v.nii", "v.raw"}) {
      write_volume(v, dir / name);
      const Volume back = read_volume(dir / name);
      CHECK(back.dims() == v.dims());
      CHECK(std::memcmp(back.data().data(), v.data().data(), v.size() * sizeof(float)) == 0);
    }
  }

  TEST_CASE("1x1x1 volume is a valid minimal file") {
    TempDir dir("min");
    Volume v(Dims{1, 1, 1});
    v[0] = 0.25f;
    write_volume(v, dir / "m.nii");
    const Volume back = read_volume(dir / "m.nii");
    CHECK(back.dims() == v.dims());
    CHECK(back[0] == 0.25f);
  }

  TEST_CASE("labels round trip exactly") {
    TempDir dir("lab");
    LabelVolume lv(Dims{4, 5, 6});
    for (std::size_t i = 0; i < lv.size(); ++i) lv[i] = static_cast<std::uint8_t>(i % kNumClasses);
    for (const char* name : {"l.nii", "l.raw"}) {
      write_labels(lv, dir / name);
      CHECK(read_labels(dir / name) == lv);
    }
  }

  TEST_CASE("int16 with scl_slope 2 and scl_inter 1 maps stored 3 to 7") {
    TempDir dir("scl");
    const std::vector<std::int16_t> stored(8, 3);
    write_bytes(dir / "s.nii", nifti_bytes({2, 2, 2}, 4, 16, 2.0f, 1.0f, as_bytes(stored)));
    const Volume v = read_volume(dir / "s.nii");
    for (std::size_t i = 0; i < v.size(); ++i) CHECK(v[i] == 7.0f);
  }

  TEST_CASE("uint8 with zero slope is read unscaled") {
    TempDir dir("u8");
    const std::vector<std::uint8_t> stored = {0, 1, 2, 3, 4, 5, 6, 200};
    write_bytes(dir / "u.nii", nifti_bytes({2, 2, 2}, 2, 8, 0.0f, 0.0f, as_bytes(stored)));
    const Volume v = read_volume(dir / "u.nii");
    CHECK(v[7] == 200.0f);
    CHECK(v[3] == 3.0f);
  }

  TEST_CASE("malformed files are data errors naming the field") {
    TempDir dir("bad");
    const std::vector<float> four(4, 0.0f);
    write_bytes(dir / "trunc.nii", nifti_bytes({2, 2, 2}, 16, 32, 1.0f, 0.0f, as_bytes(four)));
    CHECK_THROWS_AS(read_volume(dir / "trunc.nii"), DataError);
    write_bytes(dir / "zero.nii", nifti_bytes({2, 0, 2}, 16, 32, 1.0f, 0.0f, {}));
    CHECK_THROWS_WITH_AS(read_volume(dir / "zero.nii"), doctest::Contains("zero extent"), DataError);
    write_bytes(dir / "f64.nii", nifti_bytes({1, 1, 1}, 64, 64, 1.0f, 0.0f, std::vector<char>(8, 0)));
    CHECK_THROWS_WITH_AS(read_volume(dir / "f64.nii"), doctest::Contains("datatype"), DataError);
    write_bytes(dir / "short.nii", std::vector<char>(100, 0));
    CHECK_THROWS_AS(read_volume(dir / "short.nii"), DataError);
    std::vector<float> nan(1, std::nanf(""));
    write_bytes(dir / "nan.nii", nifti_bytes({1, 1, 1}, 16, 32, 1.0f, 0.0f, as_bytes(nan)));
    CHECK_THROWS_AS(read_volume(dir / "nan.nii"), DataError);
    CHECK_THROWS_AS(read_volume(dir / "missing.nii"), DataError);
    CHECK_THROWS_AS(read_volume(dir / "v.img"), ArgumentError);
  }

  TEST_CASE("labels outside 0..7 are rejected") {
    TempDir dir("lbad");
    const std::vector<std::uint8_t> stored = {0, 9};
    write_bytes(dir / "l.nii", nifti_bytes({2, 1, 1}, 2, 8, 0.0f, 0.0f, as_bytes(stored)));
    CHECK_THROWS_AS(read_labels(dir / "l.nii"), DataError);
  }

  TEST_CASE("axis Z with native canvas returns the raw planes") {
    const Volume v = testing::random_volume({4, 4, 4}, 3);
    const auto s = extract_slices(v, Axis::Z, {4, 4});
    REQUIRE(s.slices.size() == 4);
    for (int z = 0; z < 4; ++z)
      for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x) CHECK(s.slices[static_cast<std::size_t>(z)].at(x, y) == v.at(x, y, z));
  }

  TEST_CASE("padding centers the plane with a zero border and keeps the sum") {
    const Volume v = testing::random_volume({4, 4, 4}, 4, 0.5, 1.0);
    const auto s = extract_slices(v, Axis::Z, {6, 6});
    for (int z = 0; z < 4; ++z) {
      const auto& p = s.slices[static_cast<std::size_t>(z)];
      double sum_p = 0, sum_v = 0;
      for (int v_ = 0; v_ < 6; ++v_)
        for (int u = 0; u < 6; ++u) {
          const bool inside = u >= 1 && u <= 4 && v_ >= 1 && v_ <= 4;
          if (inside) CHECK(p.at(u, v_) == v.at(u - 1, v_ - 1, z));
          else CHECK(p.at(u, v_) == 0.0f);
          sum_p += p.at(u, v_);
        }
      for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x) sum_v += v.at(x, y, z);
      CHECK(sum_p == doctest::Approx(sum_v).epsilon(1e-12));
    }
  }

  TEST_CASE("in-plane coordinates per axis") {
    const Dims d{3, 4, 5};
    CHECK(plane_size(d, Axis::X) == Canvas{4, 5});
    CHECK(plane_size(d, Axis::Y) == Canvas{3, 5});
    CHECK(plane_size(d, Axis::Z) == Canvas{3, 4});
    const Volume v = testing::random_volume(d, 5);
    const auto sx = extract_slices(v, Axis::X, plane_size(d, Axis::X));
    CHECK(sx.slices.size() == 3);
    CHECK(sx.slices[2].at(3, 4) == v.at(2, 3, 4));
    const auto sy = extract_slices(v, Axis::Y, plane_size(d, Axis::Y));
    CHECK(sy.slices.size() == 4);
    CHECK(sy.slices[1].at(2, 3) == v.at(2, 1, 3));
  }

  TEST_CASE("restack inverts extract for all axes when the canvas covers the plane") {
    const Dims d{5, 6, 7};
    const Volume v = testing::random_volume(d, 6);
    LabelVolume lv(d);
    for (std::size_t i = 0; i < lv.size(); ++i) lv[i] = static_cast<std::uint8_t>((i * 7) % kNumClasses);
    for (Axis a : {Axis::X, Axis::Y, Axis::Z}) {
      for (Canvas c : {plane_size(d, a), Canvas{9, 10}, Canvas{8, 8}}) {
        const auto r = restack(extract_slices(v, a, c), a, d);
        CHECK(r.volume == v);
        CHECK(r.uncovered_voxels == 0);
        CHECK(restack(extract_slices(lv, a, c), a, d).volume == lv);
      }
    }
  }

  TEST_CASE("cropping zero-fills and counts uncovered voxels") {
    const Dims d{6, 6, 2};
    const Volume v = testing::random_volume(d, 7, 0.5, 1.0);
    const auto r = restack(extract_slices(v, Axis::Z, {4, 4}), Axis::Z, d);
    CHECK(r.uncovered_voxels == 2 * (36 - 16));
    CHECK(r.volume.at(0, 0, 0) == 0.0f);
    CHECK(r.volume.at(1, 1, 0) == v.at(1, 1, 0));
  }

  TEST_CASE("odd padding places the extra row after the plane") {
    Volume v(Dims{1, 1, 1});
    v[0] = 1.0f;
    const auto s = extract_slices(v, Axis::Z, {4, 4});
    CHECK(s.slices[0].at(1, 1) == 1.0f);
  }

  TEST_CASE("restack contract violations") {
    const Dims d{4, 4, 4};
    const Volume v = testing::random_volume(d, 8);
    auto s = extract_slices(v, Axis::Z, {4, 4});
    CHECK_THROWS_AS(restack(s, Axis::Z, Dims{4, 4, 5}), DataError);
    CHECK_THROWS_AS(restack(s, Axis::X, d), DataError);
    s.slices[1] = Plane<float>(5, 4);
    CHECK_THROWS_AS(restack(s, Axis::Z, d), DataError);
    CHECK_THROWS_AS(extract_slices(v, Axis::Z, {0, 4}), ArgumentError);
  }

  TEST_CASE("one-slice stack restacks to a single plane") {
    const Volume v = testing::random_volume({3, 3, 1}, 9);
    CHECK(restack(extract_slices(v, Axis::Z, {3, 3}), Axis::Z, v.dims()).volume == v);
  }

  TEST_CASE("axis parsing") {
    CHECK(parse_axis("y") == Axis::Y);
    CHECK_THROWS_AS(parse_axis("w"), ArgumentError);
  }
}
