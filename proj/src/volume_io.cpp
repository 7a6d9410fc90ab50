#include "fetalsyn/volume_io.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace fetalsyn {
namespace {

static_assert(std::endian::native == std::endian::little, "little-endian host required");

constexpr std::int32_t kHeaderSize = 348;
constexpr std::size_t kDataOffset = 352;  // header + 4-byte extension flag

constexpr std::int16_t kDtUint8 = 2;
constexpr std::int16_t kDtInt16 = 4;
constexpr std::int16_t kDtFloat32 = 16;

// Byte offsets of the NIfTI-1 header fields this module touches.
namespace off {
constexpr std::size_t sizeof_hdr = 0;
constexpr std::size_t dim = 40;
constexpr std::size_t datatype = 70;
constexpr std::size_t bitpix = 72;
constexpr std::size_t pixdim = 76;
constexpr std::size_t vox_offset = 108;
constexpr std::size_t scl_slope = 112;
constexpr std::size_t scl_inter = 116;
constexpr std::size_t xyzt_units = 123;
constexpr std::size_t sform_code = 254;
constexpr std::size_t srow_x = 280;
constexpr std::size_t magic = 344;
}  // namespace off

template <class T>
T get(const std::array<char, kHeaderSize>& h, std::size_t at) {
  T v;
  std::memcpy(&v, h.data() + at, sizeof(T));
  return v;
}

template <class T>
void put(std::array<char, kHeaderSize>& h, std::size_t at, T v) {
  std::memcpy(h.data() + at, &v, sizeof(T));
}

std::vector<char> read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return bytes;
}

void write_all(const std::filesystem::path& path, const std::vector<char>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open for writing " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed: " + path.string());
}

struct Decoded {
  Dims dims;
  std::optional<Spacing> spacing;
  std::vector<double> values;
};

std::size_t dtype_size(std::int16_t dt) {
  switch (dt) {
    case kDtUint8: return 1;
    case kDtInt16: return 2;
    case kDtFloat32: return 4;
    default: return 0;
  }
}

std::vector<double> decode_payload(const char* p, std::size_t n, std::int16_t dt) {
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    switch (dt) {
      case kDtUint8: out[i] = static_cast<unsigned char>(p[i]); break;
      case kDtInt16: {
        std::int16_t v;
        std::memcpy(&v, p + 2 * i, 2);
        out[i] = v;
        break;
      }
      default: {
        float v;
        std::memcpy(&v, p + 4 * i, 4);
        out[i] = v;
        break;
      }
    }
  }
  return out;
}

Decoded decode_nifti(const std::filesystem::path& path) {
  const auto bytes = read_all(path);
  const std::string name = path.string();
  if (bytes.size() < static_cast<std::size_t>(kHeaderSize)) {
    throw DataError(name + ": truncated header (" + std::to_string(bytes.size()) + " bytes)");
  }
  std::array<char, kHeaderSize> h{};
  std::memcpy(h.data(), bytes.data(), kHeaderSize);

  if (get<std::int32_t>(h, off::sizeof_hdr) != kHeaderSize) {
    throw DataError(name + ": sizeof_hdr is not 348 (big-endian or not NIfTI-1)");
  }
  if (std::memcmp(h.data() + off::magic, "n+1", 4) != 0) {
    throw DataError(name + ": magic is not \"n+1\" (only single-file .nii supported)");
  }
  std::array<std::int16_t, 8> dim{};
  for (int i = 0; i < 8; ++i) dim[i] = get<std::int16_t>(h, off::dim + 2 * i);
  if (dim[0] < 1 || dim[0] > 7) throw DataError(name + ": dim[0] = " + std::to_string(dim[0]));
  for (int i = 4; i <= dim[0]; ++i) {
    if (dim[i] != 1) throw DataError(name + ": dim[" + std::to_string(i) + "] must be 1 (3D only)");
  }
  Dims dims{dim[1], dim[0] >= 2 ? dim[2] : 1, dim[0] >= 3 ? dim[3] : 1};
  const char* axes[] = {"dim[1]", "dim[2]", "dim[3]"};
  for (int a = 0; a < 3; ++a) {
    if (dims.extent(a) <= 0) {
      throw DataError(name + ": " + axes[a] + " has zero extent");
    }
  }

  const auto dt = get<std::int16_t>(h, off::datatype);
  const std::size_t elem = dtype_size(dt);
  if (elem == 0) throw DataError(name + ": unsupported datatype " + std::to_string(dt));
  const auto bitpix = get<std::int16_t>(h, off::bitpix);
  if (bitpix != static_cast<std::int16_t>(8 * elem)) {
    throw DataError(name + ": bitpix " + std::to_string(bitpix) + " inconsistent with datatype");
  }

  const float vox_offset = get<float>(h, off::vox_offset);
  if (!(vox_offset >= static_cast<float>(kHeaderSize))) {
    throw DataError(name + ": vox_offset " + std::to_string(vox_offset) + " below 348");
  }
  const auto start = static_cast<std::size_t>(vox_offset);
  const std::size_t need = start + dims.count() * elem;
  if (bytes.size() < need) {
    throw DataError(name + ": truncated voxel data (" + std::to_string(bytes.size()) + " of " +
                    std::to_string(need) + " bytes)");
  }

  Decoded d;
  d.dims = dims;
  d.values = decode_payload(bytes.data() + start, dims.count(), dt);

  const float slope = get<float>(h, off::scl_slope);
  const float inter = get<float>(h, off::scl_inter);
  // slope 0 (or NaN) means "no scaling"
  if (std::isfinite(slope) && slope != 0.0f && !(slope == 1.0f && inter == 0.0f)) {
    const double s = slope, b = std::isfinite(inter) ? inter : 0.0;
    for (auto& v : d.values) v = v * s + b;
  }

  Spacing sp{get<float>(h, off::pixdim + 4), get<float>(h, off::pixdim + 8),
             get<float>(h, off::pixdim + 12)};
  if (sp.sx > 0 && sp.sy > 0 && sp.sz > 0) d.spacing = sp;
  return d;
}

void encode_nifti(const std::filesystem::path& path, const Dims& dims,
                  const std::optional<Spacing>& spacing, std::int16_t dt,
                  const std::vector<char>& payload) {
  std::array<char, kHeaderSize> h{};
  put<std::int32_t>(h, off::sizeof_hdr, kHeaderSize);
  const std::array<std::int16_t, 8> dim{3, static_cast<std::int16_t>(dims.nx),
                                        static_cast<std::int16_t>(dims.ny),
                                        static_cast<std::int16_t>(dims.nz), 1, 1, 1, 1};
  for (int i = 0; i < 8; ++i) put<std::int16_t>(h, off::dim + 2 * i, dim[i]);
  put<std::int16_t>(h, off::datatype, dt);
  put<std::int16_t>(h, off::bitpix, static_cast<std::int16_t>(8 * dtype_size(dt)));
  const Spacing sp = spacing.value_or(Spacing{});
  const float pix[8] = {1.0f, static_cast<float>(sp.sx), static_cast<float>(sp.sy),
                        static_cast<float>(sp.sz), 0, 0, 0, 0};
  for (int i = 0; i < 8; ++i) put<float>(h, off::pixdim + 4 * i, pix[i]);
  put<float>(h, off::vox_offset, static_cast<float>(kDataOffset));
  put<float>(h, off::scl_slope, 1.0f);
  put<float>(h, off::scl_inter, 0.0f);
  h[off::xyzt_units] = 2;  // millimeters
  put<std::int16_t>(h, off::sform_code, 1);
  const float srow[12] = {pix[1], 0, 0, 0, 0, pix[2], 0, 0, 0, 0, pix[3], 0};
  for (int i = 0; i < 12; ++i) put<float>(h, off::srow_x + 4 * i, srow[i]);
  std::memcpy(h.data() + off::magic, "n+1", 4);

  for (int a = 0; a < 3; ++a) {
    if (dims.extent(a) > 32767) throw ArgumentError("extent too large for NIfTI-1: " + to_string(dims));
  }

  std::vector<char> bytes(kDataOffset + payload.size(), 0);
  std::memcpy(bytes.data(), h.data(), kHeaderSize);
  std::memcpy(bytes.data() + kDataOffset, payload.data(), payload.size());
  write_all(path, bytes);
}

std::filesystem::path sidecar_path(const std::filesystem::path& path) {
  return std::filesystem::path(path.string() + ".hdr");
}

Decoded decode_raw(const std::filesystem::path& path) {
  const auto side = sidecar_path(path);
  std::ifstream in(side);
  if (!in) throw DataError("cannot open raw sidecar " + side.string());
  Dims dims{};
  std::string dtype, order;
  bool have_dims = false;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "dims:") {
      if (!(ls >> dims.nx >> dims.ny >> dims.nz)) throw DataError(side.string() + ": malformed dims line");
      have_dims = true;
    } else if (key == "dtype:") {
      ls >> dtype;
    } else if (key == "order:") {
      ls >> order;
    }
  }
  if (!have_dims) throw DataError(side.string() + ": missing dims");
  const char* axes[] = {"nx", "ny", "nz"};
  for (int a = 0; a < 3; ++a) {
    if (dims.extent(a) <= 0) throw DataError(side.string() + ": dims " + axes[a] + " has zero extent");
  }
  if (!order.empty() && order != "x-fastest") throw DataError(side.string() + ": unsupported order " + order);
  std::int16_t dt = 0;
  if (dtype == "f32") dt = kDtFloat32;
  else if (dtype == "u8") dt = kDtUint8;
  else if (dtype == "i16") dt = kDtInt16;
  else throw DataError(side.string() + ": unsupported dtype '" + dtype + "'");

  const auto bytes = read_all(path);
  const std::size_t need = dims.count() * dtype_size(dt);
  if (bytes.size() < need) {
    throw DataError(path.string() + ": truncated voxel data (" + std::to_string(bytes.size()) + " of " +
                    std::to_string(need) + " bytes)");
  }
  Decoded d;
  d.dims = dims;
  d.values = decode_payload(bytes.data(), dims.count(), dt);
  return d;
}

void encode_raw(const std::filesystem::path& path, const Dims& dims, const std::vector<char>& f32_payload) {
  write_all(path, f32_payload);
  std::ofstream side(sidecar_path(path), std::ios::trunc);
  if (!side) throw DataError("cannot open for writing " + sidecar_path(path).string());
  side << "dims: " << dims.nx << ' ' << dims.ny << ' ' << dims.nz << "\n"
       << "dtype: f32\n"
       << "order: x-fastest\n";
  if (!side) throw DataError("write failed: " + sidecar_path(path).string());
}

Decoded decode(const std::filesystem::path& path, FileFormat format) {
  return format == FileFormat::Nifti1 ? decode_nifti(path) : decode_raw(path);
}

std::vector<char> float_payload(const std::vector<float>& values) {
  std::vector<char> out(values.size() * 4);
  std::memcpy(out.data(), values.data(), out.size());
  return out;
}

}  // namespace

FileFormat format_from_path(const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  if (ext == ".nii") return FileFormat::Nifti1;
  if (ext == ".raw") return FileFormat::Raw;
  throw ArgumentError("cannot infer volume format from '" + path.string() + "' (expected .nii or .raw)");
}

Volume read_volume(const std::filesystem::path& path, FileFormat format) {
  auto d = decode(path, format);
  std::vector<float> voxels(d.values.size());
  for (std::size_t i = 0; i < voxels.size(); ++i) {
    voxels[i] = static_cast<float>(d.values[i]);
    if (!std::isfinite(voxels[i])) {
      throw DataError(path.string() + ": non-finite intensity at voxel " + std::to_string(i));
    }
  }
  Volume v(d.dims, std::move(voxels));
  v.spacing = d.spacing;
  return v;
}

Volume read_volume(const std::filesystem::path& path) { return read_volume(path, format_from_path(path)); }

void write_volume(const Volume& v, const std::filesystem::path& path, FileFormat format) {
  if (format == FileFormat::Nifti1) {
    encode_nifti(path, v.dims(), v.spacing, kDtFloat32, float_payload(v.data()));
  } else {
    encode_raw(path, v.dims(), float_payload(v.data()));
  }
}

void write_volume(const Volume& v, const std::filesystem::path& path) {
  write_volume(v, path, format_from_path(path));
}

LabelVolume read_labels(const std::filesystem::path& path, FileFormat format) {
  auto d = decode(path, format);
  std::vector<std::uint8_t> labels(d.values.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double x = d.values[i];
    if (!(x >= 0.0 && x <= kMaxLabel) || x != std::floor(x)) {
      throw DataError(path.string() + ": voxel " + std::to_string(i) + " value " + std::to_string(x) +
                      " is not a label in [0, 7]");
    }
    labels[i] = static_cast<std::uint8_t>(x);
  }
  return LabelVolume(d.dims, std::move(labels));
}

LabelVolume read_labels(const std::filesystem::path& path) { return read_labels(path, format_from_path(path)); }

void write_labels(const LabelVolume& lv, const std::filesystem::path& path, FileFormat format) {
  if (format == FileFormat::Nifti1) {
    std::vector<char> payload(lv.size());
    std::memcpy(payload.data(), lv.data().data(), lv.size());
    encode_nifti(path, lv.dims(), std::nullopt, kDtUint8, payload);
  } else {
    std::vector<float> f(lv.data().begin(), lv.data().end());
    encode_raw(path, lv.dims(), float_payload(f));
  }
}

void write_labels(const LabelVolume& lv, const std::filesystem::path& path) {
  write_labels(lv, path, format_from_path(path));
}

// ---------------------------------------------------------------------------

const char* axis_name(Axis a) {
  switch (a) {
    case Axis::X: return "x";
    case Axis::Y: return "y";
    default: return "z";
  }
}

Axis parse_axis(const std::string& s) {
  if (s == "x" || s == "sagittal") return Axis::X;
  if (s == "y" || s == "coronal") return Axis::Y;
  if (s == "z" || s == "axial") return Axis::Z;
  throw ArgumentError("unknown axis '" + s + "' (expected x, y or z)");
}

Canvas plane_size(const Dims& d, Axis axis) {
  switch (axis) {
    case Axis::X: return {d.ny, d.nz};
    case Axis::Y: return {d.nx, d.nz};
    default: return {d.nx, d.ny};
  }
}

namespace {

// Maps (slice index k, in-plane u, v) to (x, y, z).
inline std::array<int, 3> to_xyz(Axis axis, int k, int u, int v) {
  switch (axis) {
    case Axis::X: return {k, u, v};
    case Axis::Y: return {u, k, v};
    default: return {u, v, k};
  }
}

// Canvas position = native position + offset; negative offsets crop.
inline int center_offset(int canvas, int native) {
  const int diff = canvas - native;
  return diff >= 0 ? diff / 2 : -((1 - diff) / 2);
}

template <class T, class G>
SliceStack<T> extract_impl(const G& g, Axis axis, Canvas canvas) {
  if (canvas.w < 1 || canvas.h < 1) throw ArgumentError("canvas must be at least 1x1");
  const Dims& d = g.dims();
  const Canvas native = plane_size(d, axis);
  const int ou = center_offset(canvas.w, native.w);
  const int ov = center_offset(canvas.h, native.h);
  const int n = d.extent(static_cast<int>(axis));
  SliceStack<T> s;
  s.axis = axis;
  s.canvas = canvas;
  s.slices.assign(static_cast<std::size_t>(n), Plane<T>(canvas.w, canvas.h, T{}));
  for (int k = 0; k < n; ++k) {
    auto& plane = s.slices[static_cast<std::size_t>(k)];
    for (int v = 0; v < canvas.h; ++v) {
      const int sv = v - ov;
      if (sv < 0 || sv >= native.h) continue;
      for (int u = 0; u < canvas.w; ++u) {
        const int su = u - ou;
        if (su < 0 || su >= native.w) continue;
        const auto p = to_xyz(axis, k, su, sv);
        plane.at(u, v) = g.at(p[0], p[1], p[2]);
      }
    }
  }
  return s;
}

template <class T, class G>
Restacked<G> restack_impl(const SliceStack<T>& s, Axis axis, Dims target) {
  if (!target.positive()) throw ArgumentError("restack target dims must be positive");
  if (s.axis != axis) {
    throw DataError(std::string("restack: stack was extracted along ") + axis_name(s.axis) +
                    ", not " + axis_name(axis));
  }
  const int n = target.extent(static_cast<int>(axis));
  if (static_cast<int>(s.slices.size()) != n) {
    throw DataError("restack: " + std::to_string(s.slices.size()) + " slices for extent " +
                    std::to_string(n) + " along axis " + axis_name(axis));
  }
  for (const auto& p : s.slices) {
    if (p.w != s.canvas.w || p.h != s.canvas.h) {
      throw DataError("restack: slice canvas " + std::to_string(p.w) + "x" + std::to_string(p.h) +
                      " differs from stack canvas " + std::to_string(s.canvas.w) + "x" +
                      std::to_string(s.canvas.h));
    }
  }
  const Canvas native = plane_size(target, axis);
  const int ou = center_offset(s.canvas.w, native.w);
  const int ov = center_offset(s.canvas.h, native.h);
  Restacked<G> r{G(target), 0};
  for (int k = 0; k < n; ++k) {
    const auto& plane = s.slices[static_cast<std::size_t>(k)];
    for (int sv = 0; sv < native.h; ++sv) {
      const int v = sv + ov;
      for (int su = 0; su < native.w; ++su) {
        const int u = su + ou;
        if (u < 0 || u >= s.canvas.w || v < 0 || v >= s.canvas.h) {
          ++r.uncovered_voxels;
          continue;
        }
        const auto p = to_xyz(axis, k, su, sv);
        r.volume.at(p[0], p[1], p[2]) = plane.at(u, v);
      }
    }
  }
  return r;
}

}  // namespace

SliceStack<float> extract_slices(const Volume& v, Axis axis, Canvas canvas) {
  return extract_impl<float>(v, axis, canvas);
}

SliceStack<std::uint8_t> extract_slices(const LabelVolume& lv, Axis axis, Canvas canvas) {
  return extract_impl<std::uint8_t>(lv, axis, canvas);
}

Restacked<Volume> restack(const SliceStack<float>& s, Axis axis, Dims target) {
  return restack_impl<float, Volume>(s, axis, target);
}

Restacked<LabelVolume> restack(const SliceStack<std::uint8_t>& s, Axis axis, Dims target) {
  auto r = restack_impl<std::uint8_t, LabelVolume>(s, axis, target);
  r.volume.validate();
  return r;
}

}  // namespace fetalsyn
