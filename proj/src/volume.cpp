#include "dtsforge/volume.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <string>

#include "json.hpp"

#include "dtsforge/detail/trilinear.hpp"
#include "dtsforge/error.hpp"
#include "dtsforge/parallel.hpp"

namespace dtsforge {

using nlohmann::json;

std::size_t GridGeometry::voxel_count() const {
  return static_cast<std::size_t>(dims[0]) * static_cast<std::size_t>(dims[1]) * static_cast<std::size_t>(dims[2]);
}

void GridGeometry::validate() const {
  for (int axis = 0; axis < 3; ++axis) {
    if (dims[axis] <= 0) throw InvalidArgument("volume dims must be positive");
    if (!(spacing[axis] > 0.0) || !std::isfinite(spacing[axis]))
      throw InvalidArgument("volume spacing must be positive and finite");
    if (!std::isfinite(origin[axis])) throw InvalidArgument("volume origin must be finite");
  }
}

GridGeometry GridGeometry::centered(Dims3 dims, Vec3 spacing) {
  GridGeometry g{dims, spacing, {}};
  for (int axis = 0; axis < 3; ++axis) g.origin[axis] = -0.5 * (dims[axis] - 1) * spacing[axis];
  g.validate();
  return g;
}

CtVolume::CtVolume(GridGeometry geometry, std::vector<float> voxels, double background_fill)
    : geometry_(geometry), voxels_(std::move(voxels)), background_fill_(background_fill) {
  geometry_.validate();
  if (voxels_.size() != geometry_.voxel_count())
    throw InvalidArgument("voxel count " + std::to_string(voxels_.size()) + " does not match dims product " +
                          std::to_string(geometry_.voxel_count()));
  if (!std::isfinite(background_fill_)) throw InvalidArgument("background fill must be finite");
  if (!std::all_of(voxels_.begin(), voxels_.end(), [](float v) { return std::isfinite(v); }))
    throw InvalidArgument("volume contains non-finite voxel values");
}

BinaryVolume::BinaryVolume(GridGeometry geometry, std::vector<std::uint8_t> voxels)
    : geometry_(geometry), voxels_(std::move(voxels)) {
  geometry_.validate();
  if (voxels_.size() != geometry_.voxel_count()) throw InvalidArgument("mask voxel count does not match dims product");
  if (!std::all_of(voxels_.begin(), voxels_.end(), [](std::uint8_t v) { return v <= 1; }))
    throw InvalidArgument("binary volume values must be 0 or 1");
}

std::size_t BinaryVolume::count() const {
  return static_cast<std::size_t>(std::count(voxels_.begin(), voxels_.end(), std::uint8_t{1}));
}

// ---------------------------------------------------------------------------
// File format

namespace {

struct Header {
  GridGeometry geometry;
  double background_fill = kAirHu;
  std::filesystem::path payload;
};

template <typename T>
T require(const json& j, const char* key, const std::filesystem::path& path) {
  if (!j.contains(key)) throw FormatError(path.string() + ": header field '" + key + "' is missing");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": header field '" + key + "' is malformed: " + e.what());
  }
}

Header read_header(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open volume header " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": header is not valid JSON: " + e.what());
  }
  if (!j.is_object()) throw FormatError(path.string() + ": header must be a JSON object");

  if (require<std::string>(j, "dtype", path) != "f32") throw FormatError(path.string() + ": dtype must be f32");
  if (require<std::string>(j, "byte_order", path) != "little")
    throw FormatError(path.string() + ": byte_order must be little");

  Header h;
  h.geometry.dims = require<Dims3>(j, "dims", path);
  h.geometry.spacing = require<Vec3>(j, "spacing_mm", path);
  h.geometry.origin = require<Vec3>(j, "origin_mm", path);
  h.background_fill = require<double>(j, "background_fill_hu", path);
  h.payload = path.parent_path() / require<std::string>(j, "data_file", path);
  try {
    h.geometry.validate();
  } catch (const InvalidArgument& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  return h;
}

std::vector<float> read_payload(const Header& h) {
  std::ifstream in(h.payload, std::ios::binary | std::ios::ate);
  if (!in) throw FormatError("cannot open volume payload " + h.payload.string());
  const auto bytes = static_cast<std::size_t>(in.tellg());
  const std::size_t expected = h.geometry.voxel_count() * sizeof(float);
  if (bytes != expected)
    throw FormatError(h.payload.string() + ": payload has " + std::to_string(bytes) + " bytes, header dims require " +
                      std::to_string(expected));
  in.seekg(0);
  std::vector<float> voxels(h.geometry.voxel_count());
  in.read(reinterpret_cast<char*>(voxels.data()), static_cast<std::streamsize>(expected));
  if (!in) throw FormatError("failed reading " + h.payload.string());
  if constexpr (std::endian::native == std::endian::big) {
    for (float& v : voxels) {
      std::uint32_t bits;
      std::memcpy(&bits, &v, 4);
      bits = __builtin_bswap32(bits);
      std::memcpy(&v, &bits, 4);
    }
  }
  if (!std::all_of(voxels.begin(), voxels.end(), [](float v) { return std::isfinite(v); }))
    throw FormatError(h.payload.string() + ": payload contains non-finite values");
  return voxels;
}

void write_files(const GridGeometry& g, double background_fill, const std::vector<float>& voxels,
                 const std::filesystem::path& header_path) {
  const std::filesystem::path payload = payload_path_for(header_path);
  json j;
  j["dims"] = g.dims;
  j["spacing_mm"] = g.spacing;
  j["origin_mm"] = g.origin;
  j["dtype"] = "f32";
  j["byte_order"] = "little";
  j["background_fill_hu"] = background_fill;
  j["data_file"] = payload.filename().string();

  std::ofstream out(header_path);
  if (!out) throw FormatError("cannot write volume header " + header_path.string());
  out << j.dump(2) << '\n';
  if (!out) throw FormatError("failed writing " + header_path.string());

  std::ofstream raw(payload, std::ios::binary);
  if (!raw) throw FormatError("cannot write volume payload " + payload.string());
  if constexpr (std::endian::native == std::endian::little) {
    raw.write(reinterpret_cast<const char*>(voxels.data()), static_cast<std::streamsize>(voxels.size() * sizeof(float)));
  } else {
    for (float v : voxels) {
      std::uint32_t bits;
      std::memcpy(&bits, &v, 4);
      bits = __builtin_bswap32(bits);
      raw.write(reinterpret_cast<const char*>(&bits), 4);
    }
  }
  if (!raw) throw FormatError("failed writing " + payload.string());
}

}  // namespace

std::filesystem::path payload_path_for(const std::filesystem::path& header_path) {
  std::filesystem::path payload = header_path;
  payload.replace_extension(".raw");
  return payload;
}

CtVolume load_volume(const std::filesystem::path& header_path) {
  const Header h = read_header(header_path);
  return CtVolume(h.geometry, read_payload(h), h.background_fill);
}

void save_volume(const CtVolume& volume, const std::filesystem::path& header_path) {
  write_files(volume.geometry(), volume.background_fill(), volume.voxels(), header_path);
}

BinaryVolume load_binary_volume(const std::filesystem::path& header_path) {
  const Header h = read_header(header_path);
  const std::vector<float> values = read_payload(h);
  std::vector<std::uint8_t> voxels(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (values[i] != 0.0f && values[i] != 1.0f)
      throw FormatError(header_path.string() + ": mask voxel " + std::to_string(i) + " is neither 0 nor 1");
    voxels[i] = values[i] == 1.0f ? 1 : 0;
  }
  return BinaryVolume(h.geometry, std::move(voxels));
}

void save_binary_volume(const BinaryVolume& volume, const std::filesystem::path& header_path) {
  std::vector<float> values(volume.voxels().begin(), volume.voxels().end());
  write_files(volume.geometry(), 0.0, values, header_path);
}

// ---------------------------------------------------------------------------
// Resampling

namespace {

struct IsotropicTarget {
  GridGeometry grid;
  Vec3 ratio;   // output step in input index units
  Vec3 offset;  // input index of output voxel 0
};

IsotropicTarget plan_isotropic(const GridGeometry& in, double target_mm) {
  if (!(target_mm > 0.0) || !std::isfinite(target_mm)) throw InvalidArgument("resample target must be positive");
  IsotropicTarget t;
  t.grid.spacing = {target_mm, target_mm, target_mm};
  for (int a = 0; a < 3; ++a) {
    const double extent = in.dims[a] * in.spacing[a] / target_mm;
    t.grid.dims[a] = std::max(1, static_cast<int>(std::floor(extent + 0.5)));
    const double in_center = 0.5 * (in.dims[a] - 1);
    const double out_center = 0.5 * (t.grid.dims[a] - 1);
    t.ratio[a] = target_mm / in.spacing[a];
    t.offset[a] = in_center - out_center * t.ratio[a];
    t.grid.origin[a] = in.origin[a] + in_center * in.spacing[a] - out_center * target_mm;
  }
  return t;
}

bool already_isotropic(const GridGeometry& g, double target_mm) {
  return g.spacing[0] == target_mm && g.spacing[1] == target_mm && g.spacing[2] == target_mm;
}

template <typename T>
std::vector<float> resample_values(const std::vector<T>& src, const GridGeometry& in, const IsotropicTarget& t,
                                   float outside) {
  const Dims3& od = t.grid.dims;
  std::vector<float> out(t.grid.voxel_count());
  parallel_for(static_cast<std::size_t>(od[2]), [&](std::size_t kz) {
    const int k = static_cast<int>(kz);
    const double fz = t.offset[2] + k * t.ratio[2];
    for (int j = 0; j < od[1]; ++j) {
      const double fy = t.offset[1] + j * t.ratio[1];
      for (int i = 0; i < od[0]; ++i) {
        const double fx = t.offset[0] + i * t.ratio[0];
        out[t.grid.index(i, j, k)] = detail::inside_cells(in.dims, fx, fy, fz)
                                         ? static_cast<float>(detail::sample_trilinear(src.data(), in.dims, fx, fy, fz))
                                         : outside;
      }
    }
  });
  return out;
}

}  // namespace

CtVolume resample_isotropic(const CtVolume& volume, double target_mm) {
  const IsotropicTarget t = plan_isotropic(volume.geometry(), target_mm);
  if (already_isotropic(volume.geometry(), target_mm)) return volume;
  auto values = resample_values(volume.voxels(), volume.geometry(), t, static_cast<float>(volume.background_fill()));
  return CtVolume(t.grid, std::move(values), volume.background_fill());
}

BinaryVolume resample_isotropic(const BinaryVolume& volume, double target_mm) {
  const IsotropicTarget t = plan_isotropic(volume.geometry(), target_mm);
  if (already_isotropic(volume.geometry(), target_mm)) return volume;
  const auto values = resample_values(volume.voxels(), volume.geometry(), t, 0.0f);
  std::vector<std::uint8_t> bits(values.size());
  std::transform(values.begin(), values.end(), bits.begin(), [](float v) { return v >= 0.5f ? 1 : 0; });
  return BinaryVolume(t.grid, std::move(bits));
}

BinaryVolume binarize(const CtVolume& volume, double threshold_hu) {
  std::vector<std::uint8_t> bits(volume.voxels().size());
  std::transform(volume.voxels().begin(), volume.voxels().end(), bits.begin(),
                 [threshold_hu](float v) { return v >= threshold_hu ? 1 : 0; });
  return BinaryVolume(volume.geometry(), std::move(bits));
}

CtVolume apply_mask(const CtVolume& volume, const BinaryVolume& mask) {
  if (!(volume.geometry() == mask.geometry())) throw InvalidArgument("mask geometry does not match volume");
  std::vector<float> out = volume.voxels();
  const auto fill = static_cast<float>(volume.background_fill());
  for (std::size_t i = 0; i < out.size(); ++i)
    if (!mask.voxels()[i]) out[i] = fill;
  return CtVolume(volume.geometry(), std::move(out), volume.background_fill());
}

}  // namespace dtsforge
