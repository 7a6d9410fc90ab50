#include "fetalsyn/volume.hpp"

namespace fetalsyn {

std::string to_string(const Dims& d) {
  return std::to_string(d.nx) + "x" + std::to_string(d.ny) + "x" + std::to_string(d.nz);
}

const char* tissue_name(int label) {
  static constexpr const char* kNames[kNumClasses] = {
      "background", "external_fluid", "gray_matter", "white_matter",
      "deep_gray_matter", "ventricles", "cerebellum", "brainstem"};
  if (label < 0 || label >= kNumClasses) return "invalid";
  return kNames[label];
}

LabelVolume::LabelVolume(Dims dims, std::uint8_t fill) : Grid3<std::uint8_t>(dims, fill) {
  validate();
}

LabelVolume::LabelVolume(Dims dims, std::vector<std::uint8_t> labels)
    : Grid3<std::uint8_t>(dims, std::move(labels)) {
  validate();
}

void LabelVolume::validate() const {
  for (std::size_t i = 0; i < size(); ++i) {
    if ((*this)[i] > kMaxLabel) {
      throw DataError("label " + std::to_string((*this)[i]) + " at voxel " + std::to_string(i) +
                      " outside [0, 7]");
    }
  }
}

std::array<std::size_t, kNumClasses> LabelVolume::class_counts() const {
  std::array<std::size_t, kNumClasses> counts{};
  for (auto l : data()) ++counts[l];
  return counts;
}

Mask brain_mask(const LabelVolume& labels) {
  Mask m(labels.dims(), 0);
  for (std::size_t i = 0; i < labels.size(); ++i) m[i] = labels[i] != 0 ? 1 : 0;
  return m;
}

void require_same_dims(const Dims& a, const Dims& b, const char* what) {
  if (!(a == b)) {
    throw DataError(std::string(what) + ": dims mismatch " + to_string(a) + " vs " + to_string(b));
  }
}

}  // namespace fetalsyn
