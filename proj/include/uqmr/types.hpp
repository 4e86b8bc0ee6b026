#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace uqmr {

enum class PhantomKind { KneeStatic, CardiacTwoPhase };

inline std::string to_string(PhantomKind k) {
    return k == PhantomKind::KneeStatic ? "KneeStatic" : "CardiacTwoPhase";
}

inline PhantomKind phantom_kind_from_string(const std::string& s) {
    if (s == "KneeStatic") return PhantomKind::KneeStatic;
    if (s == "CardiacTwoPhase") return PhantomKind::CardiacTwoPhase;
    throw std::invalid_argument("unknown phantom kind: " + s);
}

/// Voxel spacing in millimetres. Volumes are area * dz for the single slice.
struct VoxelSpacing {
    double dx = 1.0;
    double dy = 1.0;
    double dz = 1.0;

    double voxel_mm3() const { return dx * dy * dz; }
    bool operator==(const VoxelSpacing&) const = default;
};

// Label classes shared by the phantom generator and the segmenter.
inline constexpr int32_t kClassBackground = 0;
inline constexpr int32_t kClassStructure = 1;   // structure of interest (cartilage / LV blood pool)
inline constexpr int32_t kClassDistractor = 2;  // distractor tissue (bone / myocardium)

}  // namespace uqmr
