#pragma once

#include <cstddef>

// Bundled colorimetric tables. Values are the standard published ones;
// everything is resampled onto the canonical grid at load time.
namespace cclab::tables {

struct CmfRow {
    double nm, x, y, z;
};
extern const CmfRow kCie1931Cmf2deg[];
extern const size_t kCie1931Cmf2degCount;

struct DaylightRow {
    double nm, s0, s1, s2;
};
extern const DaylightRow kDaylightComponents[];
extern const size_t kDaylightComponentsCount;

struct SpdRow {
    double nm, v;
};
extern const SpdRow kD65[];
extern const size_t kD65Count;

}  // namespace cclab::tables
