#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "cclab/rng.hpp"
#include "cclab/rsa.hpp"

using namespace cclab;
using namespace cclab::rsa;

namespace {

Matrix random_matrix(size_t r, size_t c, uint64_t seed, double lo = -1.0, double hi = 1.0) {
    Matrix m(r, c);
    Rng rng(seed);
    for (auto& v : m.data) v = rng.uniform(lo, hi);
    return m;
}

Matrix pairwise_distances(const Matrix& pts) {
    Matrix d(pts.rows, pts.rows);
    for (size_t i = 0; i < pts.rows; ++i)
        for (size_t j = 0; j < pts.rows; ++j) {
            double s = 0.0;
            for (size_t c = 0; c < pts.cols; ++c) {
                const double diff = pts.at(i, c) - pts.at(j, c);
                s += diff * diff;
            }
            d.at(i, j) = std::sqrt(s);
        }
    return d;
}

}  // namespace

TEST_CASE("class patterns average activations per class") {
    // 2 classes x 2 records, dim 3, hand-computed means
    std::vector<float> acts = {1, 2, 3,   5, 6, 7,   3, 4, 5,   1, 0, 1};
    std::vector<int> labels = {0, 1, 0, 1};
    const auto p = class_patterns(acts, 3, labels, {0, 1});
    CHECK(p.patterns.at(0, 0) == doctest::Approx(2.0));
    CHECK(p.patterns.at(0, 1) == doctest::Approx(3.0));
    CHECK(p.patterns.at(1, 0) == doctest::Approx(3.0));
    CHECK(p.patterns.at(1, 2) == doctest::Approx(4.0));
    CHECK(p.images_per_class[0] == 2);

    // duplicated records leave the means unchanged
    std::vector<float> doubled = acts;
    doubled.insert(doubled.end(), acts.begin(), acts.end());
    std::vector<int> labels2 = {0, 1, 0, 1, 0, 1, 0, 1};
    const auto p2 = class_patterns(doubled, 3, labels2, {0, 1});
    for (size_t i = 0; i < p.patterns.data.size(); ++i)
        CHECK(p2.patterns.data[i] == doctest::Approx(p.patterns.data[i]));

    CHECK_THROWS(class_patterns(acts, 3, labels, {0, 1, 2}));  // class 2 missing
}

TEST_CASE("rdm: identical rows give zero, anti-correlated rows give two") {
    ClassPatternMatrix p;
    p.patterns = Matrix(3, 4);
    p.class_ids = {0, 1, 2};
    const double row[4] = {1.0, 2.0, 0.5, -1.0};
    for (size_t c = 0; c < 4; ++c) {
        p.patterns.at(0, c) = row[c];
        p.patterns.at(1, c) = row[c];
        p.patterns.at(2, c) = -row[c];
    }
    const RDM d = rdm(p, RdmMetric::correlation);
    CHECK(d.d.at(0, 1) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(d.d.at(0, 2) == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(d.d.at(0, 0) == 0.0);
}

TEST_CASE("rdm matches a direct Pearson oracle on random patterns") {
    ClassPatternMatrix p;
    p.patterns = random_matrix(5, 10, 44);
    p.class_ids = {0, 1, 2, 3, 4};
    const RDM d = rdm(p, RdmMetric::correlation);
    for (size_t i = 0; i < 5; ++i)
        for (size_t j = 0; j < 5; ++j) {
            // oracle: covariance formula
            double sx = 0, sy = 0, sxy = 0, sxx = 0, syy = 0;
            for (size_t c = 0; c < 10; ++c) {
                sx += p.patterns.at(i, c);
                sy += p.patterns.at(j, c);
            }
            const double mx = sx / 10, my = sy / 10;
            for (size_t c = 0; c < 10; ++c) {
                sxy += (p.patterns.at(i, c) - mx) * (p.patterns.at(j, c) - my);
                sxx += (p.patterns.at(i, c) - mx) * (p.patterns.at(i, c) - mx);
                syy += (p.patterns.at(j, c) - my) * (p.patterns.at(j, c) - my);
            }
            const double r = sxy / std::sqrt(sxx * syy);
            CHECK(d.d.at(i, j) == doctest::Approx(1.0 - r).epsilon(1e-12));
        }

    const RDM e = rdm(p, RdmMetric::euclidean);
    for (size_t i = 0; i < 5; ++i) {
        CHECK(e.d.at(i, i) == 0.0);
        for (size_t j = 0; j < 5; ++j) {
            double s = 0;
            for (size_t c = 0; c < 10; ++c) {
                const double diff = p.patterns.at(i, c) - p.patterns.at(j, c);
                s += diff * diff;
            }
            CHECK(e.d.at(i, j) == doctest::Approx(std::sqrt(s)).epsilon(1e-12));
        }
    }
}

TEST_CASE("rdm excludes constant rows under the correlation metric") {
    ClassPatternMatrix p;
    p.patterns = random_matrix(4, 6, 3);
    p.class_ids = {10, 11, 12, 13};
    for (size_t c = 0; c < 6; ++c) p.patterns.at(2, c) = 0.7;  // constant row
    const RDM d = rdm(p, RdmMetric::correlation);
    CHECK(d.class_ids == std::vector<int>{10, 11, 13});
    CHECK(d.excluded_ids == std::vector<int>{12});
    CHECK(d.d.rows == 3);
}

TEST_CASE("rdm is symmetric with unit-range correlation entries") {
    ClassPatternMatrix p;
    p.patterns = random_matrix(8, 12, 91);
    for (int i = 0; i < 8; ++i) p.class_ids.push_back(i);
    const RDM d = rdm(p, RdmMetric::correlation);
    for (size_t i = 0; i < d.d.rows; ++i)
        for (size_t j = 0; j < d.d.rows; ++j) {
            CHECK(d.d.at(i, j) == doctest::Approx(d.d.at(j, i)).epsilon(1e-12));
            CHECK(d.d.at(i, j) >= 0.0);
            CHECK(d.d.at(i, j) <= 2.0 + 1e-12);
        }
}

TEST_CASE("rdm correlation entries are invariant to per-row affine changes") {
    ClassPatternMatrix p;
    p.patterns = random_matrix(4, 9, 17);
    p.class_ids = {0, 1, 2, 3};
    const RDM base = rdm(p, RdmMetric::correlation);
    ClassPatternMatrix q = p;
    for (size_t r = 0; r < 4; ++r)
        for (size_t c = 0; c < 9; ++c) q.patterns.at(r, c) = 3.7 * q.patterns.at(r, c) + 0.9;
    const RDM shifted = rdm(q, RdmMetric::correlation);
    for (size_t i = 0; i < 4; ++i)
        for (size_t j = 0; j < 4; ++j)
            CHECK(shifted.d.at(i, j) == doctest::Approx(base.d.at(i, j)).epsilon(1e-10));
}

TEST_CASE("classical mds reproduces exact euclidean configurations") {
    const Matrix pts = random_matrix(30, 2, 7, -4.0, 4.0);
    RDM d;
    d.metric = RdmMetric::euclidean;
    d.d = pairwise_distances(pts);
    for (int i = 0; i < 30; ++i) d.class_ids.push_back(i);
    const MdsResult res = classical_mds(d, 2);
    REQUIRE(res.coords.cols == 2);
    const Matrix rec = pairwise_distances(res.coords);
    for (size_t i = 0; i < 30; ++i)
        for (size_t j = 0; j < 30; ++j)
            CHECK(rec.at(i, j) == doctest::Approx(d.d.at(i, j)).epsilon(1e-8));
    // only two positive eigenvalues carry variance
    CHECK(res.explained_variance[0] + res.explained_variance[1] ==
          doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("classical mds of three equidistant points has a double eigenvalue") {
    RDM d;
    d.metric = RdmMetric::euclidean;
    d.d = Matrix(3, 3);
    for (size_t i = 0; i < 3; ++i)
        for (size_t j = 0; j < 3; ++j) d.d.at(i, j) = i == j ? 0.0 : 2.0;
    d.class_ids = {0, 1, 2};
    const MdsResult res = classical_mds(d, 2);
    CHECK(res.eigenvalues[0] == doctest::Approx(res.eigenvalues[1]).epsilon(1e-10));
    CHECK(res.eigenvalues[0] > 0.0);
    // k beyond the positive-eigenvalue count truncates
    const MdsResult big = classical_mds(d, 5);
    CHECK(big.coords.cols == 2);
}

TEST_CASE("mds axis sign convention pins the first nonzero coordinate positive") {
    const Matrix pts = random_matrix(12, 3, 5);
    RDM d;
    d.metric = RdmMetric::euclidean;
    d.d = pairwise_distances(pts);
    for (int i = 0; i < 12; ++i) d.class_ids.push_back(i);
    const MdsResult res = classical_mds(d, 3);
    for (size_t c = 0; c < res.coords.cols; ++c) {
        for (size_t r = 0; r < res.coords.rows; ++r) {
            if (std::abs(res.coords.at(r, c)) > 1e-12) {
                CHECK(res.coords.at(r, c) > 0.0);
                break;
            }
        }
    }
}

TEST_CASE("procrustes recovers a known similarity transform") {
    const Matrix src = random_matrix(25, 3, 13, -2.0, 2.0);
    // reference = rotate (z-axis 0.7 rad) + scale 2.5 + translate
    const double ang = 0.7, s = 2.5;
    Matrix ref(25, 3);
    for (size_t i = 0; i < 25; ++i) {
        const double x = src.at(i, 0), y = src.at(i, 1), z = src.at(i, 2);
        ref.at(i, 0) = s * (std::cos(ang) * x - std::sin(ang) * y) + 4.0;
        ref.at(i, 1) = s * (std::sin(ang) * x + std::cos(ang) * y) - 1.5;
        ref.at(i, 2) = s * z + 0.25;
    }
    const ProcrustesFit fit = procrustes(src, ref);
    CHECK(fit.explained_variance >= 0.99999);
    CHECK(fit.scale == doctest::Approx(2.5).epsilon(1e-6));

    // orthogonality of the recovered matrix
    for (size_t i = 0; i < 3; ++i)
        for (size_t j = 0; j < 3; ++j) {
            double dot = 0.0;
            for (size_t k = 0; k < 3; ++k) dot += fit.rotation.at(i, k) * fit.rotation.at(j, k);
            CHECK(dot == doctest::Approx(i == j ? 1.0 : 0.0).epsilon(1e-10));
        }
}

TEST_CASE("procrustes explained variance is invariant to source similarity transforms") {
    const Matrix src = random_matrix(20, 3, 19);
    const Matrix ref = random_matrix(20, 3, 23);
    const double base = procrustes(src, ref).explained_variance;
    Matrix moved(20, 3);
    const double ang = -0.4, s = 0.6;
    for (size_t i = 0; i < 20; ++i) {
        const double x = src.at(i, 0), y = src.at(i, 1), z = src.at(i, 2);
        moved.at(i, 0) = s * (std::cos(ang) * x - std::sin(ang) * y) - 2.0;
        moved.at(i, 1) = s * (std::sin(ang) * x + std::cos(ang) * y) + 0.5;
        moved.at(i, 2) = s * z + 3.0;
    }
    CHECK(procrustes(moved, ref).explained_variance == doctest::Approx(base).epsilon(1e-10));
}

TEST_CASE("procrustes pads narrower sources and rejects degenerate input") {
    const Matrix src2 = random_matrix(15, 2, 31);
    const Matrix ref3 = random_matrix(15, 3, 37);
    CHECK_NOTHROW(procrustes(src2, ref3));
    Matrix degenerate(10, 3);  // all points identical (all zero)
    const Matrix ref = random_matrix(10, 3, 41);
    CHECK_THROWS(procrustes(degenerate, ref));
}

TEST_CASE("noise fits fall below chance; structure exceeds it") {
    const Matrix ref = random_matrix(40, 3, 53);
    const Matrix noise = random_matrix(40, 3, 59);
    const double noise_ev = procrustes(noise, ref).explained_variance;
    const double chance = permutation_baseline(noise, ref, 200, 7);
    CHECK(noise_ev < chance + 0.1);  // noise is not significantly aligned

    const double self_ev = procrustes(ref, ref).explained_variance;
    const double chance_self = permutation_baseline(ref, ref, 200, 7);
    CHECK(self_ev > chance_self);
    CHECK(self_ev == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("permutation baseline is deterministic under a fixed seed") {
    const Matrix src = random_matrix(18, 3, 61);
    const Matrix ref = random_matrix(18, 3, 67);
    const double a = permutation_baseline(src, ref, 150, 99);
    const double b = permutation_baseline(src, ref, 150, 99);
    CHECK(a == b);
    CHECK_THROWS(permutation_baseline(src, ref, 50, 99));
}

TEST_CASE("reference coordinates: cielab equals the table, munsell is cylindrical") {
    Atlas atlas = synthetic_atlas(40);
    build_chromaticity_table(atlas, d65_spd(), cie1931_cmfs());
    std::vector<int> ids;
    for (const auto& c : atlas.chips()) ids.push_back(c.id);

    const Matrix lab = reference_coordinates(atlas, ids, ReferenceSpace::cielab);
    for (size_t i = 0; i < ids.size(); ++i) {
        const auto& chip = atlas.chip(ids[i]);
        CHECK(lab.at(i, 0) == chip.lab_d65.L);
        CHECK(lab.at(i, 1) == chip.lab_d65.a);
        CHECK(lab.at(i, 2) == chip.lab_d65.b);
    }

    const Matrix mun = reference_coordinates(atlas, ids, ReferenceSpace::munsell);
    int h0 = -1, h20 = -1, grey = -1;
    for (size_t i = 0; i < ids.size(); ++i) {
        const auto& chip = atlas.chip(ids[i]);
        if (chip.achromatic() && chip.value == 5) grey = static_cast<int>(i);
        if (!chip.achromatic() && chip.hue_index == 0) h0 = static_cast<int>(i);
        if (!chip.achromatic() && chip.hue_index == 20) h20 = static_cast<int>(i);
    }
    // achromatic chips sit on the cylinder axis at value * 2
    CHECK(mun.at(static_cast<size_t>(grey), 0) == 0.0);
    CHECK(mun.at(static_cast<size_t>(grey), 1) == 0.0);
    CHECK(mun.at(static_cast<size_t>(grey), 2) == doctest::Approx(10.0));
    // opposite hues are antipodal in the chroma plane
    CHECK(mun.at(static_cast<size_t>(h0), 0) ==
          doctest::Approx(-mun.at(static_cast<size_t>(h20), 0)).epsilon(1e-9));
    CHECK(mun.at(static_cast<size_t>(h0), 1) ==
          doctest::Approx(-mun.at(static_cast<size_t>(h20), 1)).epsilon(1e-9));
}
