#pragma once

#include <string>
#include <vector>

#include "cclab/atlas.hpp"

namespace cclab::rsa {

/// Dense row-major matrix; light wrapper so module interfaces stay
/// Eigen-free.
struct Matrix {
    size_t rows = 0, cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(size_t r, size_t c) : rows(r), cols(c), data(r * c, 0.0) {}
    double& at(size_t r, size_t c) { return data[r * cols + c]; }
    double at(size_t r, size_t c) const { return data[r * cols + c]; }
};

/// Rows = classes, columns = units; entry = mean activation of the class.
struct ClassPatternMatrix {
    Matrix patterns;
    std::vector<int> class_ids;          // row -> chip id
    std::vector<size_t> images_per_class;
    std::string tap;
    std::string condition;
};

/// Average flat activation vectors (row-major n x dim) by class label.
/// Every class in `class_ids` must have at least one record.
ClassPatternMatrix class_patterns(const std::vector<float>& activations, size_t dim,
                                  const std::vector<int>& labels,
                                  const std::vector<int>& class_ids);

enum class RdmMetric { correlation, euclidean };

struct RDM {
    Matrix d;                       // symmetric, zero diagonal
    RdmMetric metric = RdmMetric::correlation;
    std::vector<int> class_ids;     // rows kept (constant rows are dropped)
    std::vector<int> excluded_ids;  // constant rows under the correlation metric
};

RDM rdm(const ClassPatternMatrix& patterns, RdmMetric metric);

struct MdsResult {
    Matrix coords;                           // n x k
    std::vector<double> eigenvalues;         // descending
    std::vector<double> explained_variance;  // lambda_i / sum(positive lambda)
};

/// Torgerson scaling: double-center -D^2/2, eigendecompose, scale
/// eigenvectors by sqrt(lambda). Axis sign fixed so the first nonzero
/// coordinate of each axis is positive. k is truncated to the positive
/// eigenvalue count.
MdsResult classical_mds(const RDM& rdm, int k);

struct ProcrustesFit {
    Matrix rotation;      // k x k orthogonal (may include reflection)
    double scale = 1.0;
    std::vector<double> translation;
    double explained_variance = 0.0;  // 1 - SSE / total reference variance
};

struct ProcrustesOptions {
    bool allow_scale = true;
    bool allow_reflection = true;
};

/// Least-squares similarity transform source -> reference via the centered
/// cross-covariance SVD. Narrower matrices are zero-padded to the wider k.
ProcrustesFit procrustes(const Matrix& source, const Matrix& reference,
                         const ProcrustesOptions& opts = {});

/// 95th percentile of explained variance over label-shuffled fits.
double permutation_baseline(const Matrix& source, const Matrix& reference, int n_perm,
                            uint64_t seed, const ProcrustesOptions& opts = {});

enum class ReferenceSpace { cielab, munsell };

/// n x 3 reference coordinates for the listed chips: CIELAB (L*, a*, b*), or
/// cylindrical Munsell (chroma_step·cosθ, chroma_step·sinθ, value·s_v) with
/// θ from the hue circle; achromatic chips sit on the cylinder axis.
Matrix reference_coordinates(const Atlas& atlas, const std::vector<int>& chip_ids,
                             ReferenceSpace space, double value_scale = 2.0);

void write_matrix_csv(const std::filesystem::path& path, const Matrix& m,
                      const std::vector<int>& row_ids = {});

}  // namespace cclab::rsa
