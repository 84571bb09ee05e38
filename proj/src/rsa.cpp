#include "cclab/rsa.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <stdexcept>

#include <Eigen/Dense>

#include "cclab/rng.hpp"

namespace cclab::rsa {

namespace {

Eigen::MatrixXd to_eigen(const Matrix& m) {
    Eigen::MatrixXd out(m.rows, m.cols);
    for (size_t r = 0; r < m.rows; ++r)
        for (size_t c = 0; c < m.cols; ++c) out(static_cast<long>(r), static_cast<long>(c)) = m.at(r, c);
    return out;
}

Matrix from_eigen(const Eigen::MatrixXd& m) {
    Matrix out(static_cast<size_t>(m.rows()), static_cast<size_t>(m.cols()));
    for (long r = 0; r < m.rows(); ++r)
        for (long c = 0; c < m.cols(); ++c) out.at(static_cast<size_t>(r), static_cast<size_t>(c)) = m(r, c);
    return out;
}

}  // namespace

ClassPatternMatrix class_patterns(const std::vector<float>& activations, size_t dim,
                                  const std::vector<int>& labels,
                                  const std::vector<int>& class_ids) {
    if (dim == 0 || labels.empty() || activations.size() != labels.size() * dim)
        throw std::invalid_argument("class_patterns: shape mismatch");
    std::map<int, size_t> row_of;
    for (size_t i = 0; i < class_ids.size(); ++i) row_of[class_ids[i]] = i;

    ClassPatternMatrix out;
    out.patterns = Matrix(class_ids.size(), dim);
    out.class_ids = class_ids;
    out.images_per_class.assign(class_ids.size(), 0);

    for (size_t i = 0; i < labels.size(); ++i) {
        const auto it = row_of.find(labels[i]);
        if (it == row_of.end()) continue;  // record outside the requested classes
        const size_t r = it->second;
        ++out.images_per_class[r];
        const float* src = activations.data() + i * dim;
        for (size_t c = 0; c < dim; ++c) out.patterns.at(r, c) += src[c];
    }
    for (size_t r = 0; r < class_ids.size(); ++r) {
        if (out.images_per_class[r] == 0)
            throw std::runtime_error("class_patterns: class " + std::to_string(class_ids[r]) +
                                     " has no records");
        for (size_t c = 0; c < dim; ++c)
            out.patterns.at(r, c) /= static_cast<double>(out.images_per_class[r]);
    }
    return out;
}

RDM rdm(const ClassPatternMatrix& patterns, RdmMetric metric) {
    const Matrix& p = patterns.patterns;
    if (p.rows < 2) throw std::invalid_argument("rdm: need at least 2 classes");

    RDM out;
    out.metric = metric;

    // Row means/norms; constant rows are undefined under correlation.
    std::vector<size_t> keep;
    std::vector<double> mean(p.rows, 0.0), norm(p.rows, 0.0);
    for (size_t r = 0; r < p.rows; ++r) {
        double m = 0.0;
        for (size_t c = 0; c < p.cols; ++c) m += p.at(r, c);
        m /= static_cast<double>(p.cols);
        mean[r] = m;
        double s = 0.0;
        for (size_t c = 0; c < p.cols; ++c) {
            const double d = p.at(r, c) - m;
            s += d * d;
        }
        norm[r] = std::sqrt(s);
        if (metric == RdmMetric::correlation && norm[r] < 1e-12)
            out.excluded_ids.push_back(patterns.class_ids[r]);
        else
            keep.push_back(r);
    }
    if (keep.size() < 2) throw std::runtime_error("rdm: fewer than 2 usable rows");

    out.d = Matrix(keep.size(), keep.size());
    for (size_t i = 0; i < keep.size(); ++i) out.class_ids.push_back(patterns.class_ids[keep[i]]);

    for (size_t i = 0; i < keep.size(); ++i) {
        for (size_t j = i + 1; j < keep.size(); ++j) {
            const size_t a = keep[i], b = keep[j];
            double dist;
            if (metric == RdmMetric::correlation) {
                double dot = 0.0;
                for (size_t c = 0; c < p.cols; ++c)
                    dot += (p.at(a, c) - mean[a]) * (p.at(b, c) - mean[b]);
                dist = 1.0 - dot / (norm[a] * norm[b]);
            } else {
                double s = 0.0;
                for (size_t c = 0; c < p.cols; ++c) {
                    const double d = p.at(a, c) - p.at(b, c);
                    s += d * d;
                }
                dist = std::sqrt(s);
            }
            out.d.at(i, j) = dist;
            out.d.at(j, i) = dist;
        }
    }
    return out;
}

MdsResult classical_mds(const RDM& rdm_in, int k) {
    if (k < 1) throw std::invalid_argument("classical_mds: k must be >= 1");
    const size_t n = rdm_in.d.rows;
    Eigen::MatrixXd d2(n, n);
    for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < n; ++j) {
            const double v = rdm_in.d.at(i, j);
            d2(static_cast<long>(i), static_cast<long>(j)) = v * v;
        }
    const Eigen::MatrixXd j_center =
        Eigen::MatrixXd::Identity(static_cast<long>(n), static_cast<long>(n)).array() -
        1.0 / static_cast<double>(n);
    const Eigen::MatrixXd b = -0.5 * j_center * d2 * j_center;

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(0.5 * (b + b.transpose()));
    if (solver.info() != Eigen::Success)
        throw std::runtime_error("classical_mds: eigendecomposition failed");

    // Ascending from Eigen; flip to descending.
    std::vector<std::pair<double, long>> order;
    for (long i = 0; i < solver.eigenvalues().size(); ++i)
        order.emplace_back(solver.eigenvalues()(i), i);
    std::sort(order.begin(), order.end(), [](auto& a, auto& b2) { return a.first > b2.first; });

    MdsResult res;
    double positive_sum = 0.0;
    int positive_count = 0;
    for (const auto& [lambda, idx] : order) {
        res.eigenvalues.push_back(lambda);
        if (lambda > 1e-12) {
            positive_sum += lambda;
            ++positive_count;
        }
    }
    for (double lambda : res.eigenvalues)
        res.explained_variance.push_back(lambda > 1e-12 && positive_sum > 0.0
                                             ? lambda / positive_sum
                                             : 0.0);

    const int kk = std::min(k, positive_count);  // truncated when k exceeds rank
    res.coords = Matrix(n, static_cast<size_t>(kk));
    for (int c = 0; c < kk; ++c) {
        const auto [lambda, idx] = order[static_cast<size_t>(c)];
        const double s = std::sqrt(lambda);
        // sign convention: first nonzero coordinate positive
        double sign = 1.0;
        for (size_t r = 0; r < n; ++r) {
            const double v = solver.eigenvectors()(static_cast<long>(r), idx);
            if (std::abs(v) > 1e-12) {
                sign = v > 0.0 ? 1.0 : -1.0;
                break;
            }
        }
        for (size_t r = 0; r < n; ++r)
            res.coords.at(r, static_cast<size_t>(c)) =
                sign * s * solver.eigenvectors()(static_cast<long>(r), idx);
    }
    return res;
}

namespace {

Eigen::MatrixXd pad_cols(const Eigen::MatrixXd& m, long k) {
    if (m.cols() == k) return m;
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(m.rows(), k);
    out.leftCols(m.cols()) = m;
    return out;
}

}  // namespace

ProcrustesFit procrustes(const Matrix& source, const Matrix& reference,
                         const ProcrustesOptions& opts) {
    if (source.rows != reference.rows || source.rows < 2)
        throw std::invalid_argument("procrustes: row mismatch");
    const long k = static_cast<long>(std::max(source.cols, reference.cols));
    Eigen::MatrixXd x = pad_cols(to_eigen(source), k);
    Eigen::MatrixXd y = pad_cols(to_eigen(reference), k);

    const Eigen::RowVectorXd mx = x.colwise().mean();
    const Eigen::RowVectorXd my = y.colwise().mean();
    x.rowwise() -= mx;
    y.rowwise() -= my;

    const double x_norm2 = x.squaredNorm();
    const double y_norm2 = y.squaredNorm();
    if (x_norm2 < 1e-24) throw std::invalid_argument("procrustes: degenerate source (all equal)");
    if (y_norm2 < 1e-24) throw std::invalid_argument("procrustes: degenerate reference");

    Eigen::JacobiSVD<Eigen::MatrixXd> svd(x.transpose() * y,
                                          Eigen::ComputeFullU | Eigen::ComputeFullV);
    Eigen::MatrixXd u = svd.matrixU();
    Eigen::MatrixXd v = svd.matrixV();
    Eigen::VectorXd s = svd.singularValues();
    Eigen::MatrixXd r = u * v.transpose();
    double trace = s.sum();
    if (!opts.allow_reflection && r.determinant() < 0.0) {
        Eigen::VectorXd flip = Eigen::VectorXd::Ones(k);
        flip(k - 1) = -1.0;
        r = u * flip.asDiagonal() * v.transpose();
        trace = (s.array() * flip.array()).sum();
    }
    const double scale = opts.allow_scale ? trace / x_norm2 : 1.0;

    const Eigen::MatrixXd fitted = scale * x * r;
    const double sse = (y - fitted).squaredNorm();

    ProcrustesFit fit;
    fit.rotation = from_eigen(r);
    fit.scale = scale;
    fit.translation.resize(static_cast<size_t>(k));
    const Eigen::RowVectorXd t = my - scale * mx * r;
    for (long i = 0; i < k; ++i) fit.translation[static_cast<size_t>(i)] = t(i);
    fit.explained_variance = 1.0 - sse / y_norm2;
    return fit;
}

double permutation_baseline(const Matrix& source, const Matrix& reference, int n_perm,
                            uint64_t seed, const ProcrustesOptions& opts) {
    if (n_perm < 100) throw std::invalid_argument("permutation_baseline: need n_perm >= 100");
    Rng rng(seed);
    std::vector<size_t> perm(source.rows);
    std::vector<double> evs;
    evs.reserve(static_cast<size_t>(n_perm));
    Matrix shuffled(source.rows, source.cols);
    for (int it = 0; it < n_perm; ++it) {
        for (size_t i = 0; i < perm.size(); ++i) perm[i] = i;
        rng.shuffle(perm);
        for (size_t rix = 0; rix < source.rows; ++rix)
            for (size_t c = 0; c < source.cols; ++c)
                shuffled.at(rix, c) = source.at(perm[rix], c);
        evs.push_back(procrustes(shuffled, reference, opts).explained_variance);
    }
    std::sort(evs.begin(), evs.end());
    const double pos = 0.95 * static_cast<double>(evs.size() - 1);
    const size_t lo = static_cast<size_t>(pos);
    const double t = pos - static_cast<double>(lo);
    return lo + 1 < evs.size() ? evs[lo] * (1.0 - t) + evs[lo + 1] * t : evs.back();
}

Matrix reference_coordinates(const Atlas& atlas, const std::vector<int>& chip_ids,
                             ReferenceSpace space, double value_scale) {
    Matrix out(chip_ids.size(), 3);
    for (size_t i = 0; i < chip_ids.size(); ++i) {
        const auto& chip = atlas.chip(chip_ids[i]);
        if (space == ReferenceSpace::cielab) {
            if (!atlas.table_built())
                throw std::logic_error("reference_coordinates: chromaticity table missing");
            out.at(i, 0) = chip.lab_d65.L;
            out.at(i, 1) = chip.lab_d65.a;
            out.at(i, 2) = chip.lab_d65.b;
        } else {
            if (chip.achromatic()) {
                out.at(i, 0) = 0.0;
                out.at(i, 1) = 0.0;
            } else {
                const double theta =
                    2.0 * M_PI * static_cast<double>(chip.hue_index) / atlas.hue_count();
                out.at(i, 0) = chip.chroma_step() * std::cos(theta);
                out.at(i, 1) = chip.chroma_step() * std::sin(theta);
            }
            out.at(i, 2) = chip.value * value_scale;
        }
    }
    return out;
}

void write_matrix_csv(const std::filesystem::path& path, const Matrix& m,
                      const std::vector<int>& row_ids) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write matrix csv: " + path.string());
    out.precision(12);
    for (size_t r = 0; r < m.rows; ++r) {
        if (!row_ids.empty()) out << row_ids[r] << ",";
        for (size_t c = 0; c < m.cols; ++c) out << m.at(r, c) << (c + 1 < m.cols ? "," : "");
        out << "\n";
    }
}

}  // namespace cclab::rsa
