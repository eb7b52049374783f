#ifndef TLDA_MOMENTS_HPP
#define TLDA_MOMENTS_HPP

// Streaming first moment, centering, incremental PCA of the centered counts,
// the whitening map built from it, and dense moment oracles for testing.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "tlda/corpus.hpp"
#include "tlda/error.hpp"
#include "tlda/io.hpp"
#include "tlda/tensor.hpp"

namespace tlda {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

struct MeanState {
    std::uint64_t n_seen = 0;
    VectorXd m1;

    MeanState() = default;
    explicit MeanState(Index vocab_size) : m1(VectorXd::Zero(vocab_size)) {}
};

/// m1 <- (n_old * m1 + sum of batch rows) / (n_old + n_b)
inline MeanState update_mean(const MeanState& state, const DocumentBatch& batch) {
    require_dims(batch.vocab_size() == state.m1.size(),
                 "batch vocabulary size " + std::to_string(batch.vocab_size()) +
                     " != mean state size " + std::to_string(state.m1.size()));
    MeanState out = state;
    const Index n_b = batch.size();
    if (n_b == 0) return out;
    VectorXd sum = VectorXd::Zero(state.m1.size());
    for (Index r = 0; r < n_b; ++r)
        for (SparseRows::InnerIterator it(batch.counts, r); it; ++it) sum(it.col()) += it.value();
    const double n_old = static_cast<double>(state.n_seen);
    const double n_new = n_old + static_cast<double>(n_b);
    out.m1 = (n_old * state.m1 + sum) / n_new;
    out.n_seen = state.n_seen + static_cast<std::uint64_t>(n_b);
    return out;
}

/// Dense rows x~_i = f_i - m1.
struct CenteredBatch {
    MatrixXd rows;
};

/// Dense rows x_i = x~_i W (n_b x D).
struct WhitenedBatch {
    MatrixXd rows;
};

inline CenteredBatch center(const DocumentBatch& batch, const VectorXd& m1) {
    require_dims(batch.vocab_size() == m1.size(), "center: vocabulary size mismatch");
    CenteredBatch out;
    out.rows = MatrixXd(batch.counts);
    out.rows.rowwise() -= m1.transpose();
    return out;
}

inline CenteredBatch center(const MatrixXd& raw_rows, const VectorXd& m1) {
    require_dims(raw_rows.cols() == m1.size(), "center: vocabulary size mismatch");
    CenteredBatch out{raw_rows};
    out.rows.rowwise() -= m1.transpose();
    return out;
}

// ---------------------------------------------------------------------------
// Incremental PCA

struct PcaState {
    Index d = 0;
    MatrixXd components;     // r x V, orthonormal rows, r <= d
    VectorXd singular_values; // length r, nonincreasing
    std::uint64_t n_seen = 0;

    PcaState() = default;
    PcaState(Index dim, Index vocab_size) : d(dim), components(0, vocab_size), singular_values(0) {}

    Index vocab_size() const { return components.cols(); }
    Index rank() const { return components.rows(); }
};

namespace detail {

struct TruncatedSvd {
    MatrixXd right;   // r x cols, orthonormal rows
    VectorXd values;  // r, nonincreasing
};

// Top-`d` right singular pairs of `a`. The candidate subspace comes from an
// eigendecomposition of the smaller Gram matrix; a Rayleigh-Ritz SVD of a
// restricted to that subspace then fixes the singular values and vectors.
inline TruncatedSvd top_right_singular(const MatrixXd& a, Index d) {
    const Index m = a.rows();
    const Index n = a.cols();
    const Index r = std::min({d, m, n});
    MatrixXd basis;
    if (m <= n) {
        MatrixXd gram = a * a.transpose();
        Eigen::SelfAdjointEigenSolver<MatrixXd> eig(gram);
        // ascending eigenvalues; take the last r columns in descending order
        MatrixXd left = eig.eigenvectors().rightCols(r).rowwise().reverse();
        basis = a.transpose() * left;
    } else {
        MatrixXd gram = a.transpose() * a;
        Eigen::SelfAdjointEigenSolver<MatrixXd> eig(gram);
        basis = eig.eigenvectors().rightCols(r).rowwise().reverse();
    }
    Eigen::HouseholderQR<MatrixXd> qr(basis);
    MatrixXd q = qr.householderQ() * MatrixXd::Identity(n, r);
    MatrixXd projected = a * q;
    Eigen::JacobiSVD<MatrixXd> svd(projected, Eigen::ComputeThinV);
    TruncatedSvd out;
    out.values = svd.singularValues();
    out.right = (q * svd.matrixV()).transpose();
    return out;
}

// Deterministic orientation: match the previous basis where one exists,
// otherwise make the largest-magnitude entry of each row positive.
inline void orient_rows(MatrixXd& rows, const MatrixXd& previous) {
    for (Index j = 0; j < rows.rows(); ++j) {
        double s;
        if (j < previous.rows()) {
            s = rows.row(j).dot(previous.row(j));
        } else {
            Index arg;
            rows.row(j).cwiseAbs().maxCoeff(&arg);
            s = rows(j, arg);
        }
        if (s < 0) rows.row(j) *= -1.0;
    }
}

} // namespace detail

/// Folds a centered batch into the running top-D SVD by re-decomposing
/// [diag(sigma) * components ; centered rows].
inline PcaState update_pca(const PcaState& state, const CenteredBatch& centered) {
    require_dims(centered.rows.cols() == state.vocab_size(), "update_pca: vocabulary size mismatch");
    require(state.d >= 1, ErrorCode::InvalidArgument, "PCA dimension must be >= 1");
    if (centered.rows.rows() == 0) return state;
    const Index r_old = state.rank();
    MatrixXd stacked(r_old + centered.rows.rows(), state.vocab_size());
    if (r_old > 0) stacked.topRows(r_old) = state.singular_values.asDiagonal() * state.components;
    stacked.bottomRows(centered.rows.rows()) = centered.rows;

    auto svd = detail::top_right_singular(stacked, state.d);
    PcaState out = state;
    out.components = std::move(svd.right);
    out.singular_values = std::move(svd.values);
    detail::orient_rows(out.components, state.components);
    out.n_seen = state.n_seen + static_cast<std::uint64_t>(centered.rows.rows());
    return out;
}

// ---------------------------------------------------------------------------
// Whitening

struct WhiteningMatrix {
    MatrixXd w;  // V x D
    double alpha0 = 0.0;
    std::uint64_t n = 0;
};

inline constexpr double kDefaultSingularFloor = 1e-10;

/// W = U diag(lambda^{-1/2}) with lambda_j = (alpha0+1) sigma_j^2 / n, the
/// eigenvalues of the centered second moment, so that W^T M2 W = I.
inline WhiteningMatrix whitening_matrix(const PcaState& pca, double alpha0, std::uint64_t n,
                                        double relative_floor = kDefaultSingularFloor) {
    require(alpha0 >= 0.0, ErrorCode::InvalidArgument, "alpha0 must be >= 0");
    require(n >= 1, ErrorCode::InvalidArgument, "document count must be >= 1");
    require(pca.rank() == pca.d, ErrorCode::RankDeficient,
            "only " + std::to_string(pca.rank()) + " of " + std::to_string(pca.d) +
                " components available");
    const double sigma1 = pca.d > 0 ? pca.singular_values(0) : 0.0;
    const double floor = relative_floor * sigma1;
    for (Index j = 0; j < pca.d; ++j) {
        if (!(pca.singular_values(j) > floor) || !(sigma1 > 0.0))
            throw Error(ErrorCode::RankDeficient,
                        "singular value " + std::to_string(j) + " = " +
                            std::to_string(pca.singular_values(j)) + " is at or below the floor");
    }
    VectorXd lambda = (alpha0 + 1.0) * pca.singular_values.array().square() / static_cast<double>(n);
    WhiteningMatrix out;
    out.w = pca.components.transpose() * lambda.array().rsqrt().matrix().asDiagonal();
    out.alpha0 = alpha0;
    out.n = n;
    return out;
}

/// Streaming PCA only approximates the top eigenvectors of M2, so W^T M2 W
/// drifts from I. Given sum_i x_i x_i^T over the rows whitened by `w`, the map
/// W C^{-1/2} (C the whitened second moment) restores the identity exactly
/// while keeping the PCA subspace.
inline WhiteningMatrix refine_whitening(const WhiteningMatrix& w, const MatrixXd& whitened_scatter,
                                        double relative_floor = kDefaultSingularFloor) {
    require_dims(whitened_scatter.rows() == w.w.cols() && whitened_scatter.cols() == w.w.cols(),
                 "refine_whitening: scatter must be D x D");
    require(w.n >= 1, ErrorCode::InvalidArgument, "refine_whitening: document count must be >= 1");
    const MatrixXd c = (w.alpha0 + 1.0) / static_cast<double>(w.n) * whitened_scatter;
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(c);
    const VectorXd& lambda = eig.eigenvalues();
    if (!(lambda.minCoeff() > relative_floor * std::max(lambda.maxCoeff(), 0.0)))
        throw Error(ErrorCode::RankDeficient, "whitened second moment is singular");
    WhiteningMatrix out = w;
    out.w = w.w * eig.eigenvectors() * lambda.array().rsqrt().matrix().asDiagonal();
    return out;
}

inline WhitenedBatch whiten(const CenteredBatch& centered, const WhiteningMatrix& w) {
    require_dims(centered.rows.cols() == w.w.rows(), "whiten: vocabulary size mismatch");
    return WhitenedBatch{centered.rows * w.w};
}

/// (F - 1 m1^T) W computed without densifying F.
inline WhitenedBatch whiten(const DocumentBatch& batch, const VectorXd& m1, const WhiteningMatrix& w) {
    require_dims(batch.vocab_size() == w.w.rows() && m1.size() == w.w.rows(),
                 "whiten: vocabulary size mismatch");
    WhitenedBatch out{batch.counts * w.w};
    out.rows.rowwise() -= (m1.transpose() * w.w);
    return out;
}

// ---------------------------------------------------------------------------
// Dense oracles

inline constexpr Index kMaxOracleM2Vocab = 2000;
inline constexpr Index kMaxOracleM3Vocab = 100;

/// (alpha0+1)/N * sum_i x~_i x~_i^T
inline MatrixXd explicit_m2(const MatrixXd& centered_rows, double alpha0) {
    require(centered_rows.cols() <= kMaxOracleM2Vocab, ErrorCode::OracleTooLarge,
            "explicit_m2 supports V <= 2000");
    const double n = static_cast<double>(centered_rows.rows());
    require(n > 0, ErrorCode::InvalidArgument, "explicit_m2 needs at least one row");
    MatrixXd m2 = MatrixXd::Zero(centered_rows.cols(), centered_rows.cols());
    m2.selfadjointView<Eigen::Lower>().rankUpdate(centered_rows.transpose(), (alpha0 + 1.0) / n);
    return m2.selfadjointView<Eigen::Lower>();
}

namespace detail {

// Fills the full tensor from its i <= j <= k entries so permutation symmetry
// holds bit for bit.
template <typename Entry>
Tensor3 symmetric_tensor(Index v, Entry entry) {
    Tensor3 t(v);
    for (Index i = 0; i < v; ++i)
        for (Index j = i; j < v; ++j)
            for (Index k = j; k < v; ++k) {
                double val = entry(i, j, k);
                t(i, j, k) = val; t(i, k, j) = val;
                t(j, i, k) = val; t(j, k, i) = val;
                t(k, i, j) = val; t(k, j, i) = val;
            }
    return t;
}

} // namespace detail

/// (alpha0+1)(alpha0+2)/(2N) * sum_i x~_i (x) x~_i (x) x~_i
inline Tensor3 explicit_m3(const MatrixXd& centered_rows, double alpha0) {
    const Index v = centered_rows.cols();
    require(v <= kMaxOracleM3Vocab, ErrorCode::OracleTooLarge, "explicit_m3 supports V <= 100");
    const double n = static_cast<double>(centered_rows.rows());
    require(n > 0, ErrorCode::InvalidArgument, "explicit_m3 needs at least one row");
    const double c = (alpha0 + 1.0) * (alpha0 + 2.0) / (2.0 * n);
    return detail::symmetric_tensor(v, [&](Index i, Index j, Index k) {
        double s = 0.0;
        for (Index r = 0; r < centered_rows.rows(); ++r)
            s += centered_rows(r, i) * centered_rows(r, j) * centered_rows(r, k);
        return c * s;
    });
}

/// Third-order cumulant of uncentered counts, term by term:
///   c3/N-scaled sum of [f(x)f(x)f - diag(f)(x)f - f(x)diag(f)
///                       - sum_mn f_m f_n e_m(x)e_n(x)e_m + 2 sum_m f_m e_m^(x)3]
///   - alpha0(alpha0+1)/(2N) sum_i sum_m f_im (e_m e_m M1 + e_m M1 e_m + M1 e_m e_m)
///   + alpha0^2 M1^(x)3
/// where diag(f)(x)f has entries delta_ij f_i f_k and f(x)diag(f) has
/// f_i delta_jk f_j.
inline Tensor3 uncentered_m3(const MatrixXd& raw_rows, const VectorXd& m1, double alpha0) {
    const Index v = raw_rows.cols();
    require(v <= kMaxOracleM3Vocab, ErrorCode::OracleTooLarge, "uncentered_m3 supports V <= 100");
    require_dims(m1.size() == v, "uncentered_m3: m1 size mismatch");
    const Index n_docs = raw_rows.rows();
    require(n_docs > 0, ErrorCode::InvalidArgument, "uncentered_m3 needs at least one row");
    const double n = static_cast<double>(n_docs);
    const double c3 = (alpha0 + 1.0) * (alpha0 + 2.0) / (2.0 * n);
    const double c2 = alpha0 * (alpha0 + 1.0) / (2.0 * n);
    const VectorXd total = raw_rows.colwise().sum().transpose();

    Tensor3 t(v);
    std::vector<Index> nz;
    for (Index r = 0; r < n_docs; ++r) {
        auto f = raw_rows.row(r);
        nz.clear();
        for (Index i = 0; i < v; ++i)
            if (f(i) != 0.0) nz.push_back(i);
        for (Index i : nz)
            for (Index j : nz) {
                double fij = c3 * f(i) * f(j);
                for (Index k : nz) t(i, j, k) += fij * f(k);
            }
        for (Index i : nz) {
            for (Index k : nz) {
                double s = c3 * f(i) * f(k);
                t(i, i, k) -= s;  // diag(f) (x) f
                t(k, i, i) -= s;  // f (x) diag(f)
                t(i, k, i) -= s;  // e_m (x) e_n (x) e_m
            }
            t(i, i, i) += c3 * 2.0 * f(i);
        }
    }
    for (Index m = 0; m < v; ++m) {
        if (total(m) == 0.0) continue;
        for (Index k = 0; k < v; ++k) {
            double s = c2 * total(m) * m1(k);
            t(m, m, k) -= s;
            t(m, k, m) -= s;
            t(k, m, m) -= s;
        }
    }
    t.add_cube(m1, alpha0 * alpha0);
    return t;
}

// ---------------------------------------------------------------------------
// Checkpoint
//
// Little-endian binary layout:
//   char[8]  "TLDAMOM1"
//   u32      version (1)
//   u64      n_seen (mean), u64 V, u64 D, u64 r (retained rank), u64 pca n_seen
//   f64[V]   m1
//   f64[r]   singular values
//   f64[r*V] components, row-major
//   u64      config hash

inline constexpr std::uint32_t kMomentCheckpointVersion = 1;

struct MomentState {
    MeanState mean;
    PcaState pca;
};

inline void save_moment_state(const std::string& path, const MomentState& state, std::uint64_t config_hash) {
    auto os = open_out(path, true);
    bin::write_magic(os, "TLDAMOM1");
    bin::write<std::uint32_t>(os, kMomentCheckpointVersion);
    bin::write<std::uint64_t>(os, state.mean.n_seen);
    bin::write<std::uint64_t>(os, static_cast<std::uint64_t>(state.mean.m1.size()));
    bin::write<std::uint64_t>(os, static_cast<std::uint64_t>(state.pca.d));
    bin::write<std::uint64_t>(os, static_cast<std::uint64_t>(state.pca.rank()));
    bin::write<std::uint64_t>(os, state.pca.n_seen);
    bin::write_vector(os, state.mean.m1);
    bin::write_vector(os, state.pca.singular_values);
    bin::write_matrix(os, state.pca.components);
    bin::write<std::uint64_t>(os, config_hash);
    if (!os) throw Error(ErrorCode::SourceUnreadable, "write failed: " + path);
}

inline MomentState load_moment_state(const std::string& path, std::uint64_t* config_hash = nullptr) {
    auto is = open_in(path, true);
    bin::expect_magic(is, "TLDAMOM1");
    auto version = bin::read<std::uint32_t>(is);
    require(version == kMomentCheckpointVersion, ErrorCode::BadFormat, "unsupported moment checkpoint version");
    MomentState s;
    s.mean.n_seen = bin::read<std::uint64_t>(is);
    auto v = static_cast<Index>(bin::read<std::uint64_t>(is));
    s.pca.d = static_cast<Index>(bin::read<std::uint64_t>(is));
    auto r = static_cast<Index>(bin::read<std::uint64_t>(is));
    s.pca.n_seen = bin::read<std::uint64_t>(is);
    s.mean.m1 = bin::read_vector(is, v);
    s.pca.singular_values = bin::read_vector(is, r);
    s.pca.components = bin::read_matrix(is, r, v);
    auto h = bin::read<std::uint64_t>(is);
    if (config_hash) *config_hash = h;
    return s;
}

} // namespace tlda

#endif
