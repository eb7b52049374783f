#ifndef TLDA_RECOVERY_HPP
#define TLDA_RECOVERY_HPP

// From whitened CP factors back to LDA parameters: unwhitening, Dirichlet
// weights, recentering by the first moment, and repair into row-stochastic
// topic-word distributions.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tlda/corpus.hpp"
#include "tlda/decomposition.hpp"
#include "tlda/error.hpp"
#include "tlda/io.hpp"
#include "tlda/moments.hpp"

namespace tlda {

/// nu = (W^T)^+ Phi = W (W^T W)^{-1} Phi, V x K.
inline MatrixXd unwhiten(const FactorMatrix& phi, const WhiteningMatrix& w) {
    require_dims(w.w.cols() == phi.phi.rows(), "unwhiten: whitening has " + std::to_string(w.w.cols()) +
                                                   " columns, factors have " + std::to_string(phi.phi.rows()) +
                                                   " rows");
    const MatrixXd gram = w.w.transpose() * w.w;
    Eigen::ColPivHouseholderQR<MatrixXd> qr(gram);
    if (qr.rank() < gram.rows())
        throw Error(ErrorCode::RankDeficient, "whitening matrix lacks full column rank");
    return w.w * qr.solve(phi.phi);
}

struct RecoveredWeights {
    double gamma = 0.0;
    VectorXd alpha;  // sums to 1
};

/// alpha_i = gamma^2 / ||nu_i||^2 with gamma chosen so the weights sum to 1.
inline RecoveredWeights recover_alpha(const MatrixXd& nu) {
    require(nu.cols() >= 1, ErrorCode::InvalidArgument, "recover_alpha: no factors");
    VectorXd inv_sq(nu.cols());
    for (Index i = 0; i < nu.cols(); ++i) {
        double norm = nu.col(i).norm();
        if (!(norm >= 1e-12))
            throw Error(ErrorCode::DegenerateFactor, "factor " + std::to_string(i) + " has norm " + std::to_string(norm));
        inv_sq(i) = 1.0 / (norm * norm);
    }
    RecoveredWeights out;
    const double total = inv_sq.sum();
    out.gamma = std::sqrt(1.0 / total);
    out.alpha = inv_sq / total;
    return out;
}

namespace detail {

/// Mass that clipping would remove from m1 + sign * nu_col.
inline double negative_mass(const MatrixXd& nu, const VectorXd& m1, Index col, double sign) {
    return -(m1 + sign * nu.col(col)).cwiseMin(0.0).sum();
}

} // namespace detail

inline constexpr Index kExhaustiveSignLimit = 16;

/// Chooses column signs of nu. Centered factors satisfy sum_i alpha_i nu_i = 0,
/// so the signs minimising ||sum_i alpha_i s_i nu_i|| are preferred; a single
/// column flip rule ("flip if nu_i + m1 gains positive mass") would map an
/// antiparallel pair onto one topic. Among patterns with equal residual
/// (including the global flip s -> -s) the one whose nu_i + m1 lose the least
/// mass to clipping wins. Centered columns sum to zero, so "most positive
/// mass" would pick the most negative representative instead. Exhaustive for
/// K <= 16, greedy single flips otherwise.
inline MatrixXd orient_factors(const MatrixXd& nu, const VectorXd& m1, const VectorXd& alpha) {
    require_dims(nu.rows() == m1.size(), "orient_factors: m1 size mismatch");
    require_dims(alpha.size() == nu.cols(), "orient_factors: weights do not match factors");
    const Index k = nu.cols();
    MatrixXd scaled = nu * alpha.asDiagonal();
    const MatrixXd gram = scaled.transpose() * scaled;
    VectorXd mass_plus(k), mass_minus(k);
    for (Index i = 0; i < k; ++i) {
        mass_plus(i) = detail::negative_mass(nu, m1, i, 1.0);
        mass_minus(i) = detail::negative_mass(nu, m1, i, -1.0);
    }
    auto residual = [&](const VectorXd& sgn) { return sgn.dot(gram * sgn); };
    auto mass = [&](const VectorXd& sgn) {
        double m = 0.0;
        for (Index i = 0; i < k; ++i) m += sgn(i) > 0 ? mass_plus(i) : mass_minus(i);
        return m;
    };
    const double tie = 1e-9 * gram.trace() + 1e-300;
    auto better = [&](const VectorXd& a, double ra, const VectorXd& b, double rb) {
        if (ra < rb - tie) return true;
        if (ra > rb + tie) return false;
        return mass(a) < mass(b);
    };

    VectorXd best(k);
    for (Index i = 0; i < k; ++i) best(i) = mass_minus(i) < mass_plus(i) ? -1.0 : 1.0;
    double best_r = residual(best);
    if (k <= kExhaustiveSignLimit) {
        VectorXd sgn(k);
        for (std::uint64_t bits = 0; bits < (std::uint64_t{1} << k); ++bits) {
            for (Index i = 0; i < k; ++i) sgn(i) = (bits >> i) & 1 ? -1.0 : 1.0;
            double r = residual(sgn);
            if (better(sgn, r, best, best_r)) {
                best = sgn;
                best_r = r;
            }
        }
    } else {
        for (bool improved = true; improved;) {
            improved = false;
            for (Index i = 0; i < k; ++i) {
                VectorXd sgn = best;
                sgn(i) = -sgn(i);
                double r = residual(sgn);
                if (better(sgn, r, best, best_r)) {
                    best = sgn;
                    best_r = r;
                    improved = true;
                }
            }
        }
        VectorXd flipped = -best;
        if (mass(flipped) < mass(best)) best = flipped;
    }
    return nu * best.asDiagonal();
}

/// Row i is (nu_i + m1)^T.
inline MatrixXd recenter(const MatrixXd& nu, const VectorXd& m1) {
    require_dims(nu.rows() == m1.size(), "recenter: m1 has " + std::to_string(m1.size()) +
                                             " entries, factors have " + std::to_string(nu.rows()) + " rows");
    MatrixXd out = nu.transpose();
    out.rowwise() += m1.transpose();
    return out;
}

struct TopicModel {
    MatrixXd mu;           // K x V, rows on the simplex
    VectorXd alpha_weights; // K, sums to 1
    std::uint64_t vocab_hash = 0;
    FitConfig fit_config;
    VectorXd clipped_mass;  // per topic, clipped negative mass / row L1 norm

    Index k() const { return mu.rows(); }
    Index v() const { return mu.cols(); }
};

inline constexpr double kClippedMassWarning = 0.10;

/// Flips rows with negative sum, clips negatives to zero and renormalizes.
inline TopicModel finalize_topics(const MatrixXd& raw, const VectorXd& alpha_weights, const FitConfig& cfg,
                                  std::uint64_t vocab_hash) {
    require_dims(alpha_weights.size() == raw.rows(), "finalize_topics: weights do not match topics");
    TopicModel model;
    model.mu = raw;
    model.alpha_weights = alpha_weights;
    model.vocab_hash = vocab_hash;
    model.fit_config = cfg;
    model.clipped_mass = VectorXd::Zero(raw.rows());
    for (Index i = 0; i < raw.rows(); ++i) {
        auto row = model.mu.row(i);
        if (row.sum() < 0.0) row *= -1.0;
        double l1 = row.cwiseAbs().sum();
        double clipped = -row.cwiseMin(0.0).sum();
        row = row.cwiseMax(0.0);
        double total = row.sum();
        if (!(total > 0.0) || !std::isfinite(total))
            throw Error(ErrorCode::DegenerateTopic, "topic " + std::to_string(i) + " is empty after clipping");
        row /= total;
        model.clipped_mass(i) = l1 > 0.0 ? clipped / l1 : 0.0;
    }
    return model;
}

inline TopicModel finalize_topics(const MatrixXd& raw, const VectorXd& alpha_weights, const FitConfig& cfg,
                                  const Vocabulary& vocab) {
    require_dims(static_cast<std::size_t>(raw.cols()) == vocab.size(), "finalize_topics: vocabulary size mismatch");
    return finalize_topics(raw, alpha_weights, cfg, vocab.hash());
}

/// Full recovery chain for a fit: unwhiten, weights, orientation, recenter, finalize.
inline TopicModel recover_model(const FitResult& fit, const FitConfig& cfg, std::uint64_t vocab_hash) {
    MatrixXd nu = unwhiten(fit.phi, fit.whitening);
    RecoveredWeights weights = recover_alpha(nu);
    nu = orient_factors(nu, fit.mean.m1, weights.alpha);
    return finalize_topics(recenter(nu, fit.mean.m1), weights.alpha, cfg, vocab_hash);
}

/// Indices of the `n` largest entries of each topic row, ties by index.
inline std::vector<std::vector<Index>> top_word_ids(const TopicModel& model, std::size_t n = 20) {
    std::vector<std::vector<Index>> out;
    for (Index i = 0; i < model.k(); ++i) {
        std::vector<Index> ids(static_cast<std::size_t>(model.v()));
        std::iota(ids.begin(), ids.end(), Index{0});
        std::size_t take = std::min<std::size_t>(n, ids.size());
        std::partial_sort(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(take), ids.end(),
                          [&](Index a, Index b) {
                              if (model.mu(i, a) != model.mu(i, b)) return model.mu(i, a) > model.mu(i, b);
                              return a < b;
                          });
        ids.resize(take);
        out.push_back(std::move(ids));
    }
    return out;
}

inline std::vector<std::vector<std::string>> top_words(const TopicModel& model, const Vocabulary& vocab,
                                                       std::size_t n = 20) {
    require_dims(static_cast<std::size_t>(model.v()) == vocab.size(), "top_words: vocabulary size mismatch");
    std::vector<std::vector<std::string>> out;
    for (const auto& ids : top_word_ids(model, n)) {
        std::vector<std::string> words;
        for (Index id : ids) words.push_back(vocab.token(static_cast<std::size_t>(id)));
        out.push_back(std::move(words));
    }
    return out;
}

/// One line per topic: `<id>\t<label>\t<w1>, <w2>, ...` (label may be empty).
inline void write_topics_txt(const std::string& path, const TopicModel& model, const Vocabulary& vocab,
                             std::size_t n = 20, const std::vector<std::string>& labels = {}) {
    auto os = open_out(path);
    auto words = top_words(model, vocab, n);
    for (std::size_t i = 0; i < words.size(); ++i) {
        os << i << '\t' << (i < labels.size() ? labels[i] : "") << '\t';
        for (std::size_t j = 0; j < words[i].size(); ++j) os << (j ? ", " : "") << words[i][j];
        os << '\n';
    }
}

// Model file, little-endian:
//   char[8] "TLDAMDL1", u32 version (1), u64 K, u64 V, u64 vocab hash,
//   f64 alpha0, f64[K] normalized alpha, f64[K*V] mu rows

inline void save_model(const std::string& path, const TopicModel& model) {
    auto os = open_out(path, true);
    bin::write_magic(os, "TLDAMDL1");
    bin::write<std::uint32_t>(os, 1);
    bin::write<std::uint64_t>(os, static_cast<std::uint64_t>(model.k()));
    bin::write<std::uint64_t>(os, static_cast<std::uint64_t>(model.v()));
    bin::write<std::uint64_t>(os, model.vocab_hash);
    bin::write<double>(os, model.fit_config.alpha0);
    bin::write_vector(os, model.alpha_weights);
    bin::write_matrix(os, model.mu);
    if (!os) throw Error(ErrorCode::SourceUnreadable, "write failed: " + path);
}

inline TopicModel load_model(const std::string& path) {
    auto is = open_in(path, true);
    bin::expect_magic(is, "TLDAMDL1");
    require(bin::read<std::uint32_t>(is) == 1, ErrorCode::BadFormat, "unsupported model version");
    TopicModel model;
    auto k = static_cast<Index>(bin::read<std::uint64_t>(is));
    auto v = static_cast<Index>(bin::read<std::uint64_t>(is));
    model.vocab_hash = bin::read<std::uint64_t>(is);
    model.fit_config.alpha0 = bin::read<double>(is);
    model.fit_config.k = k;
    model.alpha_weights = bin::read_vector(is, k);
    model.mu = bin::read_matrix(is, k, v);
    model.clipped_mass = VectorXd::Zero(k);
    return model;
}

} // namespace tlda

#endif
