#ifndef TLDA_DECOMPOSITION_HPP
#define TLDA_DECOMPOSITION_HPP

// Rank-K symmetric CP decomposition of the whitened third-order cumulant by
// mini-batch stochastic gradient descent. The D^3 tensor is never formed:
// both terms of the objective reduce to K x K Gram cubes and n_b x K
// projections of the whitened batch.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tlda/corpus.hpp"
#include "tlda/error.hpp"
#include "tlda/io.hpp"
#include "tlda/moments.hpp"

namespace tlda {

struct FitConfig {
    Index k = 2;
    Index d = 2;
    double alpha0 = 0.001;
    double beta = 5e-4;
    double theta = 1.0;
    std::size_t n_b = 500;
    std::size_t max_epochs = 200;
    double tol = 1e-5;
    std::uint64_t seed = 0;
    bool shuffle = false;

    void validate() const {
        require(k >= 1, ErrorCode::InvalidArgument, "k must be >= 1");
        require(d >= k, ErrorCode::InvalidArgument, "whitening dimension d must be >= k");
        require(alpha0 >= 0.0, ErrorCode::InvalidArgument, "alpha0 must be >= 0");
        require(beta > 0.0, ErrorCode::InvalidArgument, "beta must be > 0");
        require(theta >= 0.0, ErrorCode::InvalidArgument, "theta must be >= 0");
        require(n_b >= 1, ErrorCode::InvalidArgument, "n_b must be >= 1");
        require(max_epochs >= 1, ErrorCode::InvalidArgument, "max_epochs must be >= 1");
        require(tol >= 0.0, ErrorCode::InvalidArgument, "tol must be >= 0");
    }

    std::string canonical() const {
        std::ostringstream os;
        os.precision(17);
        os << "k=" << k << ";d=" << d << ";alpha0=" << alpha0 << ";beta=" << beta << ";theta=" << theta
           << ";n_b=" << n_b << ";max_epochs=" << max_epochs << ";tol=" << tol << ";seed=" << seed
           << ";shuffle=" << shuffle;
        return os.str();
    }

    std::uint64_t hash() const { return fnv1a(canonical()); }

    /// (alpha0+1)(alpha0+2) / (2n), the cumulant scale for a batch of n rows.
    double cumulant_scale(Index n) const {
        return (alpha0 + 1.0) * (alpha0 + 2.0) / (2.0 * static_cast<double>(n));
    }
};

/// D x K factors with unit-norm columns.
struct FactorMatrix {
    MatrixXd phi;
};

inline FactorMatrix init_factors(const FitConfig& cfg) {
    require(cfg.k >= 1 && cfg.d >= 1, ErrorCode::InvalidArgument, "init_factors: empty shape");
    std::mt19937_64 rng(cfg.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    FactorMatrix f{MatrixXd(cfg.d, cfg.k)};
    for (Index c = 0; c < cfg.k; ++c) {
        for (Index r = 0; r < cfg.d; ++r) f.phi(r, c) = normal(rng);
        double norm = f.phi.col(c).norm();
        if (norm == 0.0) {
            f.phi.col(c).setZero();
            f.phi(c % cfg.d, c) = 1.0;
        } else {
            f.phi.col(c) /= norm;
        }
    }
    return f;
}

namespace detail {

inline void check_shapes(const FactorMatrix& phi, const WhitenedBatch& x) {
    require_dims(x.rows.cols() == phi.phi.rows(),
                 "whitened batch has " + std::to_string(x.rows.cols()) + " columns, factors have " +
                     std::to_string(phi.phi.rows()) + " rows");
    require(x.rows.rows() >= 1, ErrorCode::InvalidArgument, "empty whitened batch");
}

} // namespace detail

/// (1+theta)/2 * sum_ij (Phi^T Phi)_ij^3 - c3(n) * sum_n sum_i (x_n^T Phi_i)^3
inline double loss(const FactorMatrix& phi, const WhitenedBatch& x, const FitConfig& cfg) {
    detail::check_shapes(phi, x);
    const MatrixXd gram = phi.phi.transpose() * phi.phi;
    const MatrixXd proj = x.rows * phi.phi;
    const double orth = 0.5 * (1.0 + cfg.theta) * gram.array().cube().sum();
    const double fit = cfg.cumulant_scale(x.rows.rows()) * proj.array().cube().sum();
    return orth - fit;
}

/// 3(1+theta) Phi (G * G) - 3 c3(n) X^T (X Phi * X Phi), with G = Phi^T Phi.
inline MatrixXd gradient(const FactorMatrix& phi, const WhitenedBatch& x, const FitConfig& cfg) {
    detail::check_shapes(phi, x);
    const MatrixXd gram = phi.phi.transpose() * phi.phi;
    const MatrixXd proj = x.rows * phi.phi;
    MatrixXd g = 3.0 * (1.0 + cfg.theta) * (phi.phi * gram.array().square().matrix());
    g.noalias() -= 3.0 * cfg.cumulant_scale(x.rows.rows()) * (x.rows.transpose() * proj.array().square().matrix());
    return g;
}

/// Phi - beta * grad, then each column projected back to the unit sphere.
inline FactorMatrix sgd_step(const FactorMatrix& phi, const MatrixXd& grad, double beta) {
    require_dims(grad.rows() == phi.phi.rows() && grad.cols() == phi.phi.cols(),
                 "gradient shape does not match factors");
    FactorMatrix out{phi.phi - beta * grad};
    for (Index c = 0; c < out.phi.cols(); ++c) {
        double norm = out.phi.col(c).norm();
        if (!(norm > 0.0) || !std::isfinite(norm))
            throw Error(ErrorCode::NumericalBlowup,
                        "factor column " + std::to_string(c) + " has norm " + std::to_string(norm) +
                            " after the update; lower the learning rate");
        out.phi.col(c) /= norm;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Fitting

struct EpochReport {
    std::size_t epoch = 0;
    double loss = 0.0;
    double dloss = 0.0;  // relative change from the previous epoch
    double seconds = 0.0;
};

/// `epoch=<e> loss=<l> dloss=<r> seconds=<s>`
inline std::string format_epoch(const EpochReport& r) {
    std::ostringstream os;
    os.precision(10);
    os << "epoch=" << r.epoch << " loss=" << r.loss << " dloss=" << r.dloss << " seconds=" << r.seconds;
    return os.str();
}

struct FitOptions {
    std::optional<FactorMatrix> initial;
    std::function<void(const EpochReport&)> on_epoch;
};

struct FitResult {
    FactorMatrix phi;
    WhiteningMatrix whitening;
    MeanState mean;
    PcaState pca;
    std::size_t epochs = 0;
    double last_loss = 0.0;
    bool converged = false;
    std::vector<double> loss_history;
};

namespace detail {

using Clock = std::chrono::steady_clock;

inline double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

inline MeanState mean_pass(BatchSource& source) {
    MeanState mean(source.vocab_size());
    source.reset();
    while (auto batch = source.next()) mean = update_mean(mean, *batch);
    return mean;
}

inline PcaState pca_pass(BatchSource& source, const VectorXd& m1, Index d) {
    PcaState pca(d, source.vocab_size());
    source.reset();
    while (auto batch = source.next()) pca = update_pca(pca, center(*batch, m1));
    return pca;
}

inline WhiteningMatrix whitening_pass(BatchSource& source, const VectorXd& m1, const WhiteningMatrix& w) {
    MatrixXd scatter = MatrixXd::Zero(w.w.cols(), w.w.cols());
    source.reset();
    while (auto batch = source.next()) {
        WhitenedBatch x = whiten(*batch, m1, w);
        scatter.selfadjointView<Eigen::Lower>().rankUpdate(x.rows.transpose());
    }
    scatter = scatter.selfadjointView<Eigen::Lower>();
    return refine_whitening(w, scatter);
}

// Shared SGD epoch loop. `next_batch(epoch)` returns whitened batches until
// nullopt; the epoch loss is the row-weighted mean of per-batch losses taken
// before each step.
template <typename NextBatch>
void run_epochs(FitResult& result, const FitConfig& cfg, const FitOptions& opts, NextBatch&& next_batch,
                std::function<void()> begin_epoch) {
    std::optional<double> prev;
    for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        auto t0 = Clock::now();
        begin_epoch();
        double weighted = 0.0;
        double rows = 0.0;
        while (auto x = next_batch()) {
            double n = static_cast<double>(x->rows.rows());
            weighted += n * loss(result.phi, *x, cfg);
            rows += n;
            result.phi = sgd_step(result.phi, gradient(result.phi, *x, cfg), cfg.beta);
        }
        require(rows > 0, ErrorCode::InvalidArgument, "no documents to fit");
        double epoch_loss = weighted / rows;
        if (!std::isfinite(epoch_loss))
            throw Error(ErrorCode::NumericalBlowup, "non-finite loss in epoch " + std::to_string(epoch));
        double dloss = prev ? std::abs(epoch_loss - *prev) / std::max(std::abs(*prev), 1e-300) : 1.0;
        result.loss_history.push_back(epoch_loss);
        result.epochs = epoch;
        result.last_loss = epoch_loss;
        if (opts.on_epoch) opts.on_epoch(EpochReport{epoch, epoch_loss, dloss, seconds_since(t0)});
        if (prev && dloss < cfg.tol) {
            result.converged = true;
            return;
        }
        prev = epoch_loss;
    }
}

} // namespace detail

inline constexpr double kWhitenedCacheLimit = 1 << 25;

/// Mean pass, PCA pass, a whitening pass that corrects the streamed PCA so
/// W^T M2 W = I holds exactly on the data, then SGD epochs over whitened
/// batches until the relative epoch-loss change drops below tol or
/// max_epochs is reached. `converged == false` is a warning outcome.
inline FitResult fit_batched(BatchSource& source, const FitConfig& cfg, const FitOptions& opts = {}) {
    cfg.validate();
    FitResult result;
    result.mean = detail::mean_pass(source);
    require(result.mean.n_seen >= 1, ErrorCode::InvalidArgument, "no documents to fit");
    result.pca = detail::pca_pass(source, result.mean.m1, cfg.d);
    result.whitening = detail::whitening_pass(
        source, result.mean.m1, whitening_matrix(result.pca, cfg.alpha0, result.mean.n_seen));
    result.phi = opts.initial ? *opts.initial : init_factors(cfg);
    require_dims(result.phi.phi.rows() == cfg.d && result.phi.phi.cols() == cfg.k,
                 "initial factors must be d x k");

    // Whitened rows are n x D; keep them in memory unless that is large, in
    // which case every epoch re-reads and re-whitens the source.
    const bool cache = static_cast<double>(result.mean.n_seen) * static_cast<double>(cfg.d) <= kWhitenedCacheLimit;
    if (!cache && !cfg.shuffle) {
        detail::run_epochs(
            result, cfg, opts,
            [&]() -> std::optional<WhitenedBatch> {
                auto batch = source.next();
                if (!batch) return std::nullopt;
                return whiten(*batch, result.mean.m1, result.whitening);
            },
            [&]() { source.reset(); });
        return result;
    }

    std::vector<WhitenedBatch> cached;
    source.reset();
    while (auto batch = source.next()) cached.push_back(whiten(*batch, result.mean.m1, result.whitening));
    std::vector<std::size_t> order(cached.size());
    std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
    std::size_t pos = 0;
    detail::run_epochs(
        result, cfg, opts,
        [&]() -> const WhitenedBatch* {
            if (pos >= order.size()) return nullptr;
            return &cached[order[pos++]];
        },
        [&]() {
            std::iota(order.begin(), order.end(), std::size_t{0});
            if (cfg.shuffle) std::shuffle(order.begin(), order.end(), rng);
            pos = 0;
        });
    return result;
}

struct OnlineOptions {
    double warmup_fraction = 0.05;
    /// Number of batches the stream will deliver; needed to size the warmup.
    std::optional<std::size_t> total_batches;
    FitOptions fit;
};

/// Single pass. The first warmup_fraction of batches is buffered and fitted
/// with fit_batched to initialise the factors; every later batch triggers one
/// mean update, one PCA update, a fresh whitening and one gradient step.
inline FitResult fit_online(BatchSource& stream, const FitConfig& cfg, const OnlineOptions& opts) {
    cfg.validate();
    require(opts.warmup_fraction > 0.0 && opts.warmup_fraction <= 0.5, ErrorCode::InvalidArgument,
            "warmup_fraction must lie in (0, 0.5]");
    require(opts.total_batches.has_value(), ErrorCode::InvalidArgument,
            "online fitting needs the total batch count to size the warmup");
    const std::size_t warmup = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::llround(opts.warmup_fraction * static_cast<double>(*opts.total_batches))));

    stream.reset();
    std::vector<DocumentBatch> buffer;
    while (buffer.size() < warmup) {
        auto batch = stream.next();
        if (!batch) break;
        buffer.push_back(std::move(*batch));
    }
    require(!buffer.empty(), ErrorCode::InvalidArgument, "stream delivered no batches");

    BatchListSource warm(std::move(buffer), stream.vocab_size());
    FitResult result = fit_batched(warm, cfg, opts.fit);

    auto t0 = detail::Clock::now();
    std::size_t steps = 0;
    double weighted = 0.0, rows = 0.0;
    while (auto batch = stream.next()) {
        result.mean = update_mean(result.mean, *batch);
        CenteredBatch centered = center(*batch, result.mean.m1);
        result.pca = update_pca(result.pca, centered);
        result.whitening = whitening_matrix(result.pca, cfg.alpha0, result.mean.n_seen);
        WhitenedBatch x = whiten(centered, result.whitening);
        double n = static_cast<double>(x.rows.rows());
        weighted += n * loss(result.phi, x, cfg);
        rows += n;
        result.phi = sgd_step(result.phi, gradient(result.phi, x, cfg), cfg.beta);
        ++steps;
    }
    if (steps > 0) {
        double online_loss = weighted / rows;
        double prev = result.last_loss;
        result.loss_history.push_back(online_loss);
        result.last_loss = online_loss;
        result.epochs += 1;
        if (opts.fit.on_epoch)
            opts.fit.on_epoch(EpochReport{result.epochs, online_loss,
                                          std::abs(online_loss - prev) / std::max(std::abs(prev), 1e-300),
                                          detail::seconds_since(t0)});
    }
    return result;
}

// ---------------------------------------------------------------------------
// Factor checkpoint
//
//   char[8] "TLDAPHI1", u32 version (1), u64 D, u64 K,
//   f64[D*K] Phi row-major, u64 epoch, f64 last loss, u64 config hash

struct FactorCheckpoint {
    FactorMatrix phi;
    std::uint64_t epoch = 0;
    double last_loss = 0.0;
    std::uint64_t config_hash = 0;
};

inline void save_factor_checkpoint(const std::string& path, const FactorCheckpoint& ck) {
    auto os = open_out(path, true);
    bin::write_magic(os, "TLDAPHI1");
    bin::write<std::uint32_t>(os, 1);
    bin::write<std::uint64_t>(os, static_cast<std::uint64_t>(ck.phi.phi.rows()));
    bin::write<std::uint64_t>(os, static_cast<std::uint64_t>(ck.phi.phi.cols()));
    bin::write_matrix(os, ck.phi.phi);
    bin::write<std::uint64_t>(os, ck.epoch);
    bin::write<double>(os, ck.last_loss);
    bin::write<std::uint64_t>(os, ck.config_hash);
    if (!os) throw Error(ErrorCode::SourceUnreadable, "write failed: " + path);
}

inline FactorCheckpoint load_factor_checkpoint(const std::string& path) {
    auto is = open_in(path, true);
    bin::expect_magic(is, "TLDAPHI1");
    require(bin::read<std::uint32_t>(is) == 1, ErrorCode::BadFormat, "unsupported factor checkpoint version");
    FactorCheckpoint ck;
    auto d = static_cast<Index>(bin::read<std::uint64_t>(is));
    auto k = static_cast<Index>(bin::read<std::uint64_t>(is));
    ck.phi.phi = bin::read_matrix(is, d, k);
    ck.epoch = bin::read<std::uint64_t>(is);
    ck.last_loss = bin::read<double>(is);
    ck.config_hash = bin::read<std::uint64_t>(is);
    return ck;
}

} // namespace tlda

#endif
