#ifndef TLDA_EVALUATION_HPP
#define TLDA_EVALUATION_HPP

// Synthetic LDA corpora, ground-truth recovery scoring, document
// co-occurrence coherence metrics, and the recovery/scaling benchmarks.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <mutex>
#include <numeric>
#include <ostream>
#include <random>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "tlda/corpus.hpp"
#include "tlda/decomposition.hpp"
#include "tlda/error.hpp"
#include "tlda/recovery.hpp"

namespace tlda {

// ---------------------------------------------------------------------------
// Synthetic data

struct SyntheticConfig {
    Index k = 2;
    Index v = 500;
    std::size_t n = 20000;
    std::size_t doc_len = 100;
    double alpha_prior = 0.01;   // total document-topic concentration, sum_k alpha_k
    std::vector<double> topic_weights;  // alpha_k = alpha_prior * w_k / sum(w); empty means symmetric
    double beta_prior = 0.1;     // per-word topic-word concentration
    std::uint64_t seed = 0;

    void validate() const {
        require(k >= 1 && v >= 1 && n >= 1 && doc_len >= 1, ErrorCode::InvalidArgument,
                "synthetic counts must be >= 1");
        require(alpha_prior > 0.0 && beta_prior > 0.0, ErrorCode::InvalidArgument, "synthetic priors must be > 0");
        require(topic_weights.empty() || topic_weights.size() == static_cast<std::size_t>(k),
                ErrorCode::DimensionMismatch, "topic_weights must have k entries");
        for (double w : topic_weights) require(w > 0.0, ErrorCode::InvalidArgument, "topic weights must be > 0");
    }

    /// Per-topic Dirichlet parameters.
    VectorXd alpha() const {
        VectorXd w = topic_weights.empty() ? VectorXd::Ones(k)
                                           : VectorXd(Eigen::Map<const VectorXd>(topic_weights.data(), k));
        return alpha_prior * w / w.sum();
    }
};

struct SyntheticTruth {
    MatrixXd mu_true;      // K x V
    MatrixXd theta_true;   // N x K
    std::vector<CountVector> docs;
    std::uint64_t seed = 0;
    Index vocab_size() const { return mu_true.cols(); }
};

/// Dirichlet draw, sampled in log space so that tiny concentrations do not
/// underflow: log G = log Gamma(a+1) + log(U)/a.
template <typename Rng>
VectorXd sample_dirichlet(const VectorXd& concentration, Rng& rng) {
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    const Index dim = concentration.size();
    VectorXd log_g(dim);
    for (Index i = 0; i < dim; ++i) {
        std::gamma_distribution<double> gamma(concentration(i) + 1.0, 1.0);
        double u = uniform(rng);
        while (u <= 0.0) u = uniform(rng);
        log_g(i) = std::log(gamma(rng)) + std::log(u) / concentration(i);
    }
    double mx = log_g.maxCoeff();
    VectorXd p = (log_g.array() - mx).exp();
    return p / p.sum();
}

template <typename Rng>
VectorXd sample_dirichlet(Index dim, double concentration, Rng& rng) {
    return sample_dirichlet(VectorXd::Constant(dim, concentration), rng);
}

/// mu_k ~ Dir(beta), theta_d ~ Dir(alpha), then per token z ~ Mult(theta_d),
/// w ~ Mult(mu_z).
inline SyntheticTruth generate_synthetic(const SyntheticConfig& cfg) {
    cfg.validate();
    std::mt19937_64 rng(cfg.seed);
    SyntheticTruth truth;
    truth.seed = cfg.seed;
    truth.mu_true.resize(cfg.k, cfg.v);
    for (Index t = 0; t < cfg.k; ++t) truth.mu_true.row(t) = sample_dirichlet(cfg.v, cfg.beta_prior, rng).transpose();

    std::vector<std::discrete_distribution<std::int32_t>> word_dists;
    word_dists.reserve(static_cast<std::size_t>(cfg.k));
    for (Index t = 0; t < cfg.k; ++t) {
        VectorXd row = truth.mu_true.row(t).transpose();
        word_dists.emplace_back(row.data(), row.data() + row.size());
    }

    truth.theta_true.resize(static_cast<Index>(cfg.n), cfg.k);
    truth.docs.reserve(cfg.n);
    const VectorXd alpha = cfg.alpha();
    std::vector<std::int32_t> counts(static_cast<std::size_t>(cfg.v), 0);
    std::vector<std::int32_t> touched;
    for (std::size_t d = 0; d < cfg.n; ++d) {
        VectorXd theta = sample_dirichlet(alpha, rng);
        truth.theta_true.row(static_cast<Index>(d)) = theta.transpose();
        std::discrete_distribution<Index> topic_dist(theta.data(), theta.data() + theta.size());
        touched.clear();
        for (std::size_t n = 0; n < cfg.doc_len; ++n) {
            Index z = topic_dist(rng);
            std::int32_t w = word_dists[static_cast<std::size_t>(z)](rng);
            if (counts[static_cast<std::size_t>(w)]++ == 0) touched.push_back(w);
        }
        std::sort(touched.begin(), touched.end());
        CountVector doc;
        doc.reserve(touched.size());
        for (std::int32_t w : touched) {
            doc.push_back({w, counts[static_cast<std::size_t>(w)]});
            counts[static_cast<std::size_t>(w)] = 0;
        }
        truth.docs.push_back(std::move(doc));
    }
    return truth;
}

// ---------------------------------------------------------------------------
// Recovery scoring

inline double pearson(const Eigen::Ref<const VectorXd>& a, const Eigen::Ref<const VectorXd>& b) {
    require_dims(a.size() == b.size(), "pearson: length mismatch");
    const double ma = a.mean(), mb = b.mean();
    const VectorXd da = a.array() - ma, db = b.array() - mb;
    const double denom = std::sqrt(da.squaredNorm() * db.squaredNorm());
    if (!(denom > 0.0)) return 0.0;
    return da.dot(db) / denom;
}

namespace detail {

// Minimum-cost perfect assignment on a square cost matrix (Hungarian
// algorithm with potentials). Returns row -> column.
inline std::vector<Index> hungarian(const MatrixXd& cost) {
    const Index n = cost.rows();
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(static_cast<std::size_t>(n + 1), 0.0), v(static_cast<std::size_t>(n + 1), 0.0);
    std::vector<Index> p(static_cast<std::size_t>(n + 1), 0), way(static_cast<std::size_t>(n + 1), 0);
    for (Index i = 1; i <= n; ++i) {
        p[0] = i;
        Index j0 = 0;
        std::vector<double> minv(static_cast<std::size_t>(n + 1), inf);
        std::vector<bool> used(static_cast<std::size_t>(n + 1), false);
        do {
            used[static_cast<std::size_t>(j0)] = true;
            Index i0 = p[static_cast<std::size_t>(j0)], j1 = 0;
            double delta = inf;
            for (Index j = 1; j <= n; ++j) {
                auto sj = static_cast<std::size_t>(j);
                if (used[sj]) continue;
                double cur = cost(i0 - 1, j - 1) - u[static_cast<std::size_t>(i0)] - v[sj];
                if (cur < minv[sj]) {
                    minv[sj] = cur;
                    way[sj] = j0;
                }
                if (minv[sj] < delta) {
                    delta = minv[sj];
                    j1 = j;
                }
            }
            for (Index j = 0; j <= n; ++j) {
                auto sj = static_cast<std::size_t>(j);
                if (used[sj]) {
                    u[static_cast<std::size_t>(p[sj])] += delta;
                    v[sj] -= delta;
                } else {
                    minv[sj] -= delta;
                }
            }
            j0 = j1;
        } while (p[static_cast<std::size_t>(j0)] != 0);
        do {
            Index j1 = way[static_cast<std::size_t>(j0)];
            p[static_cast<std::size_t>(j0)] = p[static_cast<std::size_t>(j1)];
            j0 = j1;
        } while (j0 != 0);
    }
    std::vector<Index> row_to_col(static_cast<std::size_t>(n), 0);
    for (Index j = 1; j <= n; ++j) row_to_col[static_cast<std::size_t>(p[static_cast<std::size_t>(j)] - 1)] = j - 1;
    return row_to_col;
}

} // namespace detail

struct MatchResult {
    double mean_corr = 0.0;
    std::vector<Index> permutation;  // learned row i is matched to truth row permutation[i]
};

inline constexpr Index kExhaustiveMatchLimit = 8;

/// Pearson correlation between learned and true topic rows, maximised over
/// row matchings: exhaustive for K <= 8, optimal assignment otherwise.
inline MatchResult match_and_correlate(const MatrixXd& learned, const MatrixXd& truth) {
    require_dims(learned.rows() == truth.rows() && learned.cols() == truth.cols(),
                 "match_and_correlate: shapes differ");
    const Index k = learned.rows();
    MatrixXd corr(k, k);
    for (Index i = 0; i < k; ++i)
        for (Index j = 0; j < k; ++j) corr(i, j) = pearson(learned.row(i).transpose(), truth.row(j).transpose());

    MatchResult best;
    if (k <= kExhaustiveMatchLimit) {
        std::vector<Index> perm(static_cast<std::size_t>(k));
        std::iota(perm.begin(), perm.end(), Index{0});
        double best_sum = -std::numeric_limits<double>::infinity();
        do {
            double s = 0.0;
            for (Index i = 0; i < k; ++i) s += corr(i, perm[static_cast<std::size_t>(i)]);
            if (s > best_sum) {
                best_sum = s;
                best.permutation = perm;
            }
        } while (std::next_permutation(perm.begin(), perm.end()));
        best.mean_corr = best_sum / static_cast<double>(k);
    } else {
        best.permutation = detail::hungarian(-corr);
        double s = 0.0;
        for (Index i = 0; i < k; ++i) s += corr(i, best.permutation[static_cast<std::size_t>(i)]);
        best.mean_corr = s / static_cast<double>(k);
    }
    return best;
}

// ---------------------------------------------------------------------------
// Coherence

/// Document-level occurrence index: token -> sorted posting list.
class CooccurrenceIndex {
public:
    CooccurrenceIndex(const std::vector<CountVector>& docs, const Vocabulary& vocab)
        : vocab_(vocab), postings_(vocab.size()), n_docs_(docs.size()) {
        for (std::size_t d = 0; d < docs.size(); ++d)
            for (const auto& tc : docs[d]) {
                require_dims(tc.term >= 0 && static_cast<std::size_t>(tc.term) < vocab.size(),
                             "coherence index: term id outside vocabulary");
                postings_[static_cast<std::size_t>(tc.term)].push_back(static_cast<std::uint32_t>(d));
            }
    }

    std::size_t n_docs() const { return n_docs_; }

    std::int32_t id(const std::string& token) const {
        auto id = vocab_.index_of(token);
        if (!id) throw Error(ErrorCode::UnknownToken, "token not in index: " + token);
        return *id;
    }

    std::size_t df(std::int32_t id) const { return postings_[static_cast<std::size_t>(id)].size(); }

    std::size_t co_df(std::int32_t a, std::int32_t b) const {
        const auto& pa = postings_[static_cast<std::size_t>(a)];
        const auto& pb = postings_[static_cast<std::size_t>(b)];
        std::size_t i = 0, j = 0, n = 0;
        while (i < pa.size() && j < pb.size()) {
            if (pa[i] < pb[j]) ++i;
            else if (pb[j] < pa[i]) ++j;
            else { ++n; ++i; ++j; }
        }
        return n;
    }

private:
    const Vocabulary& vocab_;
    std::vector<std::vector<std::uint32_t>> postings_;
    std::size_t n_docs_;
};

/// Mean over topics of sum_{i<j} log((D(w_i,w_j) + 1) / D(w_j)), words in rank order.
inline double umass_coherence(const std::vector<std::vector<std::string>>& top_words, const CooccurrenceIndex& index) {
    require(!top_words.empty(), ErrorCode::InvalidArgument, "umass_coherence: no topics");
    double total = 0.0;
    for (const auto& words : top_words) {
        std::vector<std::int32_t> ids;
        for (const auto& w : words) ids.push_back(index.id(w));
        double s = 0.0;
        for (std::size_t i = 0; i < ids.size(); ++i)
            for (std::size_t j = i + 1; j < ids.size(); ++j) {
                double dj = static_cast<double>(index.df(ids[j]));
                if (dj == 0.0) throw Error(ErrorCode::UnknownToken, "token never occurs: " + words[j]);
                s += std::log((static_cast<double>(index.co_df(ids[i], ids[j])) + 1.0) / dj);
            }
        total += s;
    }
    return total / static_cast<double>(top_words.size());
}

inline constexpr double kNpmiEpsilon = 1e-12;

/// Mean over topics of the mean pairwise NPMI with document co-occurrence
/// probabilities, log((p_ij + eps) / (p_i p_j)) / -log(p_ij + eps).
inline double npmi_coherence(const std::vector<std::vector<std::string>>& top_words, const CooccurrenceIndex& index) {
    require(!top_words.empty(), ErrorCode::InvalidArgument, "npmi_coherence: no topics");
    require(index.n_docs() > 0, ErrorCode::InvalidArgument, "npmi_coherence: empty reference corpus");
    const double n = static_cast<double>(index.n_docs());
    double total = 0.0;
    for (const auto& words : top_words) {
        std::vector<std::int32_t> ids;
        for (const auto& w : words) ids.push_back(index.id(w));
        double s = 0.0;
        std::size_t pairs = 0;
        for (std::size_t i = 0; i < ids.size(); ++i)
            for (std::size_t j = i + 1; j < ids.size(); ++j) {
                double pi = static_cast<double>(index.df(ids[i])) / n;
                double pj = static_cast<double>(index.df(ids[j])) / n;
                if (pi == 0.0 || pj == 0.0)
                    throw Error(ErrorCode::UnknownToken, "token never occurs in the reference corpus");
                double pij = static_cast<double>(index.co_df(ids[i], ids[j])) / n + kNpmiEpsilon;
                double denom = -std::log(pij);
                s += denom > 0.0 ? std::log(pij / (pi * pj)) / denom : 1.0;
                ++pairs;
            }
        total += pairs ? s / static_cast<double>(pairs) : 0.0;
    }
    return total / static_cast<double>(top_words.size());
}

// ---------------------------------------------------------------------------
// Benchmarks

enum class FitMode { Batched, Online };

struct TimedFit {
    TopicModel model;
    FitResult fit;
    double seconds = 0.0;
};

/// Times one fit (excluding corpus generation) followed by recovery.
inline TimedFit timed_fit(BatchSource& source, const FitConfig& cfg, FitMode mode, std::size_t total_batches,
                          double warmup_fraction = 0.05) {
    auto t0 = std::chrono::steady_clock::now();
    TimedFit out;
    if (mode == FitMode::Batched) {
        out.fit = fit_batched(source, cfg);
    } else {
        OnlineOptions opts;
        opts.warmup_fraction = warmup_fraction;
        opts.total_batches = total_batches;
        out.fit = fit_online(source, cfg, opts);
    }
    out.model = recover_model(out.fit, cfg, 0);
    out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return out;
}

inline std::size_t batch_count(std::size_t n_docs, std::size_t n_b) { return (n_docs + n_b - 1) / n_b; }

struct RecoveryCell {
    Index v = 0;
    std::uint64_t seed = 0;
    double corr = 0.0;
    double seconds = 0.0;
    std::string error;
};

struct RecoveryRow {
    Index v = 0;
    double mean_corr = 0.0;
    double std_corr = 0.0;
    double mean_seconds = 0.0;
    std::size_t failures = 0;
};

struct RecoveryBenchmark {
    std::vector<RecoveryCell> cells;
    std::vector<RecoveryRow> rows;
};

struct RecoveryGrid {
    std::vector<Index> vocab_sizes{500, 1000, 1500};
    std::size_t seeds = 10;
    SyntheticConfig data;  // v and seed are overwritten per grid cell
    FitConfig fit;
    FitMode mode = FitMode::Batched;
    unsigned workers = 1;

    /// K=2, N=20000, alpha0=0.01, D=2, beta=1e-4. theta=10 because the two
    /// centered topics are antiparallel and need a strong separation push.
    static RecoveryGrid table_defaults() {
        RecoveryGrid g;
        g.data.k = 2;
        g.data.n = 20000;
        g.fit.k = 2;
        g.fit.d = 2;
        g.fit.alpha0 = 0.01;
        g.fit.beta = 1e-4;
        g.fit.theta = 10.0;
        return g;
    }
};

inline RecoveryCell run_recovery_cell(const RecoveryGrid& grid, Index v, std::uint64_t seed) {
    RecoveryCell cell;
    cell.v = v;
    cell.seed = seed;
    SyntheticConfig data = grid.data;
    data.v = v;
    data.seed = seed;
    FitConfig fit = grid.fit;
    fit.seed = seed;
    try {
        SyntheticTruth truth = generate_synthetic(data);
        MemoryBatchSource source(truth.docs, v, fit.n_b);
        TimedFit result = timed_fit(source, fit, grid.mode, batch_count(truth.docs.size(), fit.n_b));
        cell.corr = match_and_correlate(result.model.mu, truth.mu_true).mean_corr;
        cell.seconds = result.seconds;
    } catch (const Error& e) {
        cell.error = e.what();
    }
    return cell;
}

/// Mean and standard deviation of matched correlation over seeds per V.
/// Failed fits count as correlation 0.
inline RecoveryBenchmark run_recovery_benchmark(const RecoveryGrid& grid) {
    std::vector<std::pair<Index, std::uint64_t>> jobs;
    for (Index v : grid.vocab_sizes)
        for (std::size_t s = 0; s < grid.seeds; ++s) jobs.emplace_back(v, static_cast<std::uint64_t>(s));

    RecoveryBenchmark bench;
    bench.cells.resize(jobs.size());
    std::size_t next = 0;
    std::mutex mutex;
    auto worker = [&]() {
        while (true) {
            std::size_t job;
            {
                std::lock_guard<std::mutex> lock(mutex);
                if (next >= jobs.size()) return;
                job = next++;
            }
            bench.cells[job] = run_recovery_cell(grid, jobs[job].first, jobs[job].second);
        }
    };
    unsigned workers = std::max(1u, grid.workers);
    if (workers == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (unsigned w = 0; w < workers; ++w) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }

    for (Index v : grid.vocab_sizes) {
        RecoveryRow row;
        row.v = v;
        std::vector<double> corrs;
        double secs = 0.0;
        for (const auto& c : bench.cells) {
            if (c.v != v) continue;
            corrs.push_back(c.error.empty() ? c.corr : 0.0);
            secs += c.seconds;
            if (!c.error.empty()) ++row.failures;
        }
        const double n = static_cast<double>(corrs.size());
        row.mean_corr = std::accumulate(corrs.begin(), corrs.end(), 0.0) / n;
        double var = 0.0;
        for (double c : corrs) var += (c - row.mean_corr) * (c - row.mean_corr);
        row.std_corr = corrs.size() > 1 ? std::sqrt(var / (n - 1.0)) : 0.0;
        row.mean_seconds = secs / n;
        bench.rows.push_back(row);
    }
    return bench;
}

inline void write_recovery_table(std::ostream& os, const RecoveryBenchmark& bench, char delim = ',') {
    os << "vocab_size" << delim << "mean_corr" << delim << "std_corr" << delim << "mean_seconds" << delim << "failures\n";
    for (const auto& r : bench.rows)
        os << r.v << delim << r.mean_corr << delim << r.std_corr << delim << r.mean_seconds << delim << r.failures << '\n';
}

struct ScalingPoint {
    std::size_t n_docs = 0;
    Index k = 0;
    double seconds = 0.0;
};

struct ScalingReport {
    std::vector<ScalingPoint> by_docs;   // fixed K, increasing N
    std::vector<ScalingPoint> by_topics; // fixed N, increasing K (D = K)
    double loglog_slope = 0.0;           // of seconds vs N
    bool superlinear = false;            // slope > 1.25
};

struct ScalingPlan {
    std::size_t base_docs = 25000;
    std::vector<std::size_t> multiples{1, 2, 4, 8};
    Index doc_k = 10;
    std::vector<Index> topic_counts{10, 20, 40};
    std::size_t topic_docs = 25000;
    SyntheticConfig data;  // corpus shape; k and n are set per run
    FitConfig fit;         // k and d are overridden per run
    FitMode mode = FitMode::Online;
    std::size_t repeats = 3;  // each point is the fastest of this many fits
};

/// Least-squares slope of log(y) against log(x).
inline double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
    require_dims(x.size() == y.size() && x.size() >= 2, "loglog_slope needs two or more points");
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += std::log(x[i]);
        my += std::log(y[i]);
    }
    mx /= static_cast<double>(x.size());
    my /= static_cast<double>(y.size());
    double sxy = 0, sxx = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        double dx = std::log(x[i]) - mx;
        sxy += dx * (std::log(y[i]) - my);
        sxx += dx * dx;
    }
    return sxy / sxx;
}

/// Replicates a base corpus to each requested size and times a fit per size,
/// then times fits at each topic count on a fixed corpus. Wall-clock noise on
/// a shared core is large next to the ratios of interest, so every point is
/// the minimum over `repeats` identical fits.
inline ScalingReport run_scaling_benchmark(const ScalingPlan& plan) {
    ScalingReport report;
    auto timed = [&](const std::vector<CountVector>& docs, Index k) {
        FitConfig fit = plan.fit;
        fit.k = k;
        fit.d = k;
        MemoryBatchSource source(docs, plan.data.v, fit.n_b);
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t r = 0; r < std::max<std::size_t>(1, plan.repeats); ++r)
            best = std::min(best, timed_fit(source, fit, plan.mode, batch_count(docs.size(), fit.n_b)).seconds);
        return best;
    };

    {
        SyntheticConfig data = plan.data;
        data.k = plan.doc_k;
        data.n = plan.base_docs;
        SyntheticTruth base = generate_synthetic(data);
        std::vector<double> xs, ys;
        for (std::size_t mult : plan.multiples) {
            std::vector<CountVector> docs;
            docs.reserve(base.docs.size() * mult);
            for (std::size_t r = 0; r < mult; ++r) docs.insert(docs.end(), base.docs.begin(), base.docs.end());
            double secs = timed(docs, plan.doc_k);
            report.by_docs.push_back({docs.size(), plan.doc_k, secs});
            xs.push_back(static_cast<double>(docs.size()));
            ys.push_back(secs);
        }
        if (xs.size() >= 2) {
            report.loglog_slope = loglog_slope(xs, ys);
            report.superlinear = report.loglog_slope > 1.25;
        }
    }
    for (Index k : plan.topic_counts) {
        SyntheticConfig data = plan.data;
        data.k = k;
        data.n = plan.topic_docs;
        SyntheticTruth corpus = generate_synthetic(data);
        report.by_topics.push_back({corpus.docs.size(), k, timed(corpus.docs, k)});
    }
    return report;
}

inline void write_scaling_table(std::ostream& os, const ScalingReport& report, char delim = ',') {
    os << "series" << delim << "n_docs" << delim << "k" << delim << "seconds\n";
    for (const auto& p : report.by_docs) os << "docs" << delim << p.n_docs << delim << p.k << delim << p.seconds << '\n';
    for (const auto& p : report.by_topics) os << "topics" << delim << p.n_docs << delim << p.k << delim << p.seconds << '\n';
    os << "# loglog_slope=" << report.loglog_slope << (report.superlinear ? " superlinear" : "") << '\n';
}

} // namespace tlda

#endif
