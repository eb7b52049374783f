// Acceptance runner: one PASS/FAIL line per criterion. Optional arguments
// select criteria by number, e.g. `acceptance 2 4`.

#include <cstdio>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "tlda/decomposition.hpp"
#include "tlda/evaluation.hpp"
#include "tlda/inference.hpp"
#include "tlda/moments.hpp"
#include "tlda/recovery.hpp"

using namespace tlda;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(double v, int precision = 4) {
    std::ostringstream os;
    os.precision(precision);
    os << v;
    return os.str();
}

FitConfig fit_for(std::size_t k, std::size_t d, std::uint64_t seed) {
    FitConfig c;
    c.k = static_cast<Index>(k);
    c.d = static_cast<Index>(d);
    c.seed = seed;
    return c;
}

// 1. Synthetic recovery grid.
Outcome recovery_grid() {
    RecoveryGrid grid = RecoveryGrid::table_defaults();
    RecoveryBenchmark bench = run_recovery_benchmark(grid);
    const std::vector<std::pair<Index, double>> floors{{500, 0.85}, {1000, 0.85}, {1500, 0.78}};
    Outcome out{true, ""};
    for (const auto& row : bench.rows) {
        double floor = 0.0;
        for (const auto& [v, f] : floors)
            if (v == row.v) floor = f;
        bool ok = row.mean_corr >= floor && row.mean_seconds < 60.0;
        out.pass = out.pass && ok;
        out.detail += "V=" + std::to_string(row.v) + " corr=" + fmt(row.mean_corr) + "+-" + fmt(row.std_corr, 3) +
                      " (>=" + fmt(floor, 3) + ") sec/fit=" + fmt(row.mean_seconds, 3) + "; ";
    }
    return out;
}

// 2. Analytic gradient against central differences of the loss.
Outcome gradient_check() {
    std::mt19937_64 rng(2024);
    std::uniform_int_distribution<int> dd(1, 16), kk(1, 8), nn(1, 32);
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        Index d = dd(rng), k = std::min<Index>(kk(rng), d), n = nn(rng);
        FitConfig c = fit_for(static_cast<std::size_t>(k), static_cast<std::size_t>(d), 0);
        c.alpha0 = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
        c.theta = std::uniform_real_distribution<double>(0.0, 5.0)(rng);
        MatrixXd phi = oracle::random_matrix(d, k, rng);
        WhitenedBatch x{oracle::random_matrix(n, d, rng)};
        MatrixXd fd = oracle::central_difference(phi, [&](const MatrixXd& p) { return loss(FactorMatrix{p}, x, c); });
        MatrixXd g = gradient(FactorMatrix{phi}, x, c);
        worst = std::max(worst, (g - fd).norm() / fd.norm());
    }
    return {worst < 1e-5, "20 instances, worst relative error " + fmt(worst, 3) + " (< 1e-5)"};
}

// 3. Whitening identity on synthetic corpora through the streaming pipeline.
Outcome whitening_identity() {
    struct Case {
        Index v, k, d;
    };
    const std::vector<Case> cases{{200, 10, 10}, {120, 4, 6}, {60, 2, 2}, {200, 3, 8}};
    double worst = 0.0;
    for (std::size_t i = 0; i < cases.size(); ++i) {
        SyntheticConfig sc;
        sc.v = cases[i].v;
        sc.k = cases[i].k;
        sc.n = 5000;
        sc.doc_len = 60;
        sc.seed = 100 + i;
        SyntheticTruth truth = generate_synthetic(sc);
        MemoryBatchSource source(truth.docs, sc.v, 500);
        FitConfig fit = fit_for(static_cast<std::size_t>(cases[i].k), static_cast<std::size_t>(cases[i].d), i);
        fit.alpha0 = 0.01;
        fit.max_epochs = 1;
        FitResult r = fit_batched(source, fit);
        const WhiteningMatrix& w = r.whitening;
        MatrixXd centered = center(MatrixXd(make_batch(truth.docs, sc.v).counts), r.mean.m1).rows;
        MatrixXd m2 = explicit_m2(centered, 0.01);
        double err = (w.w.transpose() * m2 * w.w - MatrixXd::Identity(cases[i].d, cases[i].d)).norm();
        worst = std::max(worst, err);
    }
    return {worst < 1e-6, "4 corpora (V<=200, D<=10), worst ||W^T M2 W - I||_F = " + fmt(worst, 3) + " (< 1e-6)"};
}

// 4. Gram-based loss against the materialised tensor.
Outcome implicit_explicit() {
    std::mt19937_64 rng(77);
    std::uniform_int_distribution<int> dd(1, 10), nn(1, 30);
    double worst = 0.0;
    for (int trial = 0; trial < 30; ++trial) {
        Index d = dd(rng), k = std::uniform_int_distribution<int>(1, static_cast<int>(d))(rng), n = nn(rng);
        FitConfig c = fit_for(static_cast<std::size_t>(k), static_cast<std::size_t>(d), 0);
        c.alpha0 = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
        c.theta = std::uniform_real_distribution<double>(0.0, 5.0)(rng);
        MatrixXd phi = oracle::unit_columns(oracle::random_matrix(d, k, rng));
        MatrixXd x = oracle::random_matrix(n, d, rng);
        double dense = oracle::dense_loss(phi, x, c.alpha0, c.theta);
        double fast = loss(FactorMatrix{phi}, WhitenedBatch{x}, c);
        worst = std::max(worst, std::abs(fast - dense) / std::abs(dense));
    }
    return {worst < 1e-10, "30 instances (D<=10), worst relative difference " + fmt(worst, 3) + " (< 1e-10)"};
}

// 5. Recentering identity, then a Monte-Carlo check of the fitted model
//    against the uncentered third-moment oracle.
Outcome recentering() {
    std::mt19937_64 rng(55);
    std::uniform_int_distribution<int> kk(1, 5), vv(1, 20);
    double worst = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
        Index k = kk(rng), v = vv(rng);
        MatrixXd mu(v, k);
        VectorXd w(k);
        for (Index i = 0; i < k; ++i) {
            mu.col(i) = sample_dirichlet(v, 0.5, rng);
            w(i) = std::uniform_real_distribution<double>(0.05, 1.0)(rng);
        }
        w /= w.sum();
        VectorXd m1 = mu * w;
        MatrixXd nu = mu.colwise() - m1;
        MatrixXd back = nu.colwise() + m1;
        Tensor3 lhs = oracle::weighted_cubes(back, w);
        Tensor3 rhs = oracle::weighted_cubes(mu, w);
        worst = std::max(worst, lhs.max_abs_diff(rhs));
    }

    SyntheticConfig sc;
    sc.k = 2;
    sc.v = 30;
    sc.n = 100000;
    sc.doc_len = 50;
    sc.alpha_prior = 0.01;
    sc.seed = 5;
    SyntheticTruth truth = generate_synthetic(sc);
    FitConfig fit = RecoveryGrid::table_defaults().fit;
    fit.seed = sc.seed;
    MemoryBatchSource source(truth.docs, sc.v, fit.n_b);
    TimedFit fitted = timed_fit(source, fit, FitMode::Batched, batch_count(truth.docs.size(), fit.n_b));

    MatrixXd raw = MatrixXd(make_batch(truth.docs, sc.v).counts);
    Tensor3 oracle_m3 = uncentered_m3(raw, fitted.fit.mean.m1, fit.alpha0);
    const double len = static_cast<double>(sc.doc_len);
    const double factorial = len * (len - 1.0) * (len - 2.0);
    Tensor3 recon = oracle::weighted_cubes(fitted.model.mu.transpose() , fitted.model.alpha_weights * factorial);
    double rel = (oracle_m3 - recon).frobenius_norm() / oracle_m3.frobenius_norm();
    double corr = match_and_correlate(fitted.model.mu, truth.mu_true).mean_corr;

    bool ok = worst < 1e-12 && rel < 0.15;
    return {ok, "identity worst entry diff " + fmt(worst, 3) + " (< 1e-12) on 50 instances; N=100000 V=30 fitted " +
                    "reconstruction vs uncentered M3 relative Frobenius error " + fmt(rel, 3) +
                    " (< 0.15), topic corr " + fmt(corr, 3)};
}

// 6. Streaming mean under arbitrary partitions and online vs batched factors.
Outcome streaming_equivalence() {
    SyntheticConfig sc;
    sc.v = 500;
    sc.n = 3000;
    sc.seed = 6;
    SyntheticTruth small = generate_synthetic(sc);
    MeanState exact = update_mean(MeanState(sc.v), make_batch(small.docs, sc.v));
    std::mt19937_64 rng(6);
    double mean_err = 0.0;
    for (int trial = 0; trial < 10; ++trial) {
        MeanState s(sc.v);
        std::size_t pos = 0;
        while (pos < small.docs.size()) {
            std::size_t len = std::uniform_int_distribution<std::size_t>(1, 700)(rng);
            len = std::min(len, small.docs.size() - pos);
            std::vector<CountVector> part(small.docs.begin() + static_cast<std::ptrdiff_t>(pos),
                                          small.docs.begin() + static_cast<std::ptrdiff_t>(pos + len));
            s = update_mean(s, make_batch(part, sc.v));
            pos += len;
        }
        mean_err = std::max(mean_err, (s.m1 - exact.m1).cwiseAbs().maxCoeff() / exact.m1.cwiseAbs().maxCoeff());
    }

    RecoveryGrid grid = RecoveryGrid::table_defaults();
    std::vector<double> corrs;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        SyntheticConfig data = grid.data;
        data.v = 500;
        data.seed = seed;
        SyntheticTruth truth = generate_synthetic(data);
        FitConfig fit = grid.fit;
        fit.seed = seed;
        std::size_t batches = batch_count(truth.docs.size(), fit.n_b);
        MemoryBatchSource a(truth.docs, data.v, fit.n_b), b(truth.docs, data.v, fit.n_b);
        TimedFit batched = timed_fit(a, fit, FitMode::Batched, batches);
        TimedFit online = timed_fit(b, fit, FitMode::Online, batches);
        corrs.push_back(match_and_correlate(online.model.mu, batched.model.mu).mean_corr);
    }
    double mean_corr = std::accumulate(corrs.begin(), corrs.end(), 0.0) / static_cast<double>(corrs.size());
    double min_corr = *std::min_element(corrs.begin(), corrs.end());
    std::string per_seed;
    for (double c : corrs) per_seed += (per_seed.empty() ? "" : ",") + fmt(c, 3);
    bool ok = mean_err < 1e-12 && mean_corr >= 0.8;
    return {ok, "mean partition error " + fmt(mean_err, 3) + " (< 1e-12); online vs batched corr mean " +
                    fmt(mean_corr, 3) + " min " + fmt(min_corr, 3) + " over 5 seeds [" + per_seed + "] (>= 0.8)"};
}

ScalingReport scaling_report() {
    static std::optional<ScalingReport> cached;
    if (!cached) {
        ScalingPlan plan;
        plan.data.v = 1000;
        cached = run_scaling_benchmark(plan);
    }
    return *cached;
}

// 7. Linear scaling in documents.
Outcome document_scaling() {
    ScalingReport r = scaling_report();
    double t1 = 0, t4 = 0;
    std::string times;
    for (const auto& p : r.by_docs) {
        if (p.n_docs == 25000) t1 = p.seconds;
        if (p.n_docs == 100000) t4 = p.seconds;
        times += std::to_string(p.n_docs) + ":" + fmt(p.seconds, 3) + "s ";
    }
    double ratio = t4 / t1;
    bool ok = r.loglog_slope >= 0.8 && r.loglog_slope <= 1.25 && ratio >= 3.2 && ratio <= 5.0;
    return {ok, times + "slope " + fmt(r.loglog_slope, 3) + " (in [0.8,1.25]), 4x ratio " + fmt(ratio, 3) +
                    " (in [3.2,5.0])"};
}

// 8. Near-constant scaling in topics.
Outcome topic_scaling() {
    ScalingReport r = scaling_report();
    double t10 = 0, t40 = 0;
    std::string times;
    for (const auto& p : r.by_topics) {
        if (p.k == 10) t10 = p.seconds;
        if (p.k == 40) t40 = p.seconds;
        times += "K=" + std::to_string(p.k) + ":" + fmt(p.seconds, 3) + "s ";
    }
    double ratio = t40 / t10;
    return {ratio <= 2.0, times + "K=40/K=10 ratio " + fmt(ratio, 3) + " (<= 2.0)"};
}

// 9. Variational inference on a separable two-topic model.
Outcome inference_sanity() {
    TopicModel model;
    model.mu = MatrixXd::Zero(2, 6);
    model.mu.row(0) << 0.5, 0.3, 0.2, 0, 0, 0;
    model.mu.row(1) << 0, 0, 0, 0.2, 0.3, 0.5;
    model.alpha_weights = VectorXd::Constant(2, 0.5);
    model.fit_config.alpha0 = 0.02;
    VectorXd prior = VectorXd::Constant(2, 0.01);

    const std::vector<CountVector> support0{{{0, 3}, {1, 2}}, {{2, 1}}, {{0, 1}, {1, 1}, {2, 5}}, {{1, 10}}};
    double min_theta = 1.0;
    for (const auto& doc : support0) min_theta = std::min(min_theta, infer_document(doc, model, prior).theta(0));

    const std::vector<CountVector> fixtures{{{0, 3}, {4, 2}}, {{1, 1}, {3, 1}, {5, 4}}, {{2, 7}, {3, 7}}, {{0, 1}}};
    std::size_t decreases = 0, steps = 0;
    InferenceOptions opts;
    opts.tol = 1e-12;
    opts.max_iters = 50;
    for (const auto& doc : fixtures)
        for (double a : {0.01, 0.5, 2.0}) {
            std::vector<double> trace;
            infer_document(doc, model, VectorXd::Constant(2, a), opts, &trace);
            for (std::size_t i = 1; i < trace.size(); ++i, ++steps)
                if (trace[i] < trace[i - 1] - 1e-10 * std::abs(trace[i - 1])) ++decreases;
        }
    bool ok = min_theta > 0.95 && decreases == 0;
    return {ok, "min theta[0] on topic-0 documents " + fmt(min_theta, 6) + " (> 0.95); ELBO decreases " +
                    std::to_string(decreases) + " of " + std::to_string(steps) + " iterations"};
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<std::pair<int, std::function<Outcome()>>> criteria{
        {1, recovery_grid},      {2, gradient_check},        {3, whitening_identity},
        {4, implicit_explicit},  {5, recentering},           {6, streaming_equivalence},
        {7, document_scaling},   {8, topic_scaling},         {9, inference_sanity},
    };
    std::set<int> selected;
    for (int i = 1; i < argc; ++i) selected.insert(std::stoi(argv[i]));
    int failures = 0;
    for (const auto& [id, run] : criteria) {
        if (!selected.empty() && !selected.count(id)) continue;
        Outcome o;
        try {
            o = run();
        } catch (const std::exception& e) {
            o = {false, std::string("error: ") + e.what()};
        }
        if (!o.pass) ++failures;
        std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << id << ": " << o.detail << std::endl;
    }
    return failures == 0 ? 0 : 1;
}
