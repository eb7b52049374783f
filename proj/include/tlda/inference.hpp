#ifndef TLDA_INFERENCE_HPP
#define TLDA_INFERENCE_HPP

// Per-document topic mixtures under a fixed topic-word matrix, using the
// classical mean-field LDA E-step.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <thread>
#include <vector>

#include <boost/math/special_functions/digamma.hpp>

#include <Eigen/Dense>

#include "tlda/corpus.hpp"
#include "tlda/error.hpp"
#include "tlda/io.hpp"
#include "tlda/recovery.hpp"

namespace tlda {

inline constexpr double kTopicSmoothing = 1e-12;

struct InferenceOptions {
    std::size_t max_iters = 100;
    double tol = 1e-4;  // on mean |delta gamma|
};

struct DocumentTopicPosterior {
    VectorXd gamma;
    VectorXd theta;
    std::size_t n_iters = 0;
    bool converged = false;
};

/// Prior alpha0 * normalized weights, the default Dirichlet for inference.
inline VectorXd default_prior(const TopicModel& model) {
    return model.fit_config.alpha0 * model.alpha_weights;
}

namespace detail {

inline double digamma(double x) { return boost::math::digamma(x); }

inline void check_doc(const CountVector& doc, const TopicModel& model, const VectorXd& prior) {
    require_dims(prior.size() == model.k(), "prior has " + std::to_string(prior.size()) + " entries, model has " +
                                                std::to_string(model.k()) + " topics");
    for (const auto& tc : doc)
        require_dims(tc.term >= 0 && tc.term < model.v(), "term id " + std::to_string(tc.term) + " outside vocabulary");
    require((prior.array() > 0.0).all(), ErrorCode::InvalidArgument, "prior entries must be > 0");
}

// phi(j, k) for the j-th distinct term of the document.
inline MatrixXd update_phi(const CountVector& doc, const MatrixXd& log_mu, const VectorXd& gamma) {
    const Index k = gamma.size();
    VectorXd e_log_theta(k);
    for (Index t = 0; t < k; ++t) e_log_theta(t) = digamma(gamma(t));
    MatrixXd phi(static_cast<Index>(doc.size()), k);
    for (std::size_t j = 0; j < doc.size(); ++j) {
        VectorXd logits = log_mu.col(doc[j].term) + e_log_theta;
        double mx = logits.maxCoeff();
        VectorXd p = (logits.array() - mx).exp();
        phi.row(static_cast<Index>(j)) = p.transpose() / p.sum();
    }
    return phi;
}

inline MatrixXd smoothed_log_mu(const TopicModel& model) {
    return (model.mu.array() + kTopicSmoothing).log().matrix();
}

} // namespace detail

/// Evidence lower bound for one document under q(theta | gamma) q(z | phi).
inline double document_elbo(const CountVector& doc, const MatrixXd& log_mu, const VectorXd& prior,
                            const VectorXd& gamma, const MatrixXd& phi) {
    const Index k = gamma.size();
    const double gsum = gamma.sum();
    const double dg_sum = detail::digamma(gsum);
    VectorXd e_log_theta(k);
    for (Index t = 0; t < k; ++t) e_log_theta(t) = detail::digamma(gamma(t)) - dg_sum;

    double elbo = std::lgamma(prior.sum()) - std::lgamma(gsum);
    for (Index t = 0; t < k; ++t) {
        elbo += -std::lgamma(prior(t)) + (prior(t) - 1.0) * e_log_theta(t);
        elbo += std::lgamma(gamma(t)) - (gamma(t) - 1.0) * e_log_theta(t);
    }
    for (std::size_t j = 0; j < doc.size(); ++j) {
        const double c = doc[j].count;
        for (Index t = 0; t < k; ++t) {
            double p = phi(static_cast<Index>(j), t);
            if (p <= 0.0) continue;
            elbo += c * p * (e_log_theta(t) + log_mu(t, doc[j].term) - std::log(p));
        }
    }
    return elbo;
}

/// Iterates phi_vk ~ mu_kv exp(psi(gamma_k)), gamma = prior + sum_v c_v phi_v.
/// When `elbo_trace` is given, the bound after each iteration is appended.
inline DocumentTopicPosterior infer_document(const CountVector& doc, const TopicModel& model, const VectorXd& prior,
                                             const InferenceOptions& opts = {}, std::vector<double>* elbo_trace = nullptr,
                                             const MatrixXd* log_mu_cache = nullptr) {
    detail::check_doc(doc, model, prior);
    const Index k = model.k();
    MatrixXd local_log_mu;
    if (!log_mu_cache) local_log_mu = detail::smoothed_log_mu(model);
    const MatrixXd& log_mu = log_mu_cache ? *log_mu_cache : local_log_mu;

    double n_words = static_cast<double>(total_count(doc));
    DocumentTopicPosterior post;
    post.gamma = prior.array() + n_words / static_cast<double>(k);
    for (std::size_t it = 0; it < opts.max_iters; ++it) {
        MatrixXd phi = detail::update_phi(doc, log_mu, post.gamma);
        VectorXd next = prior;
        for (std::size_t j = 0; j < doc.size(); ++j)
            next += static_cast<double>(doc[j].count) * phi.row(static_cast<Index>(j)).transpose();
        double delta = (next - post.gamma).cwiseAbs().mean();
        post.gamma = std::move(next);
        post.n_iters = it + 1;
        if (elbo_trace) elbo_trace->push_back(document_elbo(doc, log_mu, prior, post.gamma, phi));
        if (delta < opts.tol) {
            post.converged = true;
            break;
        }
    }
    post.theta = post.gamma / post.gamma.sum();
    return post;
}

struct InferenceTable {
    std::vector<std::int64_t> doc_ids;
    MatrixXd theta;               // N x K
    std::vector<bool> converged;
    std::vector<std::string> errors;  // empty string when the row is fine
};

/// Maps infer_document over every document of `source` in order. Per-document
/// failures become flagged rows (NaN theta, message in `errors`).
inline InferenceTable infer_corpus(BatchSource& source, const TopicModel& model, const VectorXd& prior,
                                   const InferenceOptions& opts = {}, unsigned workers = 1) {
    std::vector<CountVector> docs;
    InferenceTable table;
    source.reset();
    while (auto batch = source.next()) {
        for (Index r = 0; r < batch->size(); ++r) {
            docs.push_back(row_counts(*batch, r));
            table.doc_ids.push_back(batch->doc_ids[static_cast<std::size_t>(r)]);
        }
    }
    const std::size_t n = docs.size();
    table.theta = MatrixXd::Zero(static_cast<Index>(n), model.k());
    table.converged.assign(n, false);
    table.errors.assign(n, std::string());
    const MatrixXd log_mu = detail::smoothed_log_mu(model);

    auto work = [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            try {
                auto post = infer_document(docs[i], model, prior, opts, nullptr, &log_mu);
                table.theta.row(static_cast<Index>(i)) = post.theta.transpose();
                table.converged[i] = post.converged;
            } catch (const Error& e) {
                table.theta.row(static_cast<Index>(i)).setConstant(std::nan(""));
                table.errors[i] = e.what();
            }
        }
    };
    workers = std::max(1u, workers);
    if (workers == 1 || n < 2) {
        work(0, n);
    } else {
        std::vector<std::thread> pool;
        std::size_t chunk = (n + workers - 1) / workers;
        for (unsigned w = 0; w < workers; ++w) {
            std::size_t b = w * chunk, e = std::min(n, b + chunk);
            if (b < e) pool.emplace_back(work, b, e);
        }
        for (auto& t : pool) t.join();
    }
    return table;
}

/// `doc_id,theta_1,...,theta_K` with a header row.
inline void write_theta_table(const std::string& path, const InferenceTable& table, char delim = ',') {
    auto os = open_out(path);
    os.precision(17);
    os << "doc_id";
    for (Index k = 0; k < table.theta.cols(); ++k) os << delim << "theta_" << (k + 1);
    os << '\n';
    for (std::size_t i = 0; i < table.doc_ids.size(); ++i) {
        os << table.doc_ids[i];
        for (Index k = 0; k < table.theta.cols(); ++k) os << delim << table.theta(static_cast<Index>(i), k);
        os << '\n';
    }
}

} // namespace tlda

#endif
