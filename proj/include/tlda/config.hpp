#ifndef TLDA_CONFIG_HPP
#define TLDA_CONFIG_HPP

// Run configuration: an INI document with one section per module. Flags of the
// form `--section.key=value` override it; the resolved result is written next
// to every artifact.

#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "tlda/corpus.hpp"
#include "tlda/decomposition.hpp"
#include "tlda/error.hpp"
#include "tlda/evaluation.hpp"
#include "tlda/inference.hpp"
#include "tlda/io.hpp"

namespace tlda {

inline constexpr int kConfigSchemaVersion = 1;

struct RunSettings {
    std::string mode = "batched";  // batched | online
    std::string log_level = "info"; // quiet | info | debug
    unsigned workers = 1;
    std::size_t top_words = 20;
};

struct InputSettings {
    std::string format = "lines";  // lines | csv | tsv
    std::string column = "text";   // text column for csv/tsv input
};

struct EvalSettings {
    std::size_t seeds = 10;
    std::vector<Index> vocab_sizes{500, 1000, 1500};
    double synthetic_theta = 10.0;     // orthogonality penalty for the recovery grid
    std::size_t scaling_base_docs = 25000;
    std::vector<std::size_t> scaling_multiples{1, 2, 4, 8};
    std::vector<Index> scaling_topics{10, 20, 40};
    Index scaling_vocab = 1000;
    std::size_t scaling_batch = 500;
    std::size_t scaling_repeats = 3;
};

struct RunConfig {
    RunSettings run;
    InputSettings input;
    PreprocessConfig preprocess;
    FitConfig fit;
    double warmup_fraction = 0.05;
    InferenceOptions infer;
    SyntheticConfig synthetic;
    EvalSettings eval;

    void validate() const;
};

namespace detail {

using boost::property_tree::ptree;

template <typename T>
std::string to_text(const T& value) {
    std::ostringstream os;
    os.precision(17);
    if constexpr (std::is_same_v<T, bool>) os << (value ? "true" : "false");
    else os << value;
    return os.str();
}

template <typename T>
std::string list_text(const std::vector<T>& values) {
    std::string out;
    for (std::size_t i = 0; i < values.size(); ++i) out += (i ? "," : "") + to_text(values[i]);
    return out;
}

template <typename T>
T parse_value(const std::string& key, const std::string& text) {
    if constexpr (std::is_same_v<T, std::string>) {
        return text;
    } else if constexpr (std::is_same_v<T, bool>) {
        if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
        if (text == "false" || text == "0" || text == "no" || text == "off") return false;
        throw Error(ErrorCode::InvalidArgument, key + ": expected a boolean, got '" + text + "'");
    } else {
        std::istringstream is(text);
        T value{};
        if (!(is >> value) || !(is >> std::ws).eof())
            throw Error(ErrorCode::InvalidArgument, key + ": cannot parse '" + text + "'");
        if constexpr (std::is_unsigned_v<T>)
            require(text.find('-') == std::string::npos, ErrorCode::InvalidArgument, key + " must be >= 0");
        return value;
    }
}

template <typename T>
std::vector<T> parse_list(const std::string& key, const std::string& text) {
    std::vector<T> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        auto b = item.find_first_not_of(" \t"), e = item.find_last_not_of(" \t");
        if (b == std::string::npos) continue;
        out.push_back(parse_value<T>(key, item.substr(b, e - b + 1)));
    }
    return out;
}

// Visits every (section.key, field) pair in a fixed order. `Visitor` gets
// (name, T& field) for scalars and (name, std::vector<T>& field, list tag).
struct ListTag {};

template <typename Config, typename Visitor>
void visit_fields(Config& c, Visitor&& v) {
    v("run.mode", c.run.mode);
    v("run.log_level", c.run.log_level);
    v("run.workers", c.run.workers);
    v("run.top_words", c.run.top_words);
    v("input.format", c.input.format);
    v("input.column", c.input.column);
    v("preprocess.lower_frac", c.preprocess.lower_frac);
    v("preprocess.upper_frac", c.preprocess.upper_frac);
    v("preprocess.min_doc_len", c.preprocess.min_doc_len);
    v("preprocess.bigram_min_count", c.preprocess.bigram_min_count);
    v("preprocess.bigram_score_threshold", c.preprocess.bigram_score_threshold);
    v("preprocess.bigrams", c.preprocess.bigrams);
    v("fit.k", c.fit.k);
    v("fit.d", c.fit.d);
    v("fit.alpha0", c.fit.alpha0);
    v("fit.beta", c.fit.beta);
    v("fit.theta", c.fit.theta);
    v("fit.n_b", c.fit.n_b);
    v("fit.max_epochs", c.fit.max_epochs);
    v("fit.tol", c.fit.tol);
    v("fit.seed", c.fit.seed);
    v("fit.shuffle", c.fit.shuffle);
    v("online.warmup_fraction", c.warmup_fraction);
    v("infer.max_iters", c.infer.max_iters);
    v("infer.tol", c.infer.tol);
    v("synthetic.k", c.synthetic.k);
    v("synthetic.v", c.synthetic.v);
    v("synthetic.n", c.synthetic.n);
    v("synthetic.doc_len", c.synthetic.doc_len);
    v("synthetic.alpha_prior", c.synthetic.alpha_prior);
    v("synthetic.topic_weights", c.synthetic.topic_weights, ListTag{});
    v("synthetic.beta_prior", c.synthetic.beta_prior);
    v("synthetic.seed", c.synthetic.seed);
    v("eval.seeds", c.eval.seeds);
    v("eval.vocab_sizes", c.eval.vocab_sizes, ListTag{});
    v("eval.synthetic_theta", c.eval.synthetic_theta);
    v("eval.scaling_base_docs", c.eval.scaling_base_docs);
    v("eval.scaling_multiples", c.eval.scaling_multiples, ListTag{});
    v("eval.scaling_topics", c.eval.scaling_topics, ListTag{});
    v("eval.scaling_vocab", c.eval.scaling_vocab);
    v("eval.scaling_batch", c.eval.scaling_batch);
    v("eval.scaling_repeats", c.eval.scaling_repeats);
}

} // namespace detail

/// Every known key with its current value, in schema order.
inline boost::property_tree::ptree to_tree(const RunConfig& cfg) {
    boost::property_tree::ptree tree;
    RunConfig copy = cfg;
    detail::visit_fields(copy, [&](const std::string& name, auto& field, auto... tag) {
        if constexpr (sizeof...(tag) > 0) tree.put(name, detail::list_text(field));
        else tree.put(name, detail::to_text(field));
    });
    return tree;
}

/// Sets one `section.key` from text; unknown keys are an input error.
inline void set_value(RunConfig& cfg, const std::string& name, const std::string& text) {
    bool found = false;
    detail::visit_fields(cfg, [&](const std::string& key, auto& field, auto... tag) {
        if (key != name) return;
        found = true;
        if constexpr (sizeof...(tag) > 0) {
            using T = typename std::decay_t<decltype(field)>::value_type;
            field = detail::parse_list<T>(key, text);
        } else {
            field = detail::parse_value<std::decay_t<decltype(field)>>(key, text);
        }
    });
    if (!found) throw Error(ErrorCode::InvalidArgument, "unknown config key: " + name);
}

inline void apply_tree(RunConfig& cfg, const boost::property_tree::ptree& tree) {
    for (const auto& [section, body] : tree) {
        if (body.empty()) throw Error(ErrorCode::InvalidArgument, "config key outside a section: " + section);
        for (const auto& [key, value] : body) set_value(cfg, section + "." + key, value.data());
    }
}

inline void RunConfig::validate() const {
    require(run.mode == "batched" || run.mode == "online", ErrorCode::InvalidArgument,
            "run.mode must be batched or online");
    require(run.log_level == "quiet" || run.log_level == "info" || run.log_level == "debug",
            ErrorCode::InvalidArgument, "run.log_level must be quiet, info or debug");
    require(input.format == "lines" || input.format == "csv" || input.format == "tsv", ErrorCode::InvalidArgument,
            "input.format must be lines, csv or tsv");
    require(run.top_words >= 1, ErrorCode::InvalidArgument, "run.top_words must be >= 1");
    require(warmup_fraction > 0.0 && warmup_fraction <= 0.5, ErrorCode::InvalidArgument,
            "online.warmup_fraction must lie in (0, 0.5]");
    preprocess.validate();
    fit.validate();
    synthetic.validate();
}

inline RunConfig load_config_file(const std::string& path, RunConfig cfg = {}) {
    boost::property_tree::ptree tree;
    try {
        boost::property_tree::read_ini(path, tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
        if (e.line() == 0) throw Error(ErrorCode::SourceUnreadable, "cannot read config: " + path);
        throw Error(ErrorCode::BadFormat, "config " + path + ":" + std::to_string(e.line()) + ": " + e.message());
    }
    apply_tree(cfg, tree);
    return cfg;
}

/// `section.key=value` pairs as given after `--`.
inline void apply_overrides(RunConfig& cfg, const std::vector<std::string>& overrides) {
    for (const auto& item : overrides) {
        auto eq = item.find('=');
        require(eq != std::string::npos && eq > 0, ErrorCode::InvalidArgument,
                "override must look like section.key=value: " + item);
        set_value(cfg, item.substr(0, eq), item.substr(eq + 1));
    }
}

inline std::string resolved_text(const RunConfig& cfg) {
    std::ostringstream os;
    os << "; schema " << kConfigSchemaVersion << "\n";
    boost::property_tree::write_ini(os, to_tree(cfg));
    return os.str();
}

inline std::uint64_t config_hash(const RunConfig& cfg) { return fnv1a(resolved_text(cfg)); }

inline void write_resolved_config(const std::string& path, const RunConfig& cfg) {
    auto os = open_out(path);
    os << resolved_text(cfg);
}

} // namespace tlda

#endif
