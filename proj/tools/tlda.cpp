// tlda: command-line front end.
//
//   tlda [--config FILE] <command> [options] [--section.key=value ...]
//
// Exit codes: 0 success, 2 usage or input error, 3 numeric failure.

#include <CLI11.hpp>

#include <boost/property_tree/ini_parser.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "tlda/tlda.hpp"

namespace fs = std::filesystem;
using namespace tlda;

#ifndef TLDA_BUILD_TYPE
#define TLDA_BUILD_TYPE "unknown"
#endif

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 2;
constexpr int kExitNumeric = 3;

// Usage and input failures detected by the front end itself.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Logging to stderr, optionally mirrored into a progress file.

class Log {
public:
    void set_level(const std::string& level) { level_ = level == "quiet" ? 0 : level == "debug" ? 2 : 1; }
    void mirror_to(const std::string& path) { file_ = std::make_unique<std::ofstream>(path); }

    void info(const std::string& msg) { emit(1, msg); }
    void debug(const std::string& msg) { emit(2, msg); }
    void warn(const std::string& msg) { emit(0, "warning: " + msg); }

private:
    void emit(int level, const std::string& msg) {
        if (level <= level_) std::cerr << "[tlda] " << msg << '\n';
        if (file_ && level <= 1) *file_ << msg << '\n' << std::flush;
    }

    int level_ = 1;
    std::unique_ptr<std::ofstream> file_;
};

Log g_log;

std::string num(double v) {
    std::ostringstream os;
    os << v;
    return os.str();
}

// ---------------------------------------------------------------------------
// Configuration assembly

struct Settings {
    RunConfig cfg;
    std::string config_path;
    std::vector<std::string> overrides;  // section.key=value
    bool d_explicit = false;             // fit.d given, otherwise D follows K
};

// Moves every `--section.key=value` argument out of argv.
std::vector<std::string> extract_overrides(std::vector<std::string>& args) {
    std::vector<std::string> out, rest;
    for (const auto& a : args) {
        auto eq = a.find('=');
        auto dot = a.find('.');
        if (a.rfind("--", 0) == 0 && dot != std::string::npos && eq != std::string::npos && dot < eq)
            out.push_back(a.substr(2));
        else
            rest.push_back(a);
    }
    args = rest;
    return out;
}

void resolve(Settings& s) {
    if (!s.config_path.empty()) {
        if (!fs::exists(s.config_path)) throw UsageError("config file not found: " + s.config_path);
        s.cfg = load_config_file(s.config_path, s.cfg);
        boost::property_tree::ptree tree;
        boost::property_tree::read_ini(s.config_path, tree);
        if (tree.get_optional<std::string>("fit.d")) s.d_explicit = true;
    }
    apply_overrides(s.cfg, s.overrides);
    for (const auto& o : s.overrides)
        if (o.rfind("fit.d=", 0) == 0) s.d_explicit = true;
}

void finish_resolve(Settings& s) {
    if (!s.d_explicit) s.cfg.fit.d = s.cfg.fit.k;
    s.cfg.validate();
    g_log.set_level(s.cfg.run.log_level);
}

// ---------------------------------------------------------------------------
// Artifact helpers

std::uint64_t file_hash(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error(ErrorCode::SourceUnreadable, "cannot open: " + path);
    Fnv1a h;
    char buf[1 << 16];
    while (is.read(buf, sizeof buf) || is.gcount() > 0) h.update(buf, static_cast<std::size_t>(is.gcount()));
    return h.digest();
}

void prepare_out_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw UsageError("cannot create output directory: " + dir);
}

// resolved_config.ini plus manifest.txt listing input content hashes.
void write_run_record(const std::string& dir, const std::string& command, const RunConfig& cfg,
                      const std::vector<std::string>& inputs) {
    write_resolved_config((fs::path(dir) / "resolved_config.ini").string(), cfg);
    auto os = open_out((fs::path(dir) / "manifest.txt").string());
    os << "command=" << command << "\nversion=" << TLDA_VERSION << "\nconfig_schema=" << kConfigSchemaVersion
       << "\nconfig_hash=" << hex64(config_hash(cfg)) << '\n';
    for (const auto& in : inputs) os << "input " << fs::path(in).filename().string() << '=' << hex64(file_hash(in)) << '\n';
}

std::string join(const fs::path& dir, const std::string& name) { return (dir / name).string(); }

void require_file(const std::string& path, const std::string& what) {
    if (!fs::is_regular_file(path)) throw UsageError(what + " not found: " + path);
}

std::unique_ptr<TextSource> open_text(const std::string& path, const RunConfig& cfg) {
    require_file(path, "input file");
    if (cfg.input.format == "lines") return std::make_unique<LineFileSource>(path);
    return std::make_unique<DelimitedFileSource>(path, cfg.input.column, cfg.input.format == "csv" ? ',' : '\t');
}

// A preprocessed corpus directory: vocab.txt, bigrams.txt, counts.tsv, counts.meta.
struct CorpusDir {
    fs::path dir;
    Vocabulary vocab;
    BigramSet bigrams;
    CountCacheMeta meta;

    std::string counts() const { return join(dir, "counts.tsv"); }
    std::string vocab_path() const { return join(dir, "vocab.txt"); }

    static CorpusDir open(const std::string& path) {
        CorpusDir c;
        c.dir = path;
        if (!fs::is_directory(c.dir)) throw UsageError("data directory not found: " + path);
        require_file(c.vocab_path(), "vocabulary file");
        require_file(c.counts(), "count cache");
        require_file(join(c.dir, "counts.meta"), "count cache header");
        c.vocab = Vocabulary::load(c.vocab_path());
        c.bigrams = load_bigrams(join(c.dir, "bigrams.txt"));
        c.meta = read_count_cache_meta(join(c.dir, "counts.meta"));
        if (c.meta.vocab_hash != 0 && c.meta.vocab_hash != c.vocab.hash())
            throw UsageError("count cache was built with a different vocabulary: " + path);
        if (c.meta.vocab_size != c.vocab.size()) throw UsageError("count cache V does not match vocabulary: " + path);
        return c;
    }
};

// ---------------------------------------------------------------------------
// preprocess

struct PreprocessArgs {
    std::string input;
    std::string out;
};

CorpusDir run_preprocessing(const std::string& input, const std::string& out, const RunConfig& cfg) {
    prepare_out_dir(out);
    auto text = open_text(input, cfg);
    PreprocessResult pre;
    try {
        pre = build_preprocessing(*text, cfg.preprocess);
    } catch (const Error& e) {
        if (e.code() == ErrorCode::EmptyVocabulary) throw UsageError("no documents survived preprocessing");
        throw;
    }
    CorpusDir c;
    c.dir = out;
    c.vocab = pre.vocab;
    c.bigrams = pre.bigrams;
    auto batches = stream_batches(*text, c.vocab, cfg.fit.n_b, c.bigrams, cfg.preprocess.min_doc_len);
    std::uint64_t n = write_count_cache(c.counts(), batches);
    if (n == 0) throw UsageError("no documents survived preprocessing");
    c.meta = {n, c.vocab.size(), cfg.preprocess.hash(), c.vocab.hash()};
    c.vocab.save(c.vocab_path());
    save_bigrams(c.bigrams, join(c.dir, "bigrams.txt"));
    write_count_cache_meta(join(c.dir, "counts.meta"), c.meta);

    std::uint64_t dropped = pre.n_input - n;
    auto summary = open_out(join(c.dir, "summary.txt"));
    summary << "N=" << n << "\nV=" << c.vocab.size() << "\ndropped=" << dropped << "\nbigrams=" << c.bigrams.size()
            << '\n';
    g_log.info("preprocessed " + std::to_string(pre.n_input) + " documents: N=" + std::to_string(n) +
               " V=" + std::to_string(c.vocab.size()) + " dropped=" + std::to_string(dropped));
    return c;
}

int cmd_preprocess(const Settings& s, const PreprocessArgs& a) {
    run_preprocessing(a.input, a.out, s.cfg);
    write_run_record(a.out, "preprocess", s.cfg, {a.input});
    std::ifstream summary(join(a.out, "summary.txt"));
    std::cout << summary.rdbuf();
    return kExitOk;
}

// ---------------------------------------------------------------------------
// fit

struct FitArgs {
    std::string data;
    std::string input;
    std::string out;
    std::string mode;
    std::string resume;
    std::string compare;
};

// Topic-word rows from a model directory, a model file or a K x V csv.
MatrixXd load_topics_for_comparison(const std::string& path) {
    if (fs::is_directory(path)) return load_model(join(path, "model.bin")).mu;
    require_file(path, "comparison file");
    if (fs::path(path).extension() != ".csv") return load_model(path).mu;
    std::ifstream is(path);
    std::vector<std::vector<double>> rows;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw UsageError("empty comparison file: " + path);
    MatrixXd m(static_cast<Index>(rows.size()), static_cast<Index>(rows[0].size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != rows[0].size()) throw UsageError("ragged comparison file: " + path);
        for (std::size_t j = 0; j < rows[i].size(); ++j) m(static_cast<Index>(i), static_cast<Index>(j)) = rows[i][j];
    }
    return m;
}

void write_matrix_csv(const std::string& path, const MatrixXd& m) {
    auto os = open_out(path);
    os.precision(17);
    for (Index i = 0; i < m.rows(); ++i) {
        for (Index j = 0; j < m.cols(); ++j) os << (j ? "," : "") << m(i, j);
        os << '\n';
    }
}

void dump_failure(const fs::path& out, const Error& e, const std::string& stage, const RunConfig& cfg) {
    std::string path = join(out, "failure_state.txt");
    std::ofstream os(path);
    os << "stage=" << stage << "\nerror=" << e.what() << "\nfit=" << cfg.fit.canonical() << '\n';
    std::cerr << "tlda: numeric failure during " << stage << ": " << e.what() << "\n"
              << "tlda: state written to " << path << '\n';
}

int cmd_fit(Settings& s, const FitArgs& a) {
    if (!a.mode.empty()) s.cfg.run.mode = a.mode;
    s.cfg.validate();
    if (a.data.empty() == a.input.empty()) throw UsageError("fit needs exactly one of --data or --input");
    const fs::path out = a.out;
    prepare_out_dir(a.out);
    g_log.mirror_to(join(out, "progress.log"));

    CorpusDir corpus = a.data.empty() ? run_preprocessing(a.input, a.out, s.cfg) : CorpusDir::open(a.data);
    const FitConfig& fc = s.cfg.fit;
    CountCacheSource source(corpus.counts(), static_cast<Index>(corpus.vocab.size()), fc.n_b);

    FitOptions opts;
    opts.on_epoch = [](const EpochReport& r) { g_log.info(format_epoch(r)); };
    if (!a.resume.empty()) {
        require_file(a.resume, "checkpoint");
        FactorCheckpoint ck = load_factor_checkpoint(a.resume);
        if (ck.phi.phi.rows() != fc.d || ck.phi.phi.cols() != fc.k)
            throw UsageError("checkpoint shape does not match fit.d x fit.k: " + a.resume);
        if (ck.config_hash != fc.hash()) g_log.warn("checkpoint was written under a different fit configuration");
        g_log.info("resuming from " + a.resume + " at epoch " + std::to_string(ck.epoch));
        opts.initial = ck.phi;
    }

    g_log.info("fit mode=" + s.cfg.run.mode + " N=" + std::to_string(corpus.meta.n_docs) +
               " V=" + std::to_string(corpus.vocab.size()) + " " + fc.canonical());
    std::string stage = "fit";
    try {
        FitResult fit;
        if (s.cfg.run.mode == "online") {
            OnlineOptions online;
            online.warmup_fraction = s.cfg.warmup_fraction;
            online.total_batches = batch_count(corpus.meta.n_docs, fc.n_b);
            online.fit = opts;
            fit = fit_online(source, fc, online);
        } else {
            fit = fit_batched(source, fc, opts);
        }
        if (!fit.converged)
            g_log.warn("not converged after " + std::to_string(fit.epochs) + " epochs (tol " + num(fc.tol) +
                       "); results written anyway");
        save_factor_checkpoint(join(out, "factors.ckpt"), {fit.phi, fit.epochs, fit.last_loss, fc.hash()});

        stage = "recovery";
        TopicModel model = recover_model(fit, fc, corpus.vocab.hash());
        for (Index i = 0; i < model.k(); ++i)
            if (model.clipped_mass(i) > kClippedMassWarning)
                g_log.warn("topic " + std::to_string(i) + " lost " + num(model.clipped_mass(i)) +
                           " of its mass to clipping");
        save_model(join(out, "model.bin"), model);
        write_topics_txt(join(out, "topics.txt"), model, corpus.vocab, s.cfg.run.top_words);
        if (fs::absolute(corpus.dir) != fs::absolute(out)) {
            corpus.vocab.save(join(out, "vocab.txt"));
            save_bigrams(corpus.bigrams, join(out, "bigrams.txt"));
        }
        g_log.info("fit done: epochs=" + std::to_string(fit.epochs) + " loss=" + num(fit.last_loss));
        if (!a.compare.empty()) {
            MatrixXd other = load_topics_for_comparison(a.compare);
            if (other.rows() != model.k() || other.cols() != model.v())
                throw UsageError("comparison topics have a different shape: " + a.compare);
            g_log.info("matched topic correlation vs " + a.compare + ": " +
                       num(match_and_correlate(model.mu, other).mean_corr));
        }
    } catch (const Error& e) {
        if (!e.is_numeric()) throw;
        dump_failure(out, e, stage, s.cfg);
        return kExitNumeric;
    }
    write_run_record(a.out, "fit", s.cfg, {corpus.vocab_path(), corpus.counts()});
    return kExitOk;
}

// ---------------------------------------------------------------------------
// infer

struct InferArgs {
    std::string model;
    std::string input;
    std::string data;
    std::string vocab;
    std::string out;
};

struct ModelDir {
    TopicModel model;
    Vocabulary vocab;
    BigramSet bigrams;
    std::string model_path;

    static ModelDir open(const std::string& dir) {
        ModelDir m;
        if (!fs::is_directory(dir)) throw UsageError("model directory not found: " + dir);
        m.model_path = join(dir, "model.bin");
        require_file(m.model_path, "model file");
        require_file(join(dir, "vocab.txt"), "vocabulary file");
        m.model = load_model(m.model_path);
        m.vocab = Vocabulary::load(join(dir, "vocab.txt"));
        m.bigrams = load_bigrams(join(dir, "bigrams.txt"));
        return m;
    }
};

void check_vocab(const TopicModel& model, std::uint64_t vocab_hash) {
    if (model.vocab_hash != vocab_hash) throw UsageError("model/vocabulary mismatch");
}

// Count rows for inference or coherence from either raw text or a count cache.
struct Documents {
    std::vector<CountVector> rows;
    std::vector<std::int64_t> ids;
    std::vector<std::string> inputs;
};

Documents load_documents(const ModelDir& m, const std::string& input, const std::string& data,
                         const std::string& vocab_override, const RunConfig& cfg) {
    if (input.empty() == data.empty()) throw UsageError("need exactly one of --input or --data");
    Documents docs;
    std::unique_ptr<BatchSource> source;
    std::unique_ptr<TextSource> text;
    Vocabulary vocab;
    std::optional<CorpusDir> corpus;
    if (!data.empty()) {
        corpus = CorpusDir::open(data);
        check_vocab(m.model, corpus->vocab.hash());
        source = std::make_unique<CountCacheSource>(corpus->counts(), static_cast<Index>(corpus->vocab.size()),
                                                    cfg.fit.n_b);
        docs.inputs = {corpus->counts()};
    } else {
        if (!vocab_override.empty()) require_file(vocab_override, "vocabulary file");
        vocab = vocab_override.empty() ? m.vocab : Vocabulary::load(vocab_override);
        check_vocab(m.model, vocab.hash());
        text = open_text(input, cfg);
        source = std::make_unique<TextBatchSource>(*text, vocab, m.bigrams, cfg.fit.n_b, 1);
        docs.inputs = {input};
    }
    if (static_cast<std::size_t>(source->vocab_size()) != static_cast<std::size_t>(m.model.v()))
        throw UsageError("model/vocabulary mismatch");
    source->reset();
    while (auto batch = source->next())
        for (Index r = 0; r < batch->size(); ++r) {
            docs.rows.push_back(row_counts(*batch, r));
            docs.ids.push_back(batch->doc_ids[static_cast<std::size_t>(r)]);
        }
    if (auto* t = dynamic_cast<TextBatchSource*>(source.get()); t && t->dropped() > 0)
        g_log.info(std::to_string(t->dropped()) + " documents had no in-vocabulary tokens and were skipped");
    return docs;
}

int cmd_infer(const Settings& s, const InferArgs& a) {
    ModelDir m = ModelDir::open(a.model);
    Documents docs = load_documents(m, a.input, a.data, a.vocab, s.cfg);
    prepare_out_dir(a.out);
    MemoryBatchSource source(docs.rows, m.model.v(), s.cfg.fit.n_b, docs.ids);
    InferenceTable table = infer_corpus(source, m.model, default_prior(m.model), s.cfg.infer, s.cfg.run.workers);
    std::size_t failed = 0, unconverged = 0;
    for (std::size_t i = 0; i < table.errors.size(); ++i) {
        if (!table.errors[i].empty()) {
            ++failed;
            g_log.warn("document " + std::to_string(table.doc_ids[i]) + ": " + table.errors[i]);
        } else if (!table.converged[i]) {
            ++unconverged;
        }
    }
    write_theta_table(join(a.out, "theta.csv"), table);
    std::vector<std::string> inputs{m.model_path};
    inputs.insert(inputs.end(), docs.inputs.begin(), docs.inputs.end());
    write_run_record(a.out, "infer", s.cfg, inputs);
    g_log.info("inferred " + std::to_string(table.doc_ids.size()) + " documents (" + std::to_string(unconverged) +
               " not converged, " + std::to_string(failed) + " failed)");
    return kExitOk;
}

// ---------------------------------------------------------------------------
// eval

struct EvalArgs {
    std::string grid = "default";
    std::string out;
    std::string mode = "online";
    std::string model;
    std::string input;
    std::string data;
};

int cmd_eval_synthetic(const Settings& s, const EvalArgs& a) {
    RecoveryGrid grid = RecoveryGrid::table_defaults();
    grid.vocab_sizes = s.cfg.eval.vocab_sizes;
    grid.seeds = s.cfg.eval.seeds;
    grid.fit.theta = s.cfg.eval.synthetic_theta;
    grid.workers = s.cfg.run.workers;
    if (a.grid == "quick") {
        grid.data.n = 2000;
        grid.seeds = std::min<std::size_t>(grid.seeds, 2);
        grid.vocab_sizes = {50, 100, 150};
    } else if (a.grid != "default") {
        throw UsageError("unknown grid: " + a.grid + " (expected default or quick)");
    }
    prepare_out_dir(a.out);
    g_log.info("recovery grid: " + std::to_string(grid.vocab_sizes.size()) + " vocabulary sizes x " +
               std::to_string(grid.seeds) + " seeds, N=" + std::to_string(grid.data.n));
    RecoveryBenchmark bench = run_recovery_benchmark(grid);
    for (const auto& c : bench.cells)
        if (!c.error.empty()) g_log.warn("V=" + std::to_string(c.v) + " seed " + std::to_string(c.seed) + ": " + c.error);
    {
        auto os = open_out(join(a.out, "recovery.csv"));
        write_recovery_table(os, bench);
    }
    write_recovery_table(std::cout, bench);
    write_run_record(a.out, "eval synthetic", s.cfg, {});
    return kExitOk;
}

// Log-log scatter of fit time against corpus size.
void write_scaling_svg(const std::string& path, const ScalingReport& r) {
    const double w = 480, h = 320, pad = 50;
    double x0 = 1e300, x1 = -1e300, y0 = 1e300, y1 = -1e300;
    for (const auto& p : r.by_docs) {
        x0 = std::min(x0, std::log10(static_cast<double>(p.n_docs)));
        x1 = std::max(x1, std::log10(static_cast<double>(p.n_docs)));
        y0 = std::min(y0, std::log10(p.seconds));
        y1 = std::max(y1, std::log10(p.seconds));
    }
    auto os = open_out(path);
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\">\n"
       << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
       << "<line x1=\"" << pad << "\" y1=\"" << h - pad << "\" x2=\"" << w - pad << "\" y2=\"" << h - pad
       << "\" stroke=\"black\"/>\n<line x1=\"" << pad << "\" y1=\"" << pad << "\" x2=\"" << pad << "\" y2=\""
       << h - pad << "\" stroke=\"black\"/>\n"
       << "<text x=\"" << w / 2 << "\" y=\"" << h - 15 << "\" text-anchor=\"middle\">log10 documents</text>\n"
       << "<text x=\"15\" y=\"" << h / 2 << "\" transform=\"rotate(-90 15 " << h / 2
       << ")\" text-anchor=\"middle\">log10 seconds</text>\n"
       << "<text x=\"" << w / 2 << "\" y=\"25\" text-anchor=\"middle\">slope " << r.loglog_slope << "</text>\n";
    auto sx = [&](double v) { return pad + (x1 > x0 ? (v - x0) / (x1 - x0) : 0.5) * (w - 2 * pad); };
    auto sy = [&](double v) { return h - pad - (y1 > y0 ? (v - y0) / (y1 - y0) : 0.5) * (h - 2 * pad); };
    for (const auto& p : r.by_docs)
        os << "<circle cx=\"" << sx(std::log10(static_cast<double>(p.n_docs))) << "\" cy=\""
           << sy(std::log10(p.seconds)) << "\" r=\"4\" fill=\"steelblue\"/>\n";
    os << "</svg>\n";
}

int cmd_eval_scaling(const Settings& s, const EvalArgs& a) {
    if (a.mode != "online" && a.mode != "batched") throw UsageError("--mode must be online or batched");
    ScalingPlan plan;
    plan.base_docs = s.cfg.eval.scaling_base_docs;
    plan.multiples = s.cfg.eval.scaling_multiples;
    plan.topic_counts = s.cfg.eval.scaling_topics;
    if (plan.topic_counts.empty()) throw UsageError("eval.scaling_topics needs at least one topic count");
    plan.doc_k = plan.topic_counts.front();
    plan.topic_docs = s.cfg.eval.scaling_base_docs;
    plan.data.v = s.cfg.eval.scaling_vocab;
    plan.fit.n_b = s.cfg.eval.scaling_batch;
    plan.repeats = s.cfg.eval.scaling_repeats;
    plan.mode = a.mode == "online" ? FitMode::Online : FitMode::Batched;
    if (plan.multiples.size() < 2) throw UsageError("eval.scaling_multiples needs at least two sizes");
    prepare_out_dir(a.out);
    g_log.info("scaling study from " + std::to_string(plan.base_docs) + " base documents, mode " + a.mode);
    ScalingReport report = run_scaling_benchmark(plan);
    {
        auto os = open_out(join(a.out, "scaling.csv"));
        write_scaling_table(os, report);
    }
    write_scaling_svg(join(a.out, "scaling.svg"), report);
    write_scaling_table(std::cout, report);
    write_run_record(a.out, "eval scaling", s.cfg, {});
    return kExitOk;
}

int cmd_eval_coherence(const Settings& s, const EvalArgs& a) {
    if (a.model.empty()) throw UsageError("eval coherence needs --model");
    ModelDir m = ModelDir::open(a.model);
    Documents docs = load_documents(m, a.input, a.data, "", s.cfg);
    CooccurrenceIndex index(docs.rows, m.vocab);
    auto topics = top_words(m.model, m.vocab, s.cfg.run.top_words);
    prepare_out_dir(a.out);
    std::ostringstream table;
    table.precision(10);
    table << "topic,umass,npmi\n";
    double mean_u = 0, mean_n = 0;
    for (std::size_t i = 0; i < topics.size(); ++i) {
        double u = umass_coherence({topics[i]}, index), n = npmi_coherence({topics[i]}, index);
        mean_u += u / static_cast<double>(topics.size());
        mean_n += n / static_cast<double>(topics.size());
        table << i << ',' << u << ',' << n << '\n';
    }
    table << "mean," << mean_u << ',' << mean_n << '\n';
    open_out(join(a.out, "coherence.csv")) << table.str();
    std::cout << table.str();
    std::vector<std::string> inputs{m.model_path};
    inputs.insert(inputs.end(), docs.inputs.begin(), docs.inputs.end());
    write_run_record(a.out, "eval coherence", s.cfg, inputs);
    return kExitOk;
}

// ---------------------------------------------------------------------------
// generate

int cmd_generate(const Settings& s, const std::string& out) {
    prepare_out_dir(out);
    SyntheticTruth truth = generate_synthetic(s.cfg.synthetic);
    std::vector<std::string> tokens;
    const int width = static_cast<int>(std::to_string(s.cfg.synthetic.v - 1).size());
    for (Index v = 0; v < s.cfg.synthetic.v; ++v) {
        std::string id = std::to_string(v);
        tokens.push_back("w" + std::string(static_cast<std::size_t>(width) - id.size(), '0') + id);
    }
    Vocabulary vocab(tokens, {}, truth.docs.size());
    CorpusDir c;
    c.dir = out;
    MemoryBatchSource source(truth.docs, s.cfg.synthetic.v, s.cfg.fit.n_b);
    std::uint64_t n = write_count_cache(c.counts(), source);
    vocab.save(c.vocab_path());
    write_count_cache_meta(join(c.dir, "counts.meta"), {n, vocab.size(), 0, vocab.hash()});
    write_matrix_csv(join(c.dir, "mu_true.csv"), truth.mu_true);
    write_matrix_csv(join(c.dir, "theta_true.csv"), truth.theta_true);
    write_run_record(out, "generate", s.cfg, {});
    g_log.info("generated N=" + std::to_string(n) + " documents, V=" + std::to_string(vocab.size()) +
               ", K=" + std::to_string(s.cfg.synthetic.k));
    return kExitOk;
}

std::string version_text() {
    std::ostringstream os;
    os << "tlda " << TLDA_VERSION << "\nconfig schema " << kConfigSchemaVersion << "\nbuild " << TLDA_BUILD_TYPE
       << ", " <<
#if defined(__clang__)
        "clang " << __clang_version__
#elif defined(__GNUC__)
        "g++ " << __VERSION__
#else
        "unknown compiler"
#endif
       << ", C++ " << __cplusplus << ", Eigen " << EIGEN_WORLD_VERSION << '.' << EIGEN_MAJOR_VERSION << '.'
       << EIGEN_MINOR_VERSION << '\n';
    return os.str();
}

int run(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    Settings s;
    s.overrides = extract_overrides(args);

    CLI::App app{"Streaming spectral LDA topic modeling."};
    app.name("tlda");
    app.require_subcommand(1);
    app.fallthrough();
    app.option_defaults()->always_capture_default();
    app.set_version_flag("--version", version_text());
    app.add_option("--config", s.config_path, "INI configuration file");
    unsigned workers = 0;
    std::string log_level;
    app.add_option("--workers", workers, "worker threads (run.workers)");
    app.add_option("--log-level", log_level, "quiet, info or debug (run.log_level)");
    app.footer("Any config key can be set with --section.key=value, e.g. --fit.k=10.");

    PreprocessArgs pre;
    auto* c_pre = app.add_subcommand("preprocess", "tokenize a corpus and write vocabulary and count cache");
    c_pre->add_option("--input", pre.input, "raw corpus")->required();
    c_pre->add_option("--out", pre.out, "output directory")->required();

    FitArgs fit;
    auto* c_fit = app.add_subcommand("fit", "learn topics from a count cache or raw corpus");
    c_fit->add_option("--data", fit.data, "preprocessed corpus directory");
    c_fit->add_option("--input", fit.input, "raw corpus, preprocessed into --out first");
    c_fit->add_option("--out", fit.out, "model directory")->required();
    c_fit->add_option("--mode", fit.mode, "batched or online (run.mode)");
    c_fit->add_option("--resume", fit.resume, "factor checkpoint to start from");
    c_fit->add_option("--compare", fit.compare, "model or K x V csv to correlate the result with");

    InferArgs inf;
    auto* c_inf = app.add_subcommand("infer", "document-topic proportions for a corpus");
    c_inf->add_option("--model", inf.model, "model directory")->required();
    c_inf->add_option("--input", inf.input, "raw corpus");
    c_inf->add_option("--data", inf.data, "preprocessed corpus directory");
    c_inf->add_option("--vocab", inf.vocab, "vocabulary for --input (default: the model's)");
    c_inf->add_option("--out", inf.out, "output directory")->required();

    EvalArgs ev;
    auto* c_eval = app.add_subcommand("eval", "benchmarks and topic quality");
    c_eval->require_subcommand(1);
    c_eval->fallthrough();
    auto* c_syn = c_eval->add_subcommand("synthetic", "topic recovery grid on synthetic corpora");
    c_syn->add_option("--grid", ev.grid, "default or quick");
    c_syn->add_option("--out", ev.out, "report directory")->required();
    auto* c_sca = c_eval->add_subcommand("scaling", "fit time against documents and topics");
    c_sca->add_option("--out", ev.out, "report directory")->required();
    c_sca->add_option("--mode", ev.mode, "online or batched");
    auto* c_coh = c_eval->add_subcommand("coherence", "UMass and NPMI coherence of a model's topics");
    c_coh->add_option("--model", ev.model, "model directory")->required();
    c_coh->add_option("--input", ev.input, "reference corpus, raw");
    c_coh->add_option("--data", ev.data, "reference corpus, preprocessed");
    c_coh->add_option("--out", ev.out, "report directory")->required();

    std::string gen_out;
    auto* c_gen = app.add_subcommand("generate", "sample a synthetic LDA corpus as a count cache");
    c_gen->add_option("--out", gen_out, "output directory")->required();

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? kExitOk : kExitInput;
    }

    resolve(s);
    if (workers) s.cfg.run.workers = workers;
    if (!log_level.empty()) s.cfg.run.log_level = log_level;
    finish_resolve(s);

    if (c_pre->parsed()) return cmd_preprocess(s, pre);
    if (c_fit->parsed()) return cmd_fit(s, fit);
    if (c_inf->parsed()) return cmd_infer(s, inf);
    if (c_syn->parsed()) return cmd_eval_synthetic(s, ev);
    if (c_sca->parsed()) return cmd_eval_scaling(s, ev);
    if (c_coh->parsed()) return cmd_eval_coherence(s, ev);
    if (c_gen->parsed()) return cmd_generate(s, gen_out);
    return kExitInput;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const UsageError& e) {
        std::cerr << "tlda: " << e.what() << '\n';
        return kExitInput;
    } catch (const Error& e) {
        std::cerr << "tlda: " << e.what() << '\n';
        return e.is_numeric() ? kExitNumeric : kExitInput;
    } catch (const std::exception& e) {
        std::cerr << "tlda: " << e.what() << '\n';
        return kExitInput;
    }
}
