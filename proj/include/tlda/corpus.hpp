#ifndef TLDA_CORPUS_HPP
#define TLDA_CORPUS_HPP

// Text to sparse count batches: tokenization and stemming, bigram
// collocations, document-frequency trimmed vocabulary, vectorization, and
// the batch sources consumed by the moment and decomposition stages.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include <Eigen/Sparse>

#include "tlda/error.hpp"
#include "tlda/io.hpp"
#include "tlda/porter_stemmer.hpp"

namespace tlda {

struct PreprocessConfig {
    double lower_frac = 0.00002;
    double upper_frac = 0.5;
    std::size_t min_doc_len = 3;
    std::size_t bigram_min_count = 20;
    double bigram_score_threshold = 10.0;
    bool bigrams = true;

    void validate() const {
        require(lower_frac > 0.0 && lower_frac < 1.0, ErrorCode::InvalidArgument,
                "lower_frac must lie in (0,1)");
        require(upper_frac > 0.0 && upper_frac <= 1.0, ErrorCode::InvalidArgument,
                "upper_frac must lie in (0,1]");
        require(lower_frac < upper_frac, ErrorCode::InvalidArgument,
                "lower_frac must be below upper_frac");
        require(min_doc_len >= 1, ErrorCode::InvalidArgument, "min_doc_len must be >= 1");
    }

    std::string canonical() const {
        std::ostringstream os;
        os.precision(17);
        os << "lower_frac=" << lower_frac << ";upper_frac=" << upper_frac
           << ";min_doc_len=" << min_doc_len << ";bigram_min_count=" << bigram_min_count
           << ";bigram_score_threshold=" << bigram_score_threshold << ";bigrams=" << bigrams;
        return os.str();
    }

    std::uint64_t hash() const { return fnv1a(canonical()); }
};

// ---------------------------------------------------------------------------
// Tokenization

namespace detail {

inline bool is_space(unsigned char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

inline bool starts_with(std::string_view s, std::string_view prefix) {
    return s.substr(0, prefix.size()) == prefix;
}

inline bool is_url(std::string_view chunk) {
    return starts_with(chunk, "http://") || starts_with(chunk, "https://") ||
           starts_with(chunk, "www.") || chunk.find("://") != std::string_view::npos;
}

inline bool all_digits(std::string_view s) {
    return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isdigit(c); });
}

} // namespace detail

/// Lowercases, splits on whitespace and punctuation, drops URLs, @mentions
/// and purely numeric tokens, keeps hashtag bodies, and Porter-stems the rest.
/// Bytes outside ASCII act as separators, so emoji and other symbols vanish.
inline std::vector<std::string> tokenize_and_stem(std::string_view text) {
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && detail::is_space(static_cast<unsigned char>(text[i]))) ++i;
        std::size_t start = i;
        while (i < text.size() && !detail::is_space(static_cast<unsigned char>(text[i]))) ++i;
        if (start == i) break;

        std::string chunk;
        chunk.reserve(i - start);
        for (std::size_t p = start; p < i; ++p) {
            unsigned char c = static_cast<unsigned char>(text[p]);
            // U+2019 right single quotation mark, used as an apostrophe.
            if (c == 0xE2 && p + 2 < i && static_cast<unsigned char>(text[p + 1]) == 0x80 &&
                static_cast<unsigned char>(text[p + 2]) == 0x99) {
                p += 2;
                continue;
            }
            if (c == '\'') continue;
            chunk.push_back(static_cast<char>(c < 0x80 ? std::tolower(c) : c));
        }
        if (chunk.empty() || chunk[0] == '@' || detail::is_url(chunk)) continue;

        std::string token;
        auto flush = [&]() {
            if (!token.empty() && !detail::all_digits(token)) out.push_back(porter_stem(token));
            token.clear();
        };
        for (unsigned char c : chunk) {
            if (c < 0x80 && std::isalnum(c)) {
                token.push_back(static_cast<char>(c));
            } else {
                flush();
            }
        }
        flush();
    }
    return out;
}

// ---------------------------------------------------------------------------
// Bigrams

using BigramSet = std::set<std::string>;

inline std::string join_bigram(std::string_view a, std::string_view b) {
    std::string s;
    s.reserve(a.size() + b.size() + 1);
    s.append(a);
    s.push_back('_');
    s.append(b);
    return s;
}

/// Unigram and adjacent-pair counts; mergeable across shards.
class BigramCounter {
public:
    void add(const std::vector<std::string>& tokens) {
        for (std::size_t i = 0; i < tokens.size(); ++i) {
            ++unigrams_[tokens[i]];
            ++total_;
            if (i + 1 < tokens.size()) ++pairs_[{tokens[i], tokens[i + 1]}];
        }
    }

    void merge(const BigramCounter& other) {
        for (const auto& [t, c] : other.unigrams_) unigrams_[t] += c;
        for (const auto& [p, c] : other.pairs_) pairs_[p] += c;
        total_ += other.total_;
    }

    /// Pairs with (count(a,b) - min_count) * total / (count(a) * count(b)) > threshold.
    BigramSet select(const PreprocessConfig& cfg) const {
        BigramSet out;
        const double min_count = static_cast<double>(cfg.bigram_min_count);
        for (const auto& [pair, count] : pairs_) {
            double c = static_cast<double>(count);
            if (c <= min_count) continue;
            double ca = static_cast<double>(unigrams_.at(pair.first));
            double cb = static_cast<double>(unigrams_.at(pair.second));
            double score = (c - min_count) * static_cast<double>(total_) / (ca * cb);
            if (score > cfg.bigram_score_threshold) out.insert(join_bigram(pair.first, pair.second));
        }
        return out;
    }

    std::uint64_t total_tokens() const { return total_; }

private:
    std::map<std::string, std::uint64_t> unigrams_;
    std::map<std::pair<std::string, std::string>, std::uint64_t> pairs_;
    std::uint64_t total_ = 0;
};

template <typename Streams>
BigramSet detect_bigrams(const Streams& token_streams, const PreprocessConfig& cfg) {
    BigramCounter counter;
    for (const auto& tokens : token_streams) counter.add(tokens);
    return counter.select(cfg);
}

/// Greedy left-to-right merge of adjacent pairs that appear in `bigrams`.
inline std::vector<std::string> apply_bigrams(const std::vector<std::string>& tokens,
                                              const BigramSet& bigrams) {
    if (bigrams.empty()) return tokens;
    std::vector<std::string> out;
    out.reserve(tokens.size());
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (i + 1 < tokens.size()) {
            std::string joined = join_bigram(tokens[i], tokens[i + 1]);
            if (bigrams.count(joined)) {
                out.push_back(std::move(joined));
                ++i;
                continue;
            }
        }
        out.push_back(tokens[i]);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Vocabulary

class Vocabulary {
public:
    Vocabulary() = default;

    Vocabulary(std::vector<std::string> tokens, std::vector<std::uint64_t> doc_frequency,
               std::uint64_t n_docs_seen)
        : tokens_(std::move(tokens)), doc_frequency_(std::move(doc_frequency)),
          n_docs_seen_(n_docs_seen) {
        require(doc_frequency_.empty() || doc_frequency_.size() == tokens_.size(),
                ErrorCode::DimensionMismatch, "doc_frequency size must match tokens");
        index_.reserve(tokens_.size());
        for (std::size_t i = 0; i < tokens_.size(); ++i) {
            bool inserted = index_.emplace(tokens_[i], static_cast<std::int32_t>(i)).second;
            require(inserted, ErrorCode::BadFormat, "duplicate vocabulary token: " + tokens_[i]);
        }
    }

    std::size_t size() const { return tokens_.size(); }
    const std::vector<std::string>& tokens() const { return tokens_; }
    const std::string& token(std::size_t i) const { return tokens_.at(i); }
    const std::vector<std::uint64_t>& doc_frequency() const { return doc_frequency_; }
    std::uint64_t n_docs_seen() const { return n_docs_seen_; }

    std::optional<std::int32_t> index_of(std::string_view token) const {
        auto it = index_.find(std::string(token));
        if (it == index_.end()) return std::nullopt;
        return it->second;
    }

    std::uint64_t hash() const {
        Fnv1a h;
        for (const auto& t : tokens_) {
            h.update(t);
            h.update("\n");
        }
        return h.digest();
    }

    /// `V=<count>` header, then one token per line in index order.
    void save(const std::string& path) const {
        auto os = open_out(path);
        os << "V=" << tokens_.size() << "\n";
        for (const auto& t : tokens_) os << t << "\n";
        if (!os) throw Error(ErrorCode::SourceUnreadable, "write failed: " + path);
    }

    static Vocabulary load(const std::string& path) {
        auto is = open_in(path);
        std::string header;
        std::getline(is, header);
        require(detail::starts_with(header, "V="), ErrorCode::BadFormat,
                "vocabulary header must be V=<count>: " + path);
        std::size_t v = std::stoull(header.substr(2));
        std::vector<std::string> tokens;
        tokens.reserve(v);
        std::string line;
        while (tokens.size() < v && std::getline(is, line)) tokens.push_back(line);
        require(tokens.size() == v, ErrorCode::BadFormat, "vocabulary file truncated: " + path);
        return Vocabulary(std::move(tokens), {}, 0);
    }

private:
    std::vector<std::string> tokens_;
    std::vector<std::uint64_t> doc_frequency_;
    std::uint64_t n_docs_seen_ = 0;
    std::unordered_map<std::string, std::int32_t> index_;
};

/// Per-token document frequencies; mergeable across shards.
class DocFrequencyCounter {
public:
    void add(const std::vector<std::string>& tokens) {
        ++n_docs_;
        std::unordered_set<std::string_view> seen;
        for (const auto& t : tokens)
            if (seen.insert(t).second) ++df_[t];
    }

    void merge(const DocFrequencyCounter& other) {
        for (const auto& [t, c] : other.df_) df_[t] += c;
        n_docs_ += other.n_docs_;
    }

    std::uint64_t n_docs() const { return n_docs_; }

    /// Keeps tokens with df in [ceil(lower*N), floor(upper*N)], ordered by
    /// descending df then lexicographically.
    Vocabulary build(const PreprocessConfig& cfg) const {
        cfg.validate();
        const double n = static_cast<double>(n_docs_);
        const double lo = std::ceil(cfg.lower_frac * n);
        const double hi = std::floor(cfg.upper_frac * n);
        std::vector<std::pair<std::string, std::uint64_t>> kept;
        for (const auto& [t, c] : df_) {
            double d = static_cast<double>(c);
            if (d >= lo && d <= hi) kept.emplace_back(t, c);
        }
        if (kept.empty())
            throw Error(ErrorCode::EmptyVocabulary, "no token survives document-frequency trimming");
        std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
            if (a.second != b.second) return a.second > b.second;
            return a.first < b.first;
        });
        std::vector<std::string> tokens;
        std::vector<std::uint64_t> df;
        tokens.reserve(kept.size());
        df.reserve(kept.size());
        for (auto& [t, c] : kept) {
            tokens.push_back(std::move(t));
            df.push_back(c);
        }
        return Vocabulary(std::move(tokens), std::move(df), n_docs_);
    }

private:
    std::map<std::string, std::uint64_t> df_;
    std::uint64_t n_docs_ = 0;
};

template <typename Streams>
Vocabulary build_vocabulary(const Streams& token_streams, const PreprocessConfig& cfg) {
    DocFrequencyCounter counter;
    for (const auto& tokens : token_streams) counter.add(tokens);
    return counter.build(cfg);
}

// ---------------------------------------------------------------------------
// Vectorization and batches

struct TermCount {
    std::int32_t term;
    std::int32_t count;
    friend bool operator==(const TermCount&, const TermCount&) = default;
};

/// Sparse count vector, sorted by term id.
using CountVector = std::vector<TermCount>;

inline std::int64_t total_count(const CountVector& v) {
    std::int64_t s = 0;
    for (const auto& tc : v) s += tc.count;
    return s;
}

/// Counts in-vocabulary tokens; nullopt ("dropped") when fewer than
/// `min_doc_len` tokens survive.
inline std::optional<CountVector> vectorize(const std::vector<std::string>& tokens,
                                            const Vocabulary& vocab, std::size_t min_doc_len = 3) {
    std::map<std::int32_t, std::int32_t> counts;
    std::size_t total = 0;
    for (const auto& t : tokens) {
        if (auto id = vocab.index_of(t)) {
            ++counts[*id];
            ++total;
        }
    }
    if (total < min_doc_len) return std::nullopt;
    CountVector out;
    out.reserve(counts.size());
    for (const auto& [id, c] : counts) out.push_back({id, c});
    return out;
}

using SparseRows = Eigen::SparseMatrix<double, Eigen::RowMajor>;

/// A mini-batch of documents as an n_b x V sparse count matrix.
struct DocumentBatch {
    SparseRows counts;
    std::vector<std::int64_t> doc_ids;

    Eigen::Index size() const { return counts.rows(); }
    Eigen::Index vocab_size() const { return counts.cols(); }
};

inline DocumentBatch make_batch(const std::vector<CountVector>& rows,
                                std::vector<std::int64_t> doc_ids, Eigen::Index vocab_size) {
    require_dims(doc_ids.size() == rows.size(), "doc_ids must match row count");
    std::vector<Eigen::Triplet<double>> triplets;
    for (std::size_t r = 0; r < rows.size(); ++r) {
        for (const auto& tc : rows[r]) {
            require_dims(tc.term >= 0 && tc.term < vocab_size, "term id out of range");
            require(tc.count >= 1, ErrorCode::InvalidArgument, "stored counts must be >= 1");
            triplets.emplace_back(static_cast<int>(r), tc.term, static_cast<double>(tc.count));
        }
    }
    DocumentBatch batch;
    batch.counts.resize(static_cast<Eigen::Index>(rows.size()), vocab_size);
    batch.counts.setFromTriplets(triplets.begin(), triplets.end());
    batch.counts.makeCompressed();
    batch.doc_ids = std::move(doc_ids);
    return batch;
}

inline DocumentBatch make_batch(const std::vector<CountVector>& rows, Eigen::Index vocab_size) {
    std::vector<std::int64_t> ids(rows.size());
    for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<std::int64_t>(i);
    return make_batch(rows, std::move(ids), vocab_size);
}

inline DocumentBatch batch_from_dense(const Eigen::MatrixXd& dense) {
    std::vector<CountVector> rows(static_cast<std::size_t>(dense.rows()));
    for (Eigen::Index r = 0; r < dense.rows(); ++r)
        for (Eigen::Index c = 0; c < dense.cols(); ++c)
            if (dense(r, c) != 0.0)
                rows[static_cast<std::size_t>(r)].push_back(
                    {static_cast<std::int32_t>(c), static_cast<std::int32_t>(std::lround(dense(r, c)))});
    return make_batch(rows, dense.cols());
}

inline CountVector row_counts(const DocumentBatch& batch, Eigen::Index row) {
    CountVector out;
    for (SparseRows::InnerIterator it(batch.counts, row); it; ++it)
        out.push_back({static_cast<std::int32_t>(it.col()), static_cast<std::int32_t>(it.value())});
    return out;
}

/// Re-iterable stream of document batches.
class BatchSource {
public:
    virtual ~BatchSource() = default;
    virtual std::optional<DocumentBatch> next() = 0;
    virtual void reset() = 0;
    virtual Eigen::Index vocab_size() const = 0;
};

/// Batches of exactly `batch_size` rows (the last may be smaller) cut from an
/// in-memory list of count vectors.
class MemoryBatchSource : public BatchSource {
public:
    MemoryBatchSource(std::vector<CountVector> docs, Eigen::Index vocab_size, std::size_t batch_size,
                      std::vector<std::int64_t> doc_ids = {})
        : docs_(std::move(docs)), ids_(std::move(doc_ids)), v_(vocab_size), n_b_(batch_size) {
        require(n_b_ >= 1, ErrorCode::InvalidArgument, "batch size must be >= 1");
        if (ids_.empty()) {
            ids_.resize(docs_.size());
            for (std::size_t i = 0; i < ids_.size(); ++i) ids_[i] = static_cast<std::int64_t>(i);
        }
        require_dims(ids_.size() == docs_.size(), "doc_ids must match documents");
    }

    std::optional<DocumentBatch> next() override {
        if (pos_ >= docs_.size()) return std::nullopt;
        std::size_t end = std::min(docs_.size(), pos_ + n_b_);
        std::vector<CountVector> rows(docs_.begin() + static_cast<std::ptrdiff_t>(pos_),
                                      docs_.begin() + static_cast<std::ptrdiff_t>(end));
        std::vector<std::int64_t> ids(ids_.begin() + static_cast<std::ptrdiff_t>(pos_),
                                      ids_.begin() + static_cast<std::ptrdiff_t>(end));
        pos_ = end;
        return make_batch(rows, std::move(ids), v_);
    }

    void reset() override { pos_ = 0; }
    Eigen::Index vocab_size() const override { return v_; }
    std::size_t n_docs() const { return docs_.size(); }
    const std::vector<CountVector>& docs() const { return docs_; }

private:
    std::vector<CountVector> docs_;
    std::vector<std::int64_t> ids_;
    Eigen::Index v_;
    std::size_t n_b_;
    std::size_t pos_ = 0;
};

/// Replays a fixed list of already-built batches.
class BatchListSource : public BatchSource {
public:
    BatchListSource(std::vector<DocumentBatch> batches, Eigen::Index vocab_size)
        : batches_(std::move(batches)), v_(vocab_size) {}

    std::optional<DocumentBatch> next() override {
        if (pos_ >= batches_.size()) return std::nullopt;
        return batches_[pos_++];
    }
    void reset() override { pos_ = 0; }
    Eigen::Index vocab_size() const override { return v_; }
    const std::vector<DocumentBatch>& batches() const { return batches_; }

private:
    std::vector<DocumentBatch> batches_;
    Eigen::Index v_;
    std::size_t pos_ = 0;
};

// ---------------------------------------------------------------------------
// Raw document sources

class TextSource {
public:
    virtual ~TextSource() = default;
    virtual std::optional<std::string> next() = 0;
    virtual void reset() = 0;
};

class StringListSource : public TextSource {
public:
    explicit StringListSource(std::vector<std::string> docs) : docs_(std::move(docs)) {}
    std::optional<std::string> next() override {
        if (pos_ >= docs_.size()) return std::nullopt;
        return docs_[pos_++];
    }
    void reset() override { pos_ = 0; }

private:
    std::vector<std::string> docs_;
    std::size_t pos_ = 0;
};

/// One document per line.
class LineFileSource : public TextSource {
public:
    explicit LineFileSource(std::string path) : path_(std::move(path)) { reset(); }

    std::optional<std::string> next() override {
        std::string line;
        if (!std::getline(is_, line)) {
            if (is_.bad()) throw Error(ErrorCode::SourceUnreadable, "read failed: " + path_);
            return std::nullopt;
        }
        return line;
    }

    void reset() override {
        is_ = std::ifstream(path_);
        if (!is_) throw Error(ErrorCode::SourceUnreadable, "cannot open: " + path_);
    }

private:
    std::string path_;
    std::ifstream is_;
};

namespace detail {

// Reads one delimited record, honouring double-quoted fields (with "" escapes
// and embedded newlines). Returns false at end of input.
inline bool read_record(std::istream& is, char delim, std::vector<std::string>& fields) {
    fields.clear();
    std::string field;
    bool in_quotes = false;
    bool any = false;
    char c;
    while (is.get(c)) {
        any = true;
        if (in_quotes) {
            if (c == '"') {
                if (is.peek() == '"') {
                    is.get(c);
                    field.push_back('"');
                } else {
                    in_quotes = false;
                }
            } else {
                field.push_back(c);
            }
        } else if (c == '"') {
            in_quotes = true;
        } else if (c == delim) {
            fields.push_back(std::move(field));
            field.clear();
        } else if (c == '\n') {
            fields.push_back(std::move(field));
            return true;
        } else if (c != '\r') {
            field.push_back(c);
        }
    }
    if (!any) return false;
    fields.push_back(std::move(field));
    return true;
}

} // namespace detail

/// Delimiter-separated file with a header row; yields the named text column.
class DelimitedFileSource : public TextSource {
public:
    DelimitedFileSource(std::string path, std::string column, char delim = ',')
        : path_(std::move(path)), column_name_(std::move(column)), delim_(delim) {
        reset();
    }

    std::optional<std::string> next() override {
        std::vector<std::string> fields;
        while (detail::read_record(is_, delim_, fields)) {
            if (fields.size() == 1 && fields[0].empty()) continue;
            if (fields.size() <= column_) return std::string();
            return fields[column_];
        }
        return std::nullopt;
    }

    void reset() override {
        is_ = std::ifstream(path_);
        if (!is_) throw Error(ErrorCode::SourceUnreadable, "cannot open: " + path_);
        std::vector<std::string> header;
        require(detail::read_record(is_, delim_, header), ErrorCode::BadFormat,
                "missing header row: " + path_);
        auto it = std::find(header.begin(), header.end(), column_name_);
        require(it != header.end(), ErrorCode::BadFormat,
                "column '" + column_name_ + "' not found in " + path_);
        column_ = static_cast<std::size_t>(it - header.begin());
    }

private:
    std::string path_;
    std::string column_name_;
    char delim_;
    std::size_t column_ = 0;
    std::ifstream is_;
};

// ---------------------------------------------------------------------------
// Two-pass preprocessing

struct PreprocessResult {
    Vocabulary vocab;
    BigramSet bigrams;
    std::uint64_t n_input = 0;       // documents read
    std::uint64_t n_too_short = 0;   // dropped before vocabulary counting
};

/// Pass 1 over `source`: bigram detection, then document frequencies on the
/// bigram-merged streams. Documents with fewer than min_doc_len raw tokens
/// are not counted.
inline PreprocessResult build_preprocessing(TextSource& source, const PreprocessConfig& cfg) {
    cfg.validate();
    PreprocessResult result;
    std::vector<std::vector<std::string>> streams;
    source.reset();
    while (auto text = source.next()) {
        ++result.n_input;
        auto tokens = tokenize_and_stem(*text);
        if (tokens.size() < cfg.min_doc_len) {
            ++result.n_too_short;
            continue;
        }
        streams.push_back(std::move(tokens));
    }
    if (cfg.bigrams) result.bigrams = detect_bigrams(streams, cfg);
    DocFrequencyCounter df;
    for (const auto& tokens : streams) df.add(apply_bigrams(tokens, result.bigrams));
    result.vocab = df.build(cfg);
    return result;
}

/// Pass 2: vectorizes each document of `source` against a fixed vocabulary
/// and cuts batches of `batch_size` surviving rows. Doc ids are the 0-based
/// positions in the source.
class TextBatchSource : public BatchSource {
public:
    TextBatchSource(TextSource& source, const Vocabulary& vocab, BigramSet bigrams,
                    std::size_t batch_size, std::size_t min_doc_len = 3)
        : source_(source), vocab_(vocab), bigrams_(std::move(bigrams)), n_b_(batch_size),
          min_doc_len_(min_doc_len) {
        require(n_b_ >= 1, ErrorCode::InvalidArgument, "batch size must be >= 1");
        reset();
    }

    std::optional<DocumentBatch> next() override {
        std::vector<CountVector> rows;
        std::vector<std::int64_t> ids;
        while (rows.size() < n_b_) {
            auto text = source_.next();
            if (!text) break;
            std::int64_t id = position_++;
            auto counts = vectorize(apply_bigrams(tokenize_and_stem(*text), bigrams_), vocab_,
                                    min_doc_len_);
            if (!counts) {
                ++dropped_;
                continue;
            }
            rows.push_back(std::move(*counts));
            ids.push_back(id);
        }
        if (rows.empty()) return std::nullopt;
        return make_batch(rows, std::move(ids), static_cast<Eigen::Index>(vocab_.size()));
    }

    void reset() override {
        source_.reset();
        position_ = 0;
        dropped_ = 0;
    }

    Eigen::Index vocab_size() const override { return static_cast<Eigen::Index>(vocab_.size()); }
    std::uint64_t dropped() const { return dropped_; }

private:
    TextSource& source_;
    const Vocabulary& vocab_;
    BigramSet bigrams_;
    std::size_t n_b_;
    std::size_t min_doc_len_;
    std::int64_t position_ = 0;
    std::uint64_t dropped_ = 0;
};

inline TextBatchSource stream_batches(TextSource& source, const Vocabulary& vocab, std::size_t n_b,
                                      BigramSet bigrams = {}, std::size_t min_doc_len = 3) {
    return TextBatchSource(source, vocab, std::move(bigrams), n_b, min_doc_len);
}

inline void save_bigrams(const BigramSet& bigrams, const std::string& path) {
    auto os = open_out(path);
    for (const auto& b : bigrams) os << b << "\n";
}

inline BigramSet load_bigrams(const std::string& path) {
    BigramSet out;
    if (!std::filesystem::exists(path)) return out;
    auto is = open_in(path);
    std::string line;
    while (std::getline(is, line))
        if (!line.empty()) out.insert(line);
    return out;
}

// ---------------------------------------------------------------------------
// Count-matrix cache
//
//   counts.tsv   doc_id<TAB>token_id<TAB>count, rows grouped by document in
//                source order, token ids ascending within a document
//   counts.meta  N=<documents>  V=<vocabulary size>  config_hash=<hex>
//                vocab_hash=<hex>, one key=value per line

struct CountCacheMeta {
    std::uint64_t n_docs = 0;
    std::uint64_t vocab_size = 0;
    std::uint64_t config_hash = 0;
    std::uint64_t vocab_hash = 0;
};

inline void write_count_cache_meta(const std::string& path, const CountCacheMeta& meta) {
    auto os = open_out(path);
    os << "N=" << meta.n_docs << "\nV=" << meta.vocab_size << "\nconfig_hash=" << hex64(meta.config_hash)
       << "\nvocab_hash=" << hex64(meta.vocab_hash) << "\n";
}

inline CountCacheMeta read_count_cache_meta(const std::string& path) {
    auto is = open_in(path);
    CountCacheMeta meta;
    std::string line;
    bool have_n = false, have_v = false;
    while (std::getline(is, line)) {
        auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        std::string key = line.substr(0, eq), value = line.substr(eq + 1);
        if (key == "N") { meta.n_docs = std::stoull(value); have_n = true; }
        else if (key == "V") { meta.vocab_size = std::stoull(value); have_v = true; }
        else if (key == "config_hash") meta.config_hash = parse_hex64(value);
        else if (key == "vocab_hash") meta.vocab_hash = parse_hex64(value);
    }
    require(have_n && have_v, ErrorCode::BadFormat, "count cache header lacks N or V: " + path);
    return meta;
}

/// Drains `source` into the triplet file; returns the number of documents.
inline std::uint64_t write_count_cache(const std::string& tsv_path, BatchSource& source) {
    auto os = open_out(tsv_path);
    std::uint64_t n = 0;
    source.reset();
    while (auto batch = source.next()) {
        for (Eigen::Index r = 0; r < batch->size(); ++r) {
            std::int64_t id = batch->doc_ids[static_cast<std::size_t>(r)];
            for (SparseRows::InnerIterator it(batch->counts, r); it; ++it)
                os << id << '\t' << it.col() << '\t' << static_cast<std::int64_t>(it.value()) << '\n';
            ++n;
        }
    }
    if (!os) throw Error(ErrorCode::SourceUnreadable, "write failed: " + tsv_path);
    return n;
}

/// Streams batches back out of a triplet file.
class CountCacheSource : public BatchSource {
public:
    CountCacheSource(std::string tsv_path, Eigen::Index vocab_size, std::size_t batch_size)
        : path_(std::move(tsv_path)), v_(vocab_size), n_b_(batch_size) {
        require(n_b_ >= 1, ErrorCode::InvalidArgument, "batch size must be >= 1");
        reset();
    }

    std::optional<DocumentBatch> next() override {
        std::vector<CountVector> rows;
        std::vector<std::int64_t> ids;
        while (true) {
            if (!pending_ && !read_triplet()) break;
            if (ids.empty() || ids.back() != pending_doc_) {
                if (rows.size() == n_b_) break;
                ids.push_back(pending_doc_);
                rows.emplace_back();
            }
            rows.back().push_back(pending_tc_);
            pending_ = false;
        }
        if (rows.empty()) return std::nullopt;
        for (auto& r : rows)
            std::sort(r.begin(), r.end(), [](const TermCount& a, const TermCount& b) { return a.term < b.term; });
        return make_batch(rows, std::move(ids), v_);
    }

    void reset() override {
        is_ = std::ifstream(path_);
        if (!is_) throw Error(ErrorCode::SourceUnreadable, "cannot open: " + path_);
        pending_ = false;
    }

    Eigen::Index vocab_size() const override { return v_; }

private:
    bool read_triplet() {
        std::int64_t doc, term, count;
        if (!(is_ >> doc >> term >> count)) {
            if (!is_.eof()) throw Error(ErrorCode::BadFormat, "malformed count cache: " + path_);
            return false;
        }
        pending_doc_ = doc;
        pending_tc_ = {static_cast<std::int32_t>(term), static_cast<std::int32_t>(count)};
        pending_ = true;
        return true;
    }

    std::string path_;
    Eigen::Index v_;
    std::size_t n_b_;
    std::ifstream is_;
    bool pending_ = false;
    std::int64_t pending_doc_ = 0;
    TermCount pending_tc_{0, 0};
};

} // namespace tlda

#endif
