#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "district/corpus.hpp"
#include "district/embedding.hpp"
#include "district/example_bank.hpp"

namespace district {

enum class QueryMode { whole_context, single_turn };
enum class RetrieverKind { dense, bm25, random };

const char* to_string(QueryMode mode) noexcept;
const char* to_string(RetrieverKind kind) noexcept;
/// Accepts "whole"/"whole_context" and "single"/"single_turn".
QueryMode parse_query_mode(std::string_view s);
RetrieverKind parse_retriever_kind(std::string_view s);

inline constexpr std::size_t kDefaultK = 3;

/// "[system] <sys> [user] <user>" for each turn in [first, last], space-joined.
/// Empty system utterances render as "none".
std::string render_turns(const Dialogue& dialogue, std::size_t first, std::size_t last);

struct RetrievalQuery {
    std::string context_text;
    SlotId slot;
    QueryMode mode = QueryMode::whole_context;
    std::set<std::string> exclude_domains;
    /// (dialogue id, turn index) pairs whose examples are ineligible.
    std::set<std::pair<std::string, std::size_t>> exclude_sources;

    /// context_text + " [slot] " + slot: the string that gets embedded or scored.
    std::string text() const;
};

/// Throws a precondition error when turn_index is out of range.
RetrievalQuery build_query(const Dialogue& dialogue, std::size_t turn_index, const SlotId& slot,
                           QueryMode mode);

struct RetrievedItem {
    std::string example_id;
    std::size_t bank_index = 0;
    double score = 0.0;
};

struct RetrievedSet {
    std::vector<RetrievedItem> items;
    std::size_t k = 0;
};

/// Unit vectors for every bank example, row-major float32.
///
/// On disk an index is two files:
///   <name>.bin       magic "DSTIDX01" (8 bytes), then little-endian
///                    u32 dim, u64 count, u32 provider name length,
///                    provider name bytes (UTF-8), then count * dim float32
///                    values row-major
///   <name>.ids.jsonl one JSON string (example id) per line, row order
class DenseIndex {
public:
    static DenseIndex build(std::span<const SingleTurnExample> bank, const EmbeddingProvider& provider);

    DenseIndex(std::string provider_name, std::size_t dim, std::vector<std::string> ids,
               std::vector<float> matrix);

    const std::string& provider_name() const noexcept { return provider_name_; }
    std::size_t dim() const noexcept { return dim_; }
    std::size_t size() const noexcept { return ids_.size(); }
    const std::vector<std::string>& ids() const noexcept { return ids_; }
    std::span<const float> row(std::size_t i) const noexcept {
        return {matrix_.data() + i * dim_, dim_};
    }
    /// L2 norm of the stored float row, accumulated in double.
    double row_norm(std::size_t i) const noexcept { return row_norms_[i]; }

    std::string matrix_bytes() const;
    std::string ids_jsonl() const;
    static DenseIndex from_bytes(std::string_view matrix_bytes, std::string_view ids_jsonl);

    void save(const std::filesystem::path& bin_path, const std::filesystem::path& ids_path) const;
    static DenseIndex load(const std::filesystem::path& bin_path, const std::filesystem::path& ids_path);

private:
    std::string provider_name_;
    std::size_t dim_ = 0;
    std::vector<std::string> ids_;
    std::vector<float> matrix_;
    std::vector<double> row_norms_;
};

/// Inner product of an index row with a query vector, accumulated in double
/// in component order.
double row_dot(std::span<const float> row, const Vector& query);

/// Cosine of row i against the query: row_dot / (|row| |query|), clamped to
/// [-1, 1]. Same evaluation order as cosine() on the row widened to double.
double row_cosine(const DenseIndex& index, std::size_t i, const Vector& query);

/// Common filtering and deterministic ranking over a bank. Ties in score are
/// broken by ascending example id.
class Retriever {
public:
    explicit Retriever(std::span<const SingleTurnExample> bank);
    virtual ~Retriever() = default;

    virtual std::string name() const = 0;
    /// k >= 1. Throws a retrieval error when no example survives the filters.
    virtual RetrievedSet retrieve(const RetrievalQuery& query, std::size_t k) const = 0;

    std::span<const SingleTurnExample> bank() const noexcept { return bank_; }

protected:
    bool eligible(const RetrievalQuery& query, std::size_t i) const;
    /// Indices passing the filters, in bank order. Throws if empty.
    std::vector<std::size_t> eligible_pool(const RetrievalQuery& query) const;
    /// Top-k of `scores` (indexed by bank position) over `pool`.
    RetrievedSet top_k(std::span<const std::size_t> pool, std::span<const double> scores,
                       std::size_t k) const;
    std::size_t id_rank(std::size_t i) const noexcept { return id_rank_[i]; }

private:
    std::span<const SingleTurnExample> bank_;
    std::vector<std::size_t> id_rank_;
};

class DenseRetriever final : public Retriever {
public:
    /// index rows must line up with bank order; provider must match the index.
    DenseRetriever(const DenseIndex& index, std::span<const SingleTurnExample> bank,
                   const EmbeddingProvider& provider);

    std::string name() const override { return "dense"; }
    RetrievedSet retrieve(const RetrievalQuery& query, std::size_t k) const override;

private:
    const DenseIndex& index_;
    const EmbeddingProvider& provider_;
};

struct Bm25Params {
    double k1 = 1.5;
    double b = 0.75;
};

/// Okapi BM25 over lowercased whitespace tokens of each example's
/// rendered_text, with IDF = ln((N - n + 0.5) / (n + 0.5) + 1). Collection
/// statistics cover the whole bank; filters apply at selection time. Query
/// tokens count with multiplicity.
class Bm25Retriever final : public Retriever {
public:
    explicit Bm25Retriever(std::span<const SingleTurnExample> bank, Bm25Params params = {});

    std::string name() const override { return "bm25"; }
    RetrievedSet retrieve(const RetrievalQuery& query, std::size_t k) const override;

    /// Scores of every bank example for the given text.
    std::vector<double> score_all(std::string_view query_text) const;
    double idf(std::string_view term) const;

private:
    struct Posting {
        std::uint32_t doc;
        std::uint32_t tf;
    };
    Bm25Params params_;
    std::vector<std::size_t> doc_len_;
    double avg_len_ = 0.0;
    std::unordered_map<std::string, std::vector<Posting>> postings_;
};

/// Uniform sample without replacement from the eligible pool. The stream is
/// keyed by (seed, query text), so each query is reproducible on its own.
class RandomRetriever final : public Retriever {
public:
    RandomRetriever(std::span<const SingleTurnExample> bank, std::uint64_t seed);

    std::string name() const override { return "random"; }
    RetrievedSet retrieve(const RetrievalQuery& query, std::size_t k) const override;

private:
    std::uint64_t seed_;
};

RetrievedSet dense_retrieve(const DenseIndex& index, std::span<const SingleTurnExample> bank,
                            const RetrievalQuery& query, std::size_t k,
                            const EmbeddingProvider& provider);
RetrievedSet bm25_retrieve(std::span<const SingleTurnExample> bank, const RetrievalQuery& query,
                           std::size_t k);
RetrievedSet random_retrieve(std::span<const SingleTurnExample> bank, const RetrievalQuery& query,
                             std::size_t k, std::uint64_t seed);

}  // namespace district
