#include "district/retriever.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <map>
#include <numeric>

#include <json.hpp>

#include "district/error.hpp"
#include "district/io.hpp"
#include "district/rng.hpp"
#include "district/text.hpp"

namespace district {

namespace {

constexpr std::string_view kIndexMagic = "DSTIDX01";

template <typename UInt>
void put_le(std::string& out, UInt v) {
    for (std::size_t i = 0; i < sizeof(UInt); ++i) {
        out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
    }
}

template <typename UInt>
UInt get_le(std::string_view in, std::size_t& pos) {
    if (pos + sizeof(UInt) > in.size()) fail(ErrorKind::parse, "index file truncated");
    UInt v = 0;
    for (std::size_t i = 0; i < sizeof(UInt); ++i) {
        v |= static_cast<UInt>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
    }
    pos += sizeof(UInt);
    return v;
}

std::string describe_filters(const RetrievalQuery& query) {
    std::string out = "slot " + query.slot.str() + ", excluded domains {";
    bool first = true;
    for (const auto& d : query.exclude_domains) {
        if (!first) out += ", ";
        out += d;
        first = false;
    }
    out += "}, " + std::to_string(query.exclude_sources.size()) + " excluded source turn(s)";
    return out;
}

}  // namespace

const char* to_string(QueryMode mode) noexcept {
    return mode == QueryMode::whole_context ? "whole" : "single";
}

const char* to_string(RetrieverKind kind) noexcept {
    switch (kind) {
        case RetrieverKind::dense: return "dense";
        case RetrieverKind::bm25: return "bm25";
        case RetrieverKind::random: return "random";
    }
    return "?";
}

QueryMode parse_query_mode(std::string_view s) {
    if (s == "whole" || s == "whole_context") return QueryMode::whole_context;
    if (s == "single" || s == "single_turn") return QueryMode::single_turn;
    fail(ErrorKind::config, "unknown query mode: " + std::string(s));
}

RetrieverKind parse_retriever_kind(std::string_view s) {
    if (s == "dense") return RetrieverKind::dense;
    if (s == "bm25") return RetrieverKind::bm25;
    if (s == "random") return RetrieverKind::random;
    fail(ErrorKind::config, "unknown retriever: " + std::string(s));
}

// ---------------------------------------------------------------------------
// Queries

std::string render_turns(const Dialogue& dialogue, std::size_t first, std::size_t last) {
    std::string out;
    for (std::size_t t = first; t <= last; ++t) {
        const Turn& turn = dialogue.turns[t];
        if (!out.empty()) out += ' ';
        out += "[system] ";
        out += turn.system.text.empty() ? kEmptySystemToken : std::string_view(turn.system.text);
        out += " [user] ";
        out += turn.user.text;
    }
    return out;
}

std::string RetrievalQuery::text() const { return context_text + " [slot] " + slot.str(); }

RetrievalQuery build_query(const Dialogue& dialogue, std::size_t turn_index, const SlotId& slot,
                           QueryMode mode) {
    if (turn_index >= dialogue.turns.size()) {
        fail(ErrorKind::precondition, "turn " + std::to_string(turn_index) + " out of range for dialogue " +
                                          dialogue.id + " with " +
                                          std::to_string(dialogue.turns.size()) + " turns");
    }
    RetrievalQuery q;
    q.slot = slot;
    q.mode = mode;
    q.context_text = render_turns(dialogue, mode == QueryMode::whole_context ? 0 : turn_index, turn_index);
    return q;
}

// ---------------------------------------------------------------------------
// DenseIndex

DenseIndex::DenseIndex(std::string provider_name, std::size_t dim, std::vector<std::string> ids,
                       std::vector<float> matrix)
    : provider_name_(std::move(provider_name)), dim_(dim), ids_(std::move(ids)), matrix_(std::move(matrix)) {
    if (dim_ == 0) fail(ErrorKind::precondition, "index dimension must be positive");
    if (matrix_.size() != ids_.size() * dim_) {
        fail(ErrorKind::precondition, "index matrix size does not match ids x dim");
    }
    row_norms_.resize(ids_.size());
    for (std::size_t i = 0; i < ids_.size(); ++i) {
        double n2 = 0.0;
        for (float v : row(i)) {
            if (!std::isfinite(v)) fail(ErrorKind::precondition, "index row " + ids_[i] + " is not finite");
            n2 += static_cast<double>(v) * v;
        }
        row_norms_[i] = std::sqrt(n2);
        if (std::abs(row_norms_[i] - 1.0) > 1e-6) {
            fail(ErrorKind::precondition, "index row " + ids_[i] + " is not unit norm");
        }
    }
}

DenseIndex DenseIndex::build(std::span<const SingleTurnExample> bank, const EmbeddingProvider& provider) {
    std::vector<std::string> texts;
    std::vector<std::string> ids;
    texts.reserve(bank.size());
    ids.reserve(bank.size());
    for (const auto& e : bank) {
        texts.push_back(e.rendered_text);
        ids.push_back(e.id);
    }
    std::vector<float> matrix;
    matrix.reserve(bank.size() * provider.dim());

    constexpr std::size_t kBatch = 256;
    for (std::size_t start = 0; start < texts.size(); start += kBatch) {
        const std::size_t n = std::min(kBatch, texts.size() - start);
        const auto vectors = provider.embed_batch(std::span<const std::string>(texts).subspan(start, n));
        for (const auto& v : vectors) {
            if (v.dim() != provider.dim()) fail(ErrorKind::contract, "embedding provider changed dimension");
            const Vector unit = v.normalized();
            for (double x : unit.values()) matrix.push_back(static_cast<float>(x));
        }
    }
    return DenseIndex(provider.name(), provider.dim(), std::move(ids), std::move(matrix));
}

std::string DenseIndex::matrix_bytes() const {
    std::string out;
    out.reserve(32 + provider_name_.size() + matrix_.size() * 4);
    out += kIndexMagic;
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(dim_));
    put_le<std::uint64_t>(out, ids_.size());
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(provider_name_.size()));
    out += provider_name_;
    for (float v : matrix_) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
    return out;
}

std::string DenseIndex::ids_jsonl() const {
    std::string out;
    for (const auto& id : ids_) {
        out += nlohmann::json(id).dump();
        out += '\n';
    }
    return out;
}

DenseIndex DenseIndex::from_bytes(std::string_view bytes, std::string_view ids_jsonl) {
    if (bytes.substr(0, kIndexMagic.size()) != kIndexMagic) fail(ErrorKind::parse, "not an index file");
    std::size_t pos = kIndexMagic.size();
    const auto dim = get_le<std::uint32_t>(bytes, pos);
    const auto count = get_le<std::uint64_t>(bytes, pos);
    const auto name_len = get_le<std::uint32_t>(bytes, pos);
    if (pos + name_len > bytes.size()) fail(ErrorKind::parse, "index file truncated");
    std::string name(bytes.substr(pos, name_len));
    pos += name_len;
    if (dim == 0 || bytes.size() - pos != count * dim * 4) {
        fail(ErrorKind::parse, "index matrix has " + std::to_string(bytes.size() - pos) +
                                   " bytes, expected " + std::to_string(count * dim * 4));
    }
    std::vector<float> matrix(count * dim);
    for (auto& v : matrix) v = std::bit_cast<float>(get_le<std::uint32_t>(bytes, pos));

    std::vector<std::string> ids;
    for (const auto line : split_lines(ids_jsonl)) {
        try {
            ids.push_back(nlohmann::json::parse(line).get<std::string>());
        } catch (const nlohmann::json::exception& e) {
            fail(ErrorKind::parse, std::string("index id list: ") + e.what());
        }
    }
    if (ids.size() != count) {
        fail(ErrorKind::parse, "index id list has " + std::to_string(ids.size()) + " ids for " +
                                   std::to_string(count) + " rows");
    }
    return DenseIndex(std::move(name), dim, std::move(ids), std::move(matrix));
}

void DenseIndex::save(const std::filesystem::path& bin_path, const std::filesystem::path& ids_path) const {
    write_file(bin_path, matrix_bytes());
    write_file(ids_path, ids_jsonl());
}

DenseIndex DenseIndex::load(const std::filesystem::path& bin_path, const std::filesystem::path& ids_path) {
    return from_bytes(read_file(bin_path), read_file(ids_path));
}

double row_dot(std::span<const float> row, const Vector& query) {
    double s = 0.0;
    for (std::size_t j = 0; j < row.size(); ++j) s += static_cast<double>(row[j]) * query[j];
    return s;
}

double row_cosine(const DenseIndex& index, std::size_t i, const Vector& query) {
    const double c = row_dot(index.row(i), query) / (index.row_norm(i) * query.norm());
    return std::clamp(c, -1.0, 1.0);
}

// ---------------------------------------------------------------------------
// Retriever base

Retriever::Retriever(std::span<const SingleTurnExample> bank) : bank_(bank), id_rank_(bank.size()) {
    std::vector<std::size_t> order(bank.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return bank[a].id < bank[b].id; });
    for (std::size_t r = 0; r < order.size(); ++r) {
        if (r > 0 && bank[order[r]].id == bank[order[r - 1]].id) {
            fail(ErrorKind::precondition, "duplicate example id in bank: " + bank[order[r]].id);
        }
        id_rank_[order[r]] = r;
    }
}

bool Retriever::eligible(const RetrievalQuery& query, std::size_t i) const {
    const auto& e = bank_[i];
    if (query.exclude_domains.count(e.domain)) return false;
    if (!query.exclude_sources.empty() &&
        query.exclude_sources.count({e.dialogue_id, e.turn_index})) {
        return false;
    }
    return true;
}

std::vector<std::size_t> Retriever::eligible_pool(const RetrievalQuery& query) const {
    std::vector<std::size_t> pool;
    pool.reserve(bank_.size());
    for (std::size_t i = 0; i < bank_.size(); ++i) {
        if (eligible(query, i)) pool.push_back(i);
    }
    if (pool.empty()) {
        fail(ErrorKind::retrieval, "no eligible examples for " + describe_filters(query) + " (bank size " +
                                       std::to_string(bank_.size()) + ")");
    }
    return pool;
}

RetrievedSet Retriever::top_k(std::span<const std::size_t> pool, std::span<const double> scores,
                              std::size_t k) const {
    std::vector<std::size_t> order(pool.begin(), pool.end());
    const std::size_t take = std::min(k, order.size());
    auto better = [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return id_rank_[a] < id_rank_[b];
    };
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take), order.end(), better);

    RetrievedSet out;
    out.k = k;
    out.items.reserve(take);
    for (std::size_t i = 0; i < take; ++i) {
        out.items.push_back({bank_[order[i]].id, order[i], scores[order[i]]});
    }
    return out;
}

namespace {

void require_k(std::size_t k) {
    if (k == 0) fail(ErrorKind::precondition, "retrieval needs k >= 1");
}

}  // namespace

// ---------------------------------------------------------------------------
// Dense

DenseRetriever::DenseRetriever(const DenseIndex& index, std::span<const SingleTurnExample> bank,
                               const EmbeddingProvider& provider)
    : Retriever(bank), index_(index), provider_(provider) {
    if (provider.dim() != index.dim()) {
        fail(ErrorKind::precondition, "provider dim " + std::to_string(provider.dim()) +
                                          " does not match index dim " + std::to_string(index.dim()));
    }
    if (provider.name() != index.provider_name()) {
        fail(ErrorKind::precondition, "index was built with provider " + index.provider_name() +
                                          ", not " + provider.name());
    }
    if (index.size() != bank.size()) {
        fail(ErrorKind::precondition, "index has " + std::to_string(index.size()) + " rows for a bank of " +
                                          std::to_string(bank.size()));
    }
    for (std::size_t i = 0; i < bank.size(); ++i) {
        if (index.ids()[i] != bank[i].id) {
            fail(ErrorKind::precondition, "index row " + std::to_string(i) + " is " + index.ids()[i] +
                                              " but bank entry is " + bank[i].id);
        }
    }
}

RetrievedSet DenseRetriever::retrieve(const RetrievalQuery& query, std::size_t k) const {
    require_k(k);
    const auto pool = eligible_pool(query);
    const Vector q = provider_.embed(query.text());
    std::vector<double> scores(bank().size(), 0.0);
    for (std::size_t i : pool) scores[i] = row_cosine(index_, i, q);
    return top_k(pool, scores, k);
}

// ---------------------------------------------------------------------------
// BM25

Bm25Retriever::Bm25Retriever(std::span<const SingleTurnExample> bank, Bm25Params params)
    : Retriever(bank), params_(params), doc_len_(bank.size()) {
    std::size_t total = 0;
    for (std::size_t d = 0; d < bank.size(); ++d) {
        const auto tokens = split_whitespace(to_lower(bank[d].rendered_text));
        doc_len_[d] = tokens.size();
        total += tokens.size();
        std::map<std::string, std::uint32_t> tf;
        for (const auto& t : tokens) ++tf[t];
        for (const auto& [term, count] : tf) {
            postings_[term].push_back({static_cast<std::uint32_t>(d), count});
        }
    }
    avg_len_ = bank.empty() ? 0.0 : static_cast<double>(total) / static_cast<double>(bank.size());
}

double Bm25Retriever::idf(std::string_view term) const {
    const double n_docs = static_cast<double>(bank().size());
    auto it = postings_.find(std::string(term));
    const double df = it == postings_.end() ? 0.0 : static_cast<double>(it->second.size());
    return std::log((n_docs - df + 0.5) / (df + 0.5) + 1.0);
}

std::vector<double> Bm25Retriever::score_all(std::string_view query_text) const {
    std::vector<double> scores(bank().size(), 0.0);
    const double k1 = params_.k1;
    const double b = params_.b;
    for (const auto& term : split_whitespace(to_lower(query_text))) {
        auto it = postings_.find(term);
        if (it == postings_.end()) continue;
        const double w = idf(term);
        for (const auto& p : it->second) {
            const double tf = p.tf;
            const double norm = 1.0 - b + b * static_cast<double>(doc_len_[p.doc]) / avg_len_;
            scores[p.doc] += w * tf * (k1 + 1.0) / (tf + k1 * norm);
        }
    }
    return scores;
}

RetrievedSet Bm25Retriever::retrieve(const RetrievalQuery& query, std::size_t k) const {
    require_k(k);
    const auto pool = eligible_pool(query);
    const auto scores = score_all(query.text());
    return top_k(pool, scores, k);
}

// ---------------------------------------------------------------------------
// Random

RandomRetriever::RandomRetriever(std::span<const SingleTurnExample> bank, std::uint64_t seed)
    : Retriever(bank), seed_(seed) {}

RetrievedSet RandomRetriever::retrieve(const RetrievalQuery& query, std::size_t k) const {
    require_k(k);
    auto pool = eligible_pool(query);
    std::sort(pool.begin(), pool.end(), [&](std::size_t a, std::size_t b) { return id_rank(a) < id_rank(b); });

    SplitMix64 rng(mix64(seed_ ^ fnv1a64(query.text())));
    const std::size_t take = std::min(k, pool.size());
    RetrievedSet out;
    out.k = k;
    for (std::size_t i = 0; i < take; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.below(pool.size() - i));
        std::swap(pool[i], pool[j]);
        out.items.push_back({bank()[pool[i]].id, pool[i], 0.0});
    }
    return out;
}

RetrievedSet dense_retrieve(const DenseIndex& index, std::span<const SingleTurnExample> bank,
                            const RetrievalQuery& query, std::size_t k, const EmbeddingProvider& provider) {
    return DenseRetriever(index, bank, provider).retrieve(query, k);
}

RetrievedSet bm25_retrieve(std::span<const SingleTurnExample> bank, const RetrievalQuery& query, std::size_t k) {
    return Bm25Retriever(bank).retrieve(query, k);
}

RetrievedSet random_retrieve(std::span<const SingleTurnExample> bank, const RetrievalQuery& query,
                             std::size_t k, std::uint64_t seed) {
    return RandomRetriever(bank, seed).retrieve(query, k);
}

}  // namespace district
