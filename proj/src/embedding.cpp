#include "district/embedding.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "district/error.hpp"
#include "district/http.hpp"
#include "district/text.hpp"

namespace district {

namespace {

constexpr std::uint64_t kSignBasis = 0x84222325cbf29ce4ULL;

void require_same_dim(const Vector& a, const Vector& b) {
    if (a.dim() != b.dim()) {
        fail(ErrorKind::precondition, "vector dimension mismatch: " + std::to_string(a.dim()) +
                                          " vs " + std::to_string(b.dim()));
    }
}

// Byte offsets of UTF-8 code point starts, plus the end offset.
std::vector<std::size_t> code_point_bounds(std::string_view s) {
    std::vector<std::size_t> bounds;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if ((static_cast<unsigned char>(s[i]) & 0xC0) != 0x80) bounds.push_back(i);
    }
    bounds.push_back(s.size());
    return bounds;
}

}  // namespace

Vector::Vector(std::vector<double> values) : values_(std::move(values)) {
    if (values_.empty()) fail(ErrorKind::precondition, "vector must have at least one component");
    for (double v : values_) {
        if (!std::isfinite(v)) fail(ErrorKind::precondition, "vector has a non-finite component");
    }
}

double Vector::norm() const noexcept {
    double s = 0.0;
    for (double v : values_) s += v * v;
    return std::sqrt(s);
}

Vector Vector::normalized() const {
    const double n = norm();
    if (n == 0.0) fail(ErrorKind::precondition, "cannot normalize a zero vector");
    std::vector<double> out(values_.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = values_[i] / n;
    return Vector(std::move(out));
}

double dot(const Vector& a, const Vector& b) {
    require_same_dim(a, b);
    double s = 0.0;
    for (std::size_t i = 0; i < a.dim(); ++i) s += a[i] * b[i];
    return s;
}

double cosine(const Vector& a, const Vector& b) {
    require_same_dim(a, b);
    const double na = a.norm();
    const double nb = b.norm();
    if (na == 0.0 || nb == 0.0) fail(ErrorKind::precondition, "cosine of a zero vector");
    const double c = dot(a, b) / (na * nb);
    return std::clamp(c, -1.0, 1.0);
}

Vector EmbeddingProvider::embed(std::string_view text) const {
    const std::string owned(text);
    auto out = embed_batch(std::span<const std::string>(&owned, 1));
    return std::move(out.front());
}

// ---------------------------------------------------------------------------
// Lexical embedder

Vector lexical_embed(std::string_view text, std::size_t dim) {
    if (dim < kMinLexicalDim) {
        fail(ErrorKind::precondition,
             "lexical embedding dim must be >= " + std::to_string(kMinLexicalDim));
    }
    const auto tokens = split_whitespace(to_lower(text));

    std::map<std::string, int> counts;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        ++counts["w:" + tokens[i]];
        if (i + 1 < tokens.size()) ++counts["b:" + tokens[i] + " " + tokens[i + 1]];

        const std::string padded = "#" + tokens[i] + "#";
        const auto bounds = code_point_bounds(padded);
        // bounds has (code points + 1) entries
        for (std::size_t c = 0; c + 3 < bounds.size(); ++c) {
            ++counts["c:" + padded.substr(bounds[c], bounds[c + 3] - bounds[c])];
        }
    }

    std::vector<double> acc(dim, 0.0);
    for (const auto& [feature, tf] : counts) {
        const std::uint64_t bucket = fnv1a64(feature) % dim;
        const bool negative = (fnv1a64(feature, kSignBasis) >> 63) != 0;
        const double weight = 1.0 + std::log(static_cast<double>(tf));
        acc[bucket] += negative ? -weight : weight;
    }

    double norm2 = 0.0;
    for (double v : acc) norm2 += v * v;
    if (norm2 == 0.0) {
        acc[0] = 1.0;
        return Vector(std::move(acc));
    }
    const double norm = std::sqrt(norm2);
    for (double& v : acc) v /= norm;
    return Vector(std::move(acc));
}

LexicalEmbedder::LexicalEmbedder(std::size_t dim) : dim_(dim) {
    if (dim_ < kMinLexicalDim) {
        fail(ErrorKind::precondition,
             "lexical embedding dim must be >= " + std::to_string(kMinLexicalDim));
    }
}

std::string LexicalEmbedder::name() const { return "lexical-fh-v1"; }

std::vector<Vector> LexicalEmbedder::embed_batch(std::span<const std::string> texts) const {
    std::vector<Vector> out;
    out.reserve(texts.size());
    for (const auto& t : texts) out.push_back(lexical_embed(t, dim_));
    return out;
}

// ---------------------------------------------------------------------------
// Remote embedder

std::vector<Vector> remote_embed(std::span<const std::string> texts, const std::string& endpoint,
                                 const RemoteOptions& options) {
    if (texts.empty()) fail(ErrorKind::precondition, "remote_embed called with an empty batch");

    nlohmann::json body = {{"texts", nlohmann::json::array()}};
    for (const auto& t : texts) body["texts"].push_back(t);
    const auto reply = http::post_json(endpoint, "/embed", body, options);

    const auto vectors = reply.find("vectors");
    if (vectors == reply.end() || !vectors->is_array()) {
        fail(ErrorKind::protocol, "/embed reply lacks a \"vectors\" array");
    }
    if (vectors->size() != texts.size()) {
        fail(ErrorKind::protocol, "/embed returned " + std::to_string(vectors->size()) +
                                      " vectors for " + std::to_string(texts.size()) + " texts");
    }
    std::size_t dim = 0;
    if (auto d = reply.find("dim"); d != reply.end()) {
        if (!d->is_number_integer() || d->get<long long>() <= 0) {
            fail(ErrorKind::protocol, "/embed reply has an invalid \"dim\"");
        }
        dim = d->get<std::size_t>();
    }

    std::vector<Vector> out;
    out.reserve(texts.size());
    for (const auto& row : *vectors) {
        if (!row.is_array() || row.empty()) fail(ErrorKind::protocol, "/embed vector is not a non-empty array");
        if (dim == 0) dim = row.size();
        if (row.size() != dim) {
            fail(ErrorKind::protocol, "/embed vector of dim " + std::to_string(row.size()) +
                                          ", expected " + std::to_string(dim));
        }
        std::vector<double> values;
        values.reserve(dim);
        for (const auto& x : row) {
            if (!x.is_number()) fail(ErrorKind::protocol, "/embed vector has a non-numeric component");
            values.push_back(x.get<double>());
        }
        try {
            out.push_back(Vector(std::move(values)).normalized());
        } catch (const Error& e) {
            fail(ErrorKind::protocol, std::string("/embed vector rejected: ") + e.what());
        }
    }
    return out;
}

RemoteEmbedder::RemoteEmbedder(std::string endpoint, RemoteOptions options)
    : endpoint_(std::move(endpoint)), options_(options) {
    const std::string probe = "dimension probe";
    dim_ = remote_embed(std::span<const std::string>(&probe, 1), endpoint_, options_).front().dim();
}

std::string RemoteEmbedder::name() const { return "remote@" + endpoint_; }

std::vector<Vector> RemoteEmbedder::embed_batch(std::span<const std::string> texts) const {
    auto out = remote_embed(texts, endpoint_, options_);
    if (out.front().dim() != dim_) {
        fail(ErrorKind::protocol, "/embed dimension changed from " + std::to_string(dim_) + " to " +
                                      std::to_string(out.front().dim()));
    }
    return out;
}

}  // namespace district
