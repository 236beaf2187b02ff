#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace district {

/// Dense vector with finite components.
class Vector {
public:
    Vector() = default;
    /// Throws a precondition error on an empty input or a non-finite component.
    explicit Vector(std::vector<double> values);

    std::size_t dim() const noexcept { return values_.size(); }
    std::span<const double> values() const noexcept { return values_; }
    double operator[](std::size_t i) const noexcept { return values_[i]; }

    double norm() const noexcept;
    /// Unit-L2 copy. Throws on a zero vector.
    Vector normalized() const;

    friend bool operator==(const Vector&, const Vector&) = default;

private:
    std::vector<double> values_;
};

double dot(const Vector& a, const Vector& b);

/// dot(a, b) / (|a| |b|). Throws on dimension mismatch or a zero vector.
double cosine(const Vector& a, const Vector& b);

/// Anything that maps text to fixed-dimension unit vectors.
class EmbeddingProvider {
public:
    virtual ~EmbeddingProvider() = default;

    virtual std::string name() const = 0;
    virtual std::size_t dim() const = 0;
    virtual std::vector<Vector> embed_batch(std::span<const std::string> texts) const = 0;

    Vector embed(std::string_view text) const;
};

inline constexpr std::size_t kDefaultEmbeddingDim = 384;
inline constexpr std::size_t kMinLexicalDim = 64;

/// Feature-hashed lexical embedding.
///
/// Text is lowercased and split on whitespace. Features are word unigrams,
/// word bigrams and character trigrams of each '#'-padded word (over UTF-8
/// code points). Each distinct feature with count tf contributes
/// sign(h) * (1 + ln tf) to bucket h mod dim, where h is FNV-1a of the
/// feature string prefixed by its kind ("w:", "b:", "c:") and the sign is the
/// top bit of a second FNV-1a pass with a different basis. The sum is then
/// L2-normalized; a zero sum yields e_0.
Vector lexical_embed(std::string_view text, std::size_t dim = kDefaultEmbeddingDim);

class LexicalEmbedder final : public EmbeddingProvider {
public:
    explicit LexicalEmbedder(std::size_t dim = kDefaultEmbeddingDim);

    std::string name() const override;
    std::size_t dim() const override { return dim_; }
    std::vector<Vector> embed_batch(std::span<const std::string> texts) const override;

private:
    std::size_t dim_;
};

struct RemoteOptions {
    int retries = 2;               // attempts after the first
    int timeout_seconds = 600;
};

/// POST {"texts": [...]} to <endpoint>/embed; returns client-side normalized
/// vectors in input order.
std::vector<Vector> remote_embed(std::span<const std::string> texts, const std::string& endpoint,
                                 const RemoteOptions& options = {});

/// Provider backed by a remote /embed service. The dimension is learned from
/// the first response (or probed at construction).
class RemoteEmbedder final : public EmbeddingProvider {
public:
    RemoteEmbedder(std::string endpoint, RemoteOptions options = {});

    std::string name() const override;
    std::size_t dim() const override { return dim_; }
    std::vector<Vector> embed_batch(std::span<const std::string> texts) const override;

private:
    std::string endpoint_;
    RemoteOptions options_;
    std::size_t dim_ = 0;
};

}  // namespace district
