#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace district {

/// Lowercases, trims and collapses whitespace, then folds the absent-value
/// literals ("none", "not mentioned") to nullopt and the don't-care spellings
/// to "dontcare".
std::optional<std::string> normalize_value(std::string_view raw);

/// A slot namespaced by its domain, rendered canonically as "domain-name".
/// Both parts are stored lowercased with collapsed whitespace. Ordering is by
/// the canonical string.
class SlotId {
public:
    SlotId() = default;
    SlotId(std::string_view domain, std::string_view name);

    /// Splits "domain-name" at the first '-'.
    static SlotId parse(std::string_view canonical);

    const std::string& domain() const noexcept { return domain_; }
    const std::string& name() const noexcept { return name_; }
    const std::string& str() const noexcept { return canonical_; }

    friend bool operator==(const SlotId& a, const SlotId& b) noexcept {
        return a.canonical_ == b.canonical_;
    }
    friend std::strong_ordering operator<=>(const SlotId& a, const SlotId& b) noexcept {
        return a.canonical_ <=> b.canonical_;
    }

private:
    std::string domain_;
    std::string name_;
    std::string canonical_;
};

enum class Speaker { system, user };

struct Utterance {
    Speaker speaker = Speaker::user;
    std::string text;
};

using DialogueState = std::map<SlotId, std::string>;

struct Turn {
    std::size_t index = 0;
    Utterance system{Speaker::system, {}};
    Utterance user{Speaker::user, {}};
    DialogueState gold_state;
};

struct Dialogue {
    std::string id;
    std::set<std::string> domains;
    std::vector<Turn> turns;
};

/// A dialogue state pinned to one (dialogue, turn): gold or predicted.
struct TurnState {
    std::string dialogue_id;
    std::size_t turn_index = 0;
    DialogueState entries;

    friend bool operator==(const TurnState&, const TurnState&) = default;
};

/// Gold state of every turn, in input order.
std::vector<TurnState> gold_states(const std::vector<Dialogue>& dialogues);

/// Domains touched by any turn's gold state.
std::set<std::string> state_domains(const std::vector<Turn>& turns);

enum class SlotKind { categorical, span };

struct SlotDef {
    SlotId id;
    SlotKind kind = SlotKind::span;
    std::vector<std::string> candidate_values;
};

class Ontology {
public:
    /// Validates uniqueness, non-emptiness and the categorical/span value rule.
    /// Slots are kept sorted by SlotId.
    explicit Ontology(std::vector<SlotDef> slots);

    const std::vector<SlotDef>& slots() const noexcept { return slots_; }
    const std::set<std::string>& domains() const noexcept { return domains_; }
    std::size_t size() const noexcept { return slots_.size(); }

    bool contains(const SlotId& id) const;
    const SlotDef* find(const SlotId& id) const;
    /// All slot ids, or only those of `domain` when set.
    std::vector<SlotId> slot_ids(const std::optional<std::string>& domain = std::nullopt) const;

private:
    std::vector<SlotDef> slots_;
    std::set<std::string> domains_;
};

Ontology parse_ontology(std::string_view bytes);
std::string write_ontology(const Ontology& ontology);

/// Parses a corpus file: UTF-8 JSON, top-level array of
/// {"id", "turns": [{"system", "user", "state"}]}.
std::vector<Dialogue> parse_corpus(std::string_view bytes, const Ontology& ontology);

/// Serializes dialogues back into the corpus schema. Output is canonical:
/// two-space indentation, state keys sorted.
std::string write_corpus(const std::vector<Dialogue>& dialogues);

/// Utterance text markers reserved by the prompt grammar.
bool contains_reserved_marker(std::string_view text);

// ---------------------------------------------------------------------------
// Splits

enum class SplitMode { zero_shot, cross_domain_few_shot, multi_domain_few_shot, full_shot };

const char* to_string(SplitMode mode) noexcept;
SplitMode parse_split_mode(std::string_view s);

/// A fraction in (0, 1] kept as an exact ratio so that floor(fraction * N) has
/// no floating-point surprises.
struct Fraction {
    std::uint64_t numerator = 1;
    std::uint64_t denominator = 1;

    /// Accepts "0.01", "1%", "1/100" and "1".
    static Fraction parse(std::string_view s);

    /// floor(numerator * n / denominator)
    std::uint64_t floor_times(std::uint64_t n) const;
    bool is_one() const noexcept { return numerator == denominator; }
    std::string str() const;
    double value() const noexcept {
        return static_cast<double>(numerator) / static_cast<double>(denominator);
    }
};

struct SplitSpec {
    SplitMode mode = SplitMode::full_shot;
    std::optional<std::string> target_domain;
    Fraction fraction;
    std::uint64_t seed = 0;

    /// Throws a config error when the mode/target/fraction combination is invalid.
    void validate() const;
};

struct SplitInfo {
    SplitMode mode = SplitMode::full_shot;
    std::optional<std::string> target_domain;
    std::string fraction;
    std::uint64_t seed = 0;
    std::size_t corpus_size = 0;
    std::size_t target_pool_size = 0;   // dialogues touching target_domain
    std::size_t sampled = 0;            // dialogues drawn by the few-shot sampler
    std::vector<std::string> train_ids;
    std::vector<std::string> heldout_ids;

    std::string describe() const;
};

struct Split {
    std::vector<Dialogue> train;
    std::vector<Dialogue> heldout;
    SplitInfo info;
};

/// Builds a training split. Sampling is a seeded shuffle of the pool (sorted
/// by dialogue id) followed by a prefix take, so smaller fractions are prefixes
/// of larger ones under one seed. Dialogue order in `train` and `heldout`
/// follows the input order.
Split make_split(const std::vector<Dialogue>& dialogues, const SplitSpec& spec);

struct SlotQuery {
    std::string dialogue_id;
    std::size_t turn_index = 0;
    SlotId slot;

    friend bool operator==(const SlotQuery&, const SlotQuery&) = default;
};

/// One query per (turn, slot), ordered by (dialogue id, turn, slot).
std::vector<SlotQuery> enumerate_queries(const std::vector<Dialogue>& dialogues,
                                         const Ontology& ontology,
                                         const std::optional<std::string>& domain_filter);

}  // namespace district
