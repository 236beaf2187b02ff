#include "district/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "district/error.hpp"
#include "district/rng.hpp"
#include "district/text.hpp"

namespace district {

using nlohmann::json;

namespace {

constexpr std::string_view kReservedMarkers[] = {"[system]", "[user]",  "[slot]",
                                                 "[value]",  "[example]", "[context]"};

std::string canonical_part(std::string_view s) { return to_lower(collapse_whitespace(s)); }

json parse_json(std::string_view bytes, std::string_view what) {
    if (auto bad = find_invalid_utf8(bytes)) {
        fail(ErrorKind::encoding,
             std::string(what) + ": invalid UTF-8 at byte offset " + std::to_string(*bad));
    }
    try {
        return json::parse(bytes.begin(), bytes.end());
    } catch (const json::parse_error& e) {
        fail(ErrorKind::parse, std::string(what) + ": malformed JSON at byte offset " +
                                   std::to_string(e.byte > 0 ? e.byte - 1 : 0) + ": " + e.what());
    }
}

const json& require(const json& obj, const char* key, std::string_view where) {
    auto it = obj.find(key);
    if (it == obj.end()) {
        fail(ErrorKind::schema, std::string(where) + ": missing field \"" + key + "\"");
    }
    return *it;
}

std::string require_string(const json& obj, const char* key, std::string_view where) {
    const json& v = require(obj, key, where);
    if (!v.is_string()) {
        fail(ErrorKind::schema, std::string(where) + ": field \"" + key + "\" must be a string");
    }
    return v.get<std::string>();
}

std::uint64_t gcd_u64(std::uint64_t a, std::uint64_t b) { return std::gcd(a, b); }

}  // namespace

std::optional<std::string> normalize_value(std::string_view raw) {
    std::string v = to_lower(collapse_whitespace(raw));
    if (v == "none" || v == "not mentioned") return std::nullopt;
    if (v == "dont care" || v == "do not care" || v == "dontcare") return std::string("dontcare");
    return v;
}

bool contains_reserved_marker(std::string_view text) {
    return std::any_of(std::begin(kReservedMarkers), std::end(kReservedMarkers),
                       [&](std::string_view m) { return text.find(m) != std::string_view::npos; });
}

// ---------------------------------------------------------------------------
// SlotId

SlotId::SlotId(std::string_view domain, std::string_view name)
    : domain_(canonical_part(domain)), name_(canonical_part(name)) {
    if (domain_.empty() || name_.empty()) {
        fail(ErrorKind::precondition, "slot id needs a non-empty domain and name");
    }
    if (domain_.find('-') != std::string::npos) {
        fail(ErrorKind::precondition, "slot domain may not contain '-': " + domain_);
    }
    canonical_ = domain_ + "-" + name_;
}

SlotId SlotId::parse(std::string_view canonical) {
    const auto dash = canonical.find('-');
    if (dash == std::string_view::npos) {
        fail(ErrorKind::precondition,
             "slot id must look like domain-name: " + std::string(canonical));
    }
    return SlotId(canonical.substr(0, dash), canonical.substr(dash + 1));
}

std::vector<TurnState> gold_states(const std::vector<Dialogue>& dialogues) {
    std::vector<TurnState> out;
    for (const auto& d : dialogues) {
        for (const auto& t : d.turns) out.push_back({d.id, t.index, t.gold_state});
    }
    return out;
}

std::set<std::string> state_domains(const std::vector<Turn>& turns) {
    std::set<std::string> out;
    for (const auto& turn : turns) {
        for (const auto& [slot, value] : turn.gold_state) out.insert(slot.domain());
    }
    return out;
}

// ---------------------------------------------------------------------------
// Ontology

Ontology::Ontology(std::vector<SlotDef> slots) : slots_(std::move(slots)) {
    if (slots_.empty()) fail(ErrorKind::schema, "ontology has no slots");
    std::sort(slots_.begin(), slots_.end(),
              [](const SlotDef& a, const SlotDef& b) { return a.id < b.id; });
    for (std::size_t i = 0; i < slots_.size(); ++i) {
        auto& def = slots_[i];
        if (i > 0 && slots_[i - 1].id == def.id) {
            fail(ErrorKind::schema, "ontology lists slot twice: " + def.id.str());
        }
        // dedupe, keeping first occurrence order
        std::vector<std::string> unique;
        std::unordered_set<std::string> seen;
        for (auto& v : def.candidate_values) {
            if (seen.insert(v).second) unique.push_back(std::move(v));
        }
        def.candidate_values = std::move(unique);
        if (def.kind == SlotKind::categorical && def.candidate_values.empty()) {
            fail(ErrorKind::schema, "categorical slot without values: " + def.id.str());
        }
        if (def.kind == SlotKind::span && !def.candidate_values.empty()) {
            fail(ErrorKind::schema, "span slot may not list values: " + def.id.str());
        }
        domains_.insert(def.id.domain());
    }
}

const SlotDef* Ontology::find(const SlotId& id) const {
    auto it = std::lower_bound(slots_.begin(), slots_.end(), id,
                               [](const SlotDef& d, const SlotId& key) { return d.id < key; });
    if (it == slots_.end() || it->id != id) return nullptr;
    return &*it;
}

bool Ontology::contains(const SlotId& id) const { return find(id) != nullptr; }

std::vector<SlotId> Ontology::slot_ids(const std::optional<std::string>& domain) const {
    std::vector<SlotId> out;
    for (const auto& def : slots_) {
        if (!domain || def.id.domain() == *domain) out.push_back(def.id);
    }
    return out;
}

Ontology parse_ontology(std::string_view bytes) {
    const json doc = parse_json(bytes, "ontology");
    if (!doc.is_object()) fail(ErrorKind::schema, "ontology: top level must be an object");
    const json& slots = require(doc, "slots", "ontology");
    if (!slots.is_array()) fail(ErrorKind::schema, "ontology: \"slots\" must be an array");

    std::vector<SlotDef> defs;
    for (std::size_t i = 0; i < slots.size(); ++i) {
        const json& s = slots[i];
        const std::string where = "ontology slot #" + std::to_string(i);
        if (!s.is_object()) fail(ErrorKind::schema, where + ": must be an object");
        SlotDef def;
        try {
            def.id = SlotId(require_string(s, "domain", where), require_string(s, "name", where));
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::precondition) throw;
            fail(ErrorKind::schema, where + ": " + e.what());
        }
        const std::string kind = require_string(s, "kind", where);
        if (kind == "categorical") {
            def.kind = SlotKind::categorical;
        } else if (kind == "span") {
            def.kind = SlotKind::span;
        } else {
            fail(ErrorKind::schema, where + ": unknown kind \"" + kind + "\"");
        }
        if (auto it = s.find("values"); it != s.end()) {
            if (!it->is_array()) fail(ErrorKind::schema, where + ": \"values\" must be an array");
            for (const auto& v : *it) {
                if (!v.is_string()) fail(ErrorKind::schema, where + ": values must be strings");
                if (auto nv = normalize_value(v.get<std::string>())) {
                    def.candidate_values.push_back(std::move(*nv));
                }
            }
        }
        defs.push_back(std::move(def));
    }
    return Ontology(std::move(defs));
}

std::string write_ontology(const Ontology& ontology) {
    json slots = json::array();
    for (const auto& def : ontology.slots()) {
        slots.push_back({{"domain", def.id.domain()},
                         {"name", def.id.name()},
                         {"kind", def.kind == SlotKind::categorical ? "categorical" : "span"},
                         {"values", def.candidate_values}});
    }
    return json{{"slots", slots}}.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Corpus

std::vector<Dialogue> parse_corpus(std::string_view bytes, const Ontology& ontology) {
    const json doc = parse_json(bytes, "corpus");
    if (!doc.is_array()) fail(ErrorKind::schema, "corpus: top level must be an array");

    std::vector<Dialogue> dialogues;
    dialogues.reserve(doc.size());
    std::unordered_set<std::string> ids;

    for (std::size_t d = 0; d < doc.size(); ++d) {
        const json& obj = doc[d];
        if (!obj.is_object()) {
            fail(ErrorKind::schema, "corpus entry #" + std::to_string(d) + " must be an object");
        }
        Dialogue dialogue;
        dialogue.id = require_string(obj, "id", "corpus entry #" + std::to_string(d));
        if (dialogue.id.empty()) {
            fail(ErrorKind::schema, "corpus entry #" + std::to_string(d) + ": empty dialogue id");
        }
        if (!ids.insert(dialogue.id).second) {
            fail(ErrorKind::schema, "duplicate dialogue id " + dialogue.id);
        }
        const std::string where = "dialogue " + dialogue.id;
        const json& turns = require(obj, "turns", where);
        if (!turns.is_array()) fail(ErrorKind::schema, where + ": \"turns\" must be an array");

        for (std::size_t t = 0; t < turns.size(); ++t) {
            const json& tj = turns[t];
            const std::string turn_where = where + " turn " + std::to_string(t);
            if (!tj.is_object()) fail(ErrorKind::schema, turn_where + ": must be an object");

            Turn turn;
            turn.index = t;
            turn.system.text = collapse_whitespace(require_string(tj, "system", turn_where));
            turn.user.text = collapse_whitespace(require_string(tj, "user", turn_where));
            if (turn.user.text.empty()) {
                fail(ErrorKind::schema, turn_where + ": empty user utterance");
            }
            if (turn.system.text.empty() && t > 0) {
                fail(ErrorKind::schema, turn_where + ": empty system utterance after the opening turn");
            }
            if (contains_reserved_marker(turn.system.text) ||
                contains_reserved_marker(turn.user.text)) {
                fail(ErrorKind::schema, turn_where + ": utterance contains a reserved prompt marker");
            }

            const json& state = require(tj, "state", turn_where);
            if (!state.is_object()) fail(ErrorKind::schema, turn_where + ": \"state\" must be an object");
            for (const auto& [key, value] : state.items()) {
                SlotId slot;
                try {
                    slot = SlotId::parse(key);
                } catch (const Error&) {
                    fail(ErrorKind::schema, where + ": unknown slot \"" + key + "\"");
                }
                if (!ontology.contains(slot)) {
                    fail(ErrorKind::schema, where + ": unknown slot \"" + slot.str() + "\"");
                }
                if (!value.is_string()) {
                    fail(ErrorKind::schema,
                         turn_where + ": value of \"" + slot.str() + "\" must be a string");
                }
                if (auto v = normalize_value(value.get<std::string>())) {
                    turn.gold_state[slot] = std::move(*v);
                }
            }
            dialogue.turns.push_back(std::move(turn));
        }
        dialogue.domains = state_domains(dialogue.turns);
        dialogues.push_back(std::move(dialogue));
    }
    return dialogues;
}

std::string write_corpus(const std::vector<Dialogue>& dialogues) {
    json doc = json::array();
    for (const auto& d : dialogues) {
        json turns = json::array();
        for (const auto& t : d.turns) {
            json state = json::object();
            for (const auto& [slot, value] : t.gold_state) state[slot.str()] = value;
            turns.push_back({{"system", t.system.text}, {"user", t.user.text}, {"state", state}});
        }
        doc.push_back({{"id", d.id}, {"turns", turns}});
    }
    return doc.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Splits

const char* to_string(SplitMode mode) noexcept {
    switch (mode) {
        case SplitMode::zero_shot: return "zero_shot";
        case SplitMode::cross_domain_few_shot: return "cross_domain_few_shot";
        case SplitMode::multi_domain_few_shot: return "multi_domain_few_shot";
        case SplitMode::full_shot: return "full_shot";
    }
    return "?";
}

SplitMode parse_split_mode(std::string_view s) {
    for (auto mode : {SplitMode::zero_shot, SplitMode::cross_domain_few_shot,
                      SplitMode::multi_domain_few_shot, SplitMode::full_shot}) {
        if (s == to_string(mode)) return mode;
    }
    fail(ErrorKind::config, "unknown split mode: " + std::string(s));
}

Fraction Fraction::parse(std::string_view s) {
    const std::string original(s);
    auto bad = [&]() -> Fraction {
        fail(ErrorKind::config, "fraction must be a number in (0, 1]: \"" + original + "\"");
    };
    auto parse_uint = [&](std::string_view digits) {
        std::uint64_t v = 0;
        if (digits.empty()) bad();
        auto [p, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), v);
        if (ec != std::errc() || p != digits.data() + digits.size()) bad();
        return v;
    };

    std::uint64_t extra_den = 1;
    if (!s.empty() && s.back() == '%') {
        extra_den = 100;
        s.remove_suffix(1);
    }
    Fraction f;
    if (auto slash = s.find('/'); slash != std::string_view::npos) {
        f.numerator = parse_uint(s.substr(0, slash));
        f.denominator = parse_uint(s.substr(slash + 1));
    } else {
        const auto dot = s.find('.');
        const std::string_view whole = s.substr(0, dot);
        const std::string_view frac =
            dot == std::string_view::npos ? std::string_view{} : s.substr(dot + 1);
        if (frac.size() > 12 || (whole.empty() && frac.empty())) bad();
        std::uint64_t den = 1;
        for (std::size_t i = 0; i < frac.size(); ++i) den *= 10;
        const std::uint64_t w = whole.empty() ? 0 : parse_uint(whole);
        const std::uint64_t fr = frac.empty() ? 0 : parse_uint(frac);
        f.numerator = w * den + fr;
        f.denominator = den;
    }
    f.denominator *= extra_den;
    if (f.denominator == 0 || f.numerator == 0 || f.numerator > f.denominator) bad();
    const auto g = gcd_u64(f.numerator, f.denominator);
    f.numerator /= g;
    f.denominator /= g;
    return f;
}

std::uint64_t Fraction::floor_times(std::uint64_t n) const {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(numerator) * n) / denominator);
}

std::string Fraction::str() const {
    return std::to_string(numerator) + "/" + std::to_string(denominator);
}

void SplitSpec::validate() const {
    const bool needs_target =
        mode == SplitMode::zero_shot || mode == SplitMode::cross_domain_few_shot;
    if (needs_target && !target_domain) {
        fail(ErrorKind::config, std::string(to_string(mode)) + " requires a target domain");
    }
    if (!needs_target && target_domain) {
        fail(ErrorKind::config, std::string(to_string(mode)) + " does not take a target domain");
    }
    const bool few_shot =
        mode == SplitMode::cross_domain_few_shot || mode == SplitMode::multi_domain_few_shot;
    if (few_shot && fraction.is_one()) {
        fail(ErrorKind::config, std::string(to_string(mode)) + " requires a fraction below 1");
    }
}

std::string SplitInfo::describe() const {
    std::ostringstream os;
    os << to_string(mode);
    if (target_domain) os << " target=" << *target_domain;
    if (mode == SplitMode::cross_domain_few_shot || mode == SplitMode::multi_domain_few_shot) {
        os << " fraction=" << fraction << " seed=" << seed << " sampled=" << sampled;
    }
    os << " train=" << train_ids.size() << "/" << corpus_size << " heldout=" << heldout_ids.size();
    return os.str();
}

namespace {

// Seeded shuffle of the pool in dialogue-id order, then a prefix take of
// max(1, floor(fraction * |pool|)).
std::set<std::string> sample_ids(std::vector<const Dialogue*> pool, const Fraction& fraction,
                                 std::uint64_t seed) {
    std::sort(pool.begin(), pool.end(),
              [](const Dialogue* a, const Dialogue* b) { return a->id < b->id; });
    seeded_shuffle(std::span<const Dialogue*>(pool), seed);
    const std::size_t take =
        std::min<std::size_t>(pool.size(), std::max<std::uint64_t>(1, fraction.floor_times(pool.size())));
    std::set<std::string> out;
    for (std::size_t i = 0; i < take; ++i) out.insert(pool[i]->id);
    return out;
}

}  // namespace

Split make_split(const std::vector<Dialogue>& dialogues, const SplitSpec& spec) {
    spec.validate();

    Split split;
    SplitInfo& info = split.info;
    info.mode = spec.mode;
    info.target_domain = spec.target_domain;
    info.fraction = spec.fraction.str();
    info.seed = spec.seed;
    info.corpus_size = dialogues.size();

    auto touches_target = [&](const Dialogue& d) {
        return spec.target_domain && d.domains.count(*spec.target_domain) > 0;
    };

    std::vector<const Dialogue*> target_pool;
    for (const auto& d : dialogues) {
        if (touches_target(d)) target_pool.push_back(&d);
    }
    info.target_pool_size = target_pool.size();
    if (spec.target_domain && target_pool.empty()) {
        fail(ErrorKind::split, "target domain \"" + *spec.target_domain + "\" does not occur in the corpus");
    }

    std::set<std::string> sampled;
    switch (spec.mode) {
        case SplitMode::zero_shot:
        case SplitMode::full_shot:
            break;
        case SplitMode::cross_domain_few_shot:
            sampled = sample_ids(target_pool, spec.fraction, spec.seed);
            break;
        case SplitMode::multi_domain_few_shot: {
            std::vector<const Dialogue*> pool;
            for (const auto& d : dialogues) pool.push_back(&d);
            if (!pool.empty()) sampled = sample_ids(pool, spec.fraction, spec.seed);
            break;
        }
    }
    info.sampled = sampled.size();

    for (const auto& d : dialogues) {
        bool in_train = false;
        switch (spec.mode) {
            case SplitMode::zero_shot: in_train = !touches_target(d); break;
            case SplitMode::cross_domain_few_shot:
                in_train = !touches_target(d) || sampled.count(d.id) > 0;
                break;
            case SplitMode::multi_domain_few_shot: in_train = sampled.count(d.id) > 0; break;
            case SplitMode::full_shot: in_train = true; break;
        }
        if (in_train) {
            split.train.push_back(d);
            info.train_ids.push_back(d.id);
        } else {
            split.heldout.push_back(d);
            info.heldout_ids.push_back(d.id);
        }
    }
    if (split.train.empty()) {
        fail(ErrorKind::split, "split " + info.describe() + " leaves no training dialogues");
    }
    return split;
}

std::vector<SlotQuery> enumerate_queries(const std::vector<Dialogue>& dialogues,
                                         const Ontology& ontology,
                                         const std::optional<std::string>& domain_filter) {
    std::vector<const Dialogue*> ordered;
    for (const auto& d : dialogues) ordered.push_back(&d);
    std::sort(ordered.begin(), ordered.end(),
              [](const Dialogue* a, const Dialogue* b) { return a->id < b->id; });

    const auto slots = ontology.slot_ids(domain_filter);
    std::vector<SlotQuery> out;
    for (const Dialogue* d : ordered) {
        for (const auto& turn : d->turns) {
            for (const auto& slot : slots) out.push_back({d->id, turn.index, slot});
        }
    }
    return out;
}

}  // namespace district
