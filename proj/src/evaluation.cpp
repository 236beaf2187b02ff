#include "district/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include <json.hpp>

#include "district/error.hpp"

namespace district {

using nlohmann::json;

namespace {

using TurnKey = std::pair<std::string, std::size_t>;

std::string describe(const TurnKey& key) {
    return "(dialogue " + key.first + ", turn " + std::to_string(key.second) + ")";
}

bool equal_within(const DialogueState& pred, const DialogueState& gold, const std::optional<std::string>& domain) {
    if (!domain) return pred == gold;
    auto restrict = [&](const DialogueState& s) {
        DialogueState out;
        for (const auto& [slot, value] : s) {
            if (slot.domain() == *domain) out.emplace(slot, value);
        }
        return out;
    };
    return restrict(pred) == restrict(gold);
}

}  // namespace

EvalReport joint_goal_accuracy(std::span<const TurnState> preds, std::span<const TurnState> golds,
                               const std::optional<std::string>& slot_scope) {
    std::map<TurnKey, const TurnState*> pred_by_key;
    for (const auto& p : preds) {
        if (!pred_by_key.emplace(TurnKey{p.dialogue_id, p.turn_index}, &p).second) {
            fail(ErrorKind::alignment, "duplicate prediction for " + describe({p.dialogue_id, p.turn_index}));
        }
    }
    std::map<TurnKey, const TurnState*> gold_by_key;
    for (const auto& g : golds) {
        const TurnKey key{g.dialogue_id, g.turn_index};
        if (!gold_by_key.emplace(key, &g).second) {
            fail(ErrorKind::alignment, "duplicate gold state for " + describe(key));
        }
        if (!pred_by_key.count(key)) fail(ErrorKind::alignment, "missing prediction for " + describe(key));
    }
    for (const auto& [key, p] : pred_by_key) {
        if (!gold_by_key.count(key)) fail(ErrorKind::alignment, "missing gold state for " + describe(key));
    }
    if (gold_by_key.empty()) fail(ErrorKind::precondition, "no turns to evaluate");

    std::map<std::string, std::set<std::string>> dialogue_domains;
    for (const auto& [key, g] : gold_by_key) {
        auto& domains = dialogue_domains[key.first];
        for (const auto& [slot, value] : g->entries) domains.insert(slot.domain());
    }

    EvalReport report;
    report.slot_scope = slot_scope;
    std::map<std::string, std::size_t> domain_correct;
    for (const auto& [key, g] : gold_by_key) {
        const TurnState& p = *pred_by_key.at(key);
        ++report.turn_count;
        if (equal_within(p.entries, g->entries, slot_scope)) ++report.correct_turns;
        for (const auto& domain : dialogue_domains[key.first]) {
            auto& score = report.per_domain[domain];
            ++score.turn_count;
            if (equal_within(p.entries, g->entries, domain)) ++domain_correct[domain];
        }
    }
    report.jga = static_cast<double>(report.correct_turns) / static_cast<double>(report.turn_count);
    for (auto& [domain, score] : report.per_domain) {
        score.jga = static_cast<double>(domain_correct[domain]) / static_cast<double>(score.turn_count);
    }
    report.seed_runs = {report.jga};
    report.mean = report.jga;
    report.std = 0.0;
    return report;
}

RunStats aggregate_runs(std::span<const double> jgas) {
    if (jgas.empty()) fail(ErrorKind::precondition, "aggregate_runs needs at least one run");
    const double n = static_cast<double>(jgas.size());
    RunStats stats;
    stats.mean = std::accumulate(jgas.begin(), jgas.end(), 0.0) / n;
    if (jgas.size() >= 2) {
        double ss = 0.0;
        for (double x : jgas) ss += (x - stats.mean) * (x - stats.mean);
        stats.std = std::sqrt(ss / (n - 1.0));
    }
    return stats;
}

RunStats aggregate_runs(std::span<const EvalReport> reports) {
    std::vector<double> jgas;
    jgas.reserve(reports.size());
    for (const auto& r : reports) jgas.push_back(r.jga);
    return aggregate_runs(jgas);
}

std::string write_report(const EvalReport& report) {
    json per_domain = json::object();
    for (const auto& [domain, score] : report.per_domain) {
        per_domain[domain] = {{"jga", score.jga}, {"turn_count", score.turn_count}};
    }
    json j = {{"jga", report.jga},
              {"correct_turns", report.correct_turns},
              {"turn_count", report.turn_count},
              {"slot_scope", report.slot_scope ? json(*report.slot_scope) : json(nullptr)},
              {"per_domain", per_domain},
              {"seed_runs", report.seed_runs},
              {"mean", report.mean},
              {"std", report.std}};
    return j.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Selection analysis

const char* to_string(SelectionAxis axis) noexcept {
    return axis == SelectionAxis::domain ? "domain" : "slot";
}

std::uint64_t SelectionMatrix::total() const {
    std::uint64_t t = 0;
    for (const auto& row : counts) t = std::accumulate(row.begin(), row.end(), t);
    return t;
}

namespace {

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

}  // namespace

std::string SelectionMatrix::to_csv() const {
    std::string out = to_string(axis);
    for (const auto& l : labels) out += "," + csv_field(l);
    out += "\n";
    for (std::size_t r = 0; r < labels.size(); ++r) {
        out += csv_field(labels[r]);
        for (auto c : counts[r]) out += "," + std::to_string(c);
        out += "\n";
    }
    return out;
}

SelectionSummary selection_analysis(std::span<const SelectionLog> logs, SelectionAxis axis,
                                    std::span<const std::string> extra_labels) {
    if (logs.empty()) fail(ErrorKind::precondition, "selection analysis needs at least one logged query");
    auto label_of = [axis](const SlotId& s) -> const std::string& {
        return axis == SelectionAxis::domain ? s.domain() : s.str();
    };

    std::set<std::string> label_set(extra_labels.begin(), extra_labels.end());
    for (const auto& log : logs) {
        label_set.insert(label_of(log.query));
        for (const auto& r : log.retrieved) label_set.insert(label_of(r));
    }

    SelectionSummary summary;
    auto& m = summary.matrix;
    m.axis = axis;
    m.labels.assign(label_set.begin(), label_set.end());
    m.counts.assign(m.labels.size(), std::vector<std::uint64_t>(m.labels.size(), 0));
    auto index_of = [&](const std::string& l) {
        return static_cast<std::size_t>(std::lower_bound(m.labels.begin(), m.labels.end(), l) - m.labels.begin());
    };

    std::size_t same_slot = 0;
    std::size_t same_domain = 0;
    for (const auto& log : logs) {
        const std::size_t row = index_of(label_of(log.query));
        for (const auto& r : log.retrieved) {
            ++m.counts[row][index_of(label_of(r))];
            ++summary.retrieved;
            if (r == log.query) ++same_slot;
            if (r.domain() == log.query.domain()) ++same_domain;
        }
    }
    summary.queries = logs.size();
    if (summary.retrieved > 0) {
        summary.same_slot_fraction = static_cast<double>(same_slot) / static_cast<double>(summary.retrieved);
        summary.same_domain_fraction = static_cast<double>(same_domain) / static_cast<double>(summary.retrieved);
    }
    return summary;
}

std::string write_selection_json(const SelectionSummary& summary) {
    json j = {{"axis", to_string(summary.matrix.axis)},
              {"labels", summary.matrix.labels},
              {"counts", summary.matrix.counts},
              {"queries", summary.queries},
              {"retrieved", summary.retrieved},
              {"same_slot_fraction", summary.same_slot_fraction},
              {"same_domain_fraction", summary.same_domain_fraction}};
    return j.dump(2) + "\n";
}

}  // namespace district
