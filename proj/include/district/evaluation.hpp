#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "district/corpus.hpp"

namespace district {

struct DomainScore {
    double jga = 0.0;
    std::size_t turn_count = 0;
};

struct EvalReport {
    double jga = 0.0;
    std::size_t correct_turns = 0;
    std::size_t turn_count = 0;
    std::optional<std::string> slot_scope;
    /// Per domain: turns of dialogues touching the domain, judged on that
    /// domain's slots only.
    std::map<std::string, DomainScore> per_domain;
    std::vector<double> seed_runs;
    double mean = 0.0;
    double std = 0.0;
};

/// A turn counts as correct iff its predicted entries equal the gold entries
/// exactly, both restricted to `slot_scope`'s slots when set. Two empty states
/// are equal. Predictions and golds must cover the same (dialogue, turn) keys.
EvalReport joint_goal_accuracy(std::span<const TurnState> preds, std::span<const TurnState> golds,
                               const std::optional<std::string>& slot_scope = std::nullopt);

struct RunStats {
    double mean = 0.0;
    double std = 0.0;   // sample standard deviation (n - 1); 0 for a single run
};

RunStats aggregate_runs(std::span<const double> jgas);
RunStats aggregate_runs(std::span<const EvalReport> reports);

std::string write_report(const EvalReport& report);

// ---------------------------------------------------------------------------
// Retrieval analysis

enum class SelectionAxis { domain, slot };

const char* to_string(SelectionAxis axis) noexcept;

struct SelectionLog {
    SlotId query;
    std::vector<SlotId> retrieved;
};

/// counts[r][c]: examples with label c retrieved for queries with label r.
struct SelectionMatrix {
    SelectionAxis axis = SelectionAxis::domain;
    std::vector<std::string> labels;
    std::vector<std::vector<std::uint64_t>> counts;

    std::uint64_t total() const;
    std::string to_csv() const;
};

struct SelectionSummary {
    SelectionMatrix matrix;
    std::size_t queries = 0;
    std::size_t retrieved = 0;
    double same_slot_fraction = 0.0;
    double same_domain_fraction = 0.0;
};

/// Tallies one count per retrieved example. Labels are the sorted union of
/// labels seen in the logs and `extra_labels`. Throws on empty logs.
SelectionSummary selection_analysis(std::span<const SelectionLog> logs, SelectionAxis axis,
                                    std::span<const std::string> extra_labels = {});

std::string write_selection_json(const SelectionSummary& summary);

}  // namespace district
