#pragma once

#include <cstddef>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "district/corpus.hpp"
#include "district/example_bank.hpp"
#include "district/retriever.hpp"

namespace district {

/// Target emitted for a slot that is absent from the gold state.
inline constexpr std::string_view kNoneTarget = "none";

struct PromptMeta {
    std::string dialogue_id;
    std::size_t turn_index = 0;
    SlotId slot;
    std::vector<std::string> example_ids;
};

struct PromptInstance {
    std::string input_text;
    std::string target_text;
    PromptMeta meta;
};

/// Model input grammar, blocks separated by single spaces:
///
///   ([example] <rendered example>)* [context] <turns> [slot] <domain-name>
///
/// where <turns> is "[system] ... [user] ..." for every turn up to the query
/// turn. Examples come most relevant first.
std::string assemble_prompt_text(std::span<const std::string> rendered_examples,
                                 std::string_view context_text, const SlotId& slot);

std::string assemble_prompt(std::span<const SingleTurnExample* const> examples,
                            const Dialogue& dialogue, std::size_t turn_index, const SlotId& slot);

struct ParsedPrompt {
    std::vector<std::string> examples;  // rendered example text, prompt order
    std::string context;
    SlotId slot;
};

/// Inverse of assemble_prompt_text. Throws a parse error on anything outside
/// the grammar.
ParsedPrompt parse_prompt(std::string_view input_text);

/// Gold value of `slot` at `turn_index`, or "none".
std::string target_for(const Dialogue& dialogue, std::size_t turn_index, const SlotId& slot);

/// How queries are built for a run.
struct QueryOptions {
    QueryMode mode = QueryMode::whole_context;
    std::set<std::string> exclude_domains;
};

/// One (input, target) pair per (dialogue, turn, slot) in `train`, ordered by
/// (dialogue id, turn, slot). Examples originating from the query's own turn
/// are never retrieved. `retriever` may be null when k == 0.
std::vector<PromptInstance> export_training_pairs(const std::vector<Dialogue>& train,
                                                  const Retriever* retriever,
                                                  const QueryOptions& options,
                                                  const Ontology& ontology, std::size_t k,
                                                  std::size_t workers = 1);

/// JSON-lines: {"input": str, "target": str, "meta": {...}}.
std::string write_training_pairs(const std::vector<PromptInstance>& pairs);

}  // namespace district
