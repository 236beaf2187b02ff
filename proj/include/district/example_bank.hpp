#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "district/corpus.hpp"

namespace district {

/// One labeled single-turn snippet: a (system, user) exchange together with a
/// slot whose value that exchange introduced or changed.
struct SingleTurnExample {
    std::string id;                // "<dialogue id>:<turn index>:<domain-name>"
    std::string dialogue_id;
    std::size_t turn_index = 0;
    std::string domain;
    std::string system_text;
    std::string user_text;
    SlotId slot;
    std::string value;
    std::string rendered_text;

    friend bool operator==(const SingleTurnExample&, const SingleTurnExample&) = default;
};

/// Text substituted for an empty system utterance.
inline constexpr std::string_view kEmptySystemToken = "none";

/// "[system] <sys> [user] <user> [slot] <domain-name> [value] <value>"
std::string render_example(std::string_view system_text, std::string_view user_text,
                           const SlotId& slot, std::string_view value);

struct RenderedExampleFields {
    std::string system_text;
    std::string user_text;
    SlotId slot;
    std::string value;
};

/// Inverse of render_example. Throws a parse error on text outside the grammar.
RenderedExampleFields parse_rendered_example(std::string_view rendered);

std::string example_id(std::string_view dialogue_id, std::size_t turn_index, const SlotId& slot);

/// Emits one example per state delta: a slot whose value is new or changed
/// relative to the previous turn. Deletions emit nothing.
std::vector<SingleTurnExample> build_bank(const std::vector<Dialogue>& train);

/// JSON-lines, one example per line.
std::string write_bank(const std::vector<SingleTurnExample>& bank);
/// Reads JSON-lines and re-checks that rendered_text matches the fields.
std::vector<SingleTurnExample> read_bank(std::string_view jsonl);

}  // namespace district
