#include "district/prompting.hpp"

#include <algorithm>
#include <unordered_map>

#include <json.hpp>

#include "district/error.hpp"
#include "district/parallel.hpp"

namespace district {

namespace {

constexpr std::string_view kExample = "[example] ";
constexpr std::string_view kContext = "[context] ";
constexpr std::string_view kSlot = " [slot] ";

}  // namespace

std::string assemble_prompt_text(std::span<const std::string> rendered_examples,
                                 std::string_view context_text, const SlotId& slot) {
    std::string out;
    for (const auto& e : rendered_examples) {
        out += kExample;
        out += e;
        out += ' ';
    }
    out += kContext;
    out += context_text;
    out += kSlot;
    out += slot.str();
    return out;
}

std::string assemble_prompt(std::span<const SingleTurnExample* const> examples,
                            const Dialogue& dialogue, std::size_t turn_index, const SlotId& slot) {
    if (turn_index >= dialogue.turns.size()) {
        fail(ErrorKind::precondition, "turn " + std::to_string(turn_index) + " out of range for dialogue " +
                                          dialogue.id);
    }
    std::vector<std::string> rendered;
    rendered.reserve(examples.size());
    for (const auto* e : examples) rendered.push_back(e->rendered_text);
    return assemble_prompt_text(rendered, render_turns(dialogue, 0, turn_index), slot);
}

ParsedPrompt parse_prompt(std::string_view input) {
    auto bad = [&](const char* why) -> ParsedPrompt {
        fail(ErrorKind::parse, std::string("prompt: ") + why);
    };

    // The context block starts either at the very beginning or after " ".
    std::size_t ctx;
    if (input.substr(0, kContext.size()) == kContext) {
        ctx = 0;
    } else {
        const auto marker = input.find(" [context] ");
        if (marker == std::string_view::npos) return bad("missing [context] block");
        ctx = marker + 1;
    }

    ParsedPrompt out;
    if (ctx > 0) {
        // "[example] a [example] b " ; drop the trailing separator
        std::string_view head = input.substr(0, ctx - 1);
        if (head.substr(0, kExample.size()) != kExample) return bad("text before the first block");
        head.remove_prefix(kExample.size());
        for (;;) {
            const auto next = head.find(" [example] ");
            out.examples.emplace_back(head.substr(0, next));
            if (next == std::string_view::npos) break;
            head.remove_prefix(next + 1 + kExample.size());
        }
        for (const auto& e : out.examples) parse_rendered_example(e);
    }

    std::string_view tail = input.substr(ctx + kContext.size());
    const auto slot_pos = tail.rfind(kSlot);
    if (slot_pos == std::string_view::npos) return bad("missing [slot] block");
    out.context = std::string(tail.substr(0, slot_pos));
    if (out.context.find("[slot]") != std::string::npos || out.context.find("[value]") != std::string::npos) {
        return bad("context block contains example markers");
    }
    const auto slot_text = tail.substr(slot_pos + kSlot.size());
    try {
        out.slot = SlotId::parse(slot_text);
    } catch (const Error&) {
        return bad("malformed slot block");
    }
    if (out.slot.str() != slot_text) return bad("slot block is not canonical");
    return out;
}

std::string target_for(const Dialogue& dialogue, std::size_t turn_index, const SlotId& slot) {
    if (turn_index >= dialogue.turns.size()) {
        fail(ErrorKind::precondition, "turn " + std::to_string(turn_index) + " out of range for dialogue " +
                                          dialogue.id);
    }
    const auto& state = dialogue.turns[turn_index].gold_state;
    auto it = state.find(slot);
    return it == state.end() ? std::string(kNoneTarget) : it->second;
}

std::vector<PromptInstance> export_training_pairs(const std::vector<Dialogue>& train,
                                                  const Retriever* retriever,
                                                  const QueryOptions& options,
                                                  const Ontology& ontology, std::size_t k,
                                                  std::size_t workers) {
    if (k > 0 && retriever == nullptr) {
        fail(ErrorKind::precondition, "export with k > 0 needs a retriever");
    }
    std::unordered_map<std::string, const Dialogue*> by_id;
    for (const auto& d : train) by_id.emplace(d.id, &d);

    const auto queries = enumerate_queries(train, ontology, std::nullopt);
    std::vector<PromptInstance> out(queries.size());

    parallel_for(queries.size(), workers, [&](std::size_t i) {
        const auto& q = queries[i];
        const Dialogue& dialogue = *by_id.at(q.dialogue_id);

        std::vector<const SingleTurnExample*> examples;
        PromptInstance& inst = out[i];
        if (k > 0) {
            auto query = build_query(dialogue, q.turn_index, q.slot, options.mode);
            query.exclude_domains = options.exclude_domains;
            query.exclude_sources.insert({q.dialogue_id, q.turn_index});
            RetrievedSet set;
            try {
                set = retriever->retrieve(query, k);
            } catch (const Error& e) {
                fail(e.kind(), "dialogue " + q.dialogue_id + " turn " + std::to_string(q.turn_index) +
                                   " slot " + q.slot.str() + ": " + e.what());
            }
            for (const auto& item : set.items) {
                examples.push_back(&retriever->bank()[item.bank_index]);
                inst.meta.example_ids.push_back(item.example_id);
            }
        }
        inst.input_text = assemble_prompt(examples, dialogue, q.turn_index, q.slot);
        inst.target_text = target_for(dialogue, q.turn_index, q.slot);
        inst.meta.dialogue_id = q.dialogue_id;
        inst.meta.turn_index = q.turn_index;
        inst.meta.slot = q.slot;
    });
    return out;
}

std::string write_training_pairs(const std::vector<PromptInstance>& pairs) {
    std::string out;
    for (const auto& p : pairs) {
        nlohmann::json j = {{"input", p.input_text},
                            {"target", p.target_text},
                            {"meta",
                             {{"dialogue_id", p.meta.dialogue_id},
                              {"turn", p.meta.turn_index},
                              {"slot", p.meta.slot.str()},
                              {"examples", p.meta.example_ids}}}};
        out += j.dump();
        out += '\n';
    }
    return out;
}

}  // namespace district
