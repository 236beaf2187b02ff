#include "district/example_bank.hpp"

#include <sstream>

#include <json.hpp>

#include "district/error.hpp"
#include "district/text.hpp"

namespace district {

using nlohmann::json;

std::string render_example(std::string_view system_text, std::string_view user_text,
                           const SlotId& slot, std::string_view value) {
    std::string out;
    out.reserve(system_text.size() + user_text.size() + value.size() + slot.str().size() + 40);
    out += "[system] ";
    out += system_text.empty() ? kEmptySystemToken : system_text;
    out += " [user] ";
    out += user_text;
    out += " [slot] ";
    out += slot.str();
    out += " [value] ";
    out += value;
    return out;
}

RenderedExampleFields parse_rendered_example(std::string_view rendered) {
    auto bad = [&](const char* why) -> RenderedExampleFields {
        fail(ErrorKind::parse, std::string("rendered example: ") + why + ": \"" +
                                   std::string(rendered) + "\"");
    };
    constexpr std::string_view head = "[system] ";
    constexpr std::string_view user = " [user] ";
    constexpr std::string_view slot = " [slot] ";
    constexpr std::string_view value = " [value] ";

    if (rendered.substr(0, head.size()) != head) return bad("missing [system] block");
    const auto u = rendered.find(user, head.size());
    if (u == std::string_view::npos) return bad("missing [user] block");
    const auto s = rendered.find(slot, u + user.size());
    if (s == std::string_view::npos) return bad("missing [slot] block");
    const auto v = rendered.find(value, s + slot.size());
    if (v == std::string_view::npos) return bad("missing [value] block");

    RenderedExampleFields out;
    out.system_text = std::string(rendered.substr(head.size(), u - head.size()));
    out.user_text = std::string(rendered.substr(u + user.size(), s - u - user.size()));
    const auto slot_text = rendered.substr(s + slot.size(), v - s - slot.size());
    try {
        out.slot = SlotId::parse(slot_text);
    } catch (const Error&) {
        return bad("malformed slot");
    }
    if (out.slot.str() != slot_text) return bad("slot is not in canonical form");
    out.value = std::string(rendered.substr(v + value.size()));
    return out;
}

std::string example_id(std::string_view dialogue_id, std::size_t turn_index, const SlotId& slot) {
    std::string id(dialogue_id);
    id += ':';
    id += std::to_string(turn_index);
    id += ':';
    id += slot.str();
    return id;
}

std::vector<SingleTurnExample> build_bank(const std::vector<Dialogue>& train) {
    std::vector<SingleTurnExample> bank;
    for (const auto& dialogue : train) {
        const DialogueState empty;
        const DialogueState* previous = &empty;
        for (const auto& turn : dialogue.turns) {
            for (const auto& [slot, value] : turn.gold_state) {
                auto it = previous->find(slot);
                if (it != previous->end() && it->second == value) continue;
                SingleTurnExample e;
                e.id = example_id(dialogue.id, turn.index, slot);
                e.dialogue_id = dialogue.id;
                e.turn_index = turn.index;
                e.domain = slot.domain();
                e.system_text = turn.system.text;
                e.user_text = turn.user.text;
                e.slot = slot;
                e.value = value;
                e.rendered_text = render_example(e.system_text, e.user_text, e.slot, e.value);
                bank.push_back(std::move(e));
            }
            previous = &turn.gold_state;
        }
    }
    return bank;
}

std::string write_bank(const std::vector<SingleTurnExample>& bank) {
    std::string out;
    for (const auto& e : bank) {
        json j = {{"id", e.id},
                  {"dialogue_id", e.dialogue_id},
                  {"turn_index", e.turn_index},
                  {"domain", e.domain},
                  {"system_text", e.system_text},
                  {"user_text", e.user_text},
                  {"slot", e.slot.str()},
                  {"value", e.value},
                  {"rendered_text", e.rendered_text}};
        out += j.dump();
        out += '\n';
    }
    return out;
}

std::vector<SingleTurnExample> read_bank(std::string_view jsonl) {
    std::vector<SingleTurnExample> bank;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos < jsonl.size()) {
        auto end = jsonl.find('\n', pos);
        if (end == std::string_view::npos) end = jsonl.size();
        const auto line = jsonl.substr(pos, end - pos);
        pos = end + 1;
        ++line_no;
        if (collapse_whitespace(line).empty()) continue;

        const std::string where = "bank line " + std::to_string(line_no);
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            fail(ErrorKind::parse, where + ": " + e.what());
        }
        SingleTurnExample e;
        try {
            e.id = j.at("id").get<std::string>();
            e.dialogue_id = j.at("dialogue_id").get<std::string>();
            e.turn_index = j.at("turn_index").get<std::size_t>();
            e.domain = j.at("domain").get<std::string>();
            e.system_text = j.at("system_text").get<std::string>();
            e.user_text = j.at("user_text").get<std::string>();
            e.slot = SlotId::parse(j.at("slot").get<std::string>());
            e.value = j.at("value").get<std::string>();
            e.rendered_text = j.at("rendered_text").get<std::string>();
        } catch (const json::exception& ex) {
            fail(ErrorKind::schema, where + ": " + ex.what());
        } catch (const Error& ex) {
            fail(ErrorKind::schema, where + ": " + ex.what());
        }
        if (e.rendered_text != render_example(e.system_text, e.user_text, e.slot, e.value)) {
            fail(ErrorKind::schema, where + ": rendered_text does not match its fields");
        }
        if (e.value.empty() || !normalize_value(e.value)) {
            fail(ErrorKind::schema, where + ": example value is empty or absent");
        }
        if (e.domain != e.slot.domain()) {
            fail(ErrorKind::schema, where + ": domain does not match slot");
        }
        bank.push_back(std::move(e));
    }
    return bank;
}

}  // namespace district
