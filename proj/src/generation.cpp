#include "district/generation.hpp"

#include <algorithm>
#include <map>

#include <json.hpp>

#include "district/error.hpp"
#include "district/http.hpp"
#include "district/parallel.hpp"
#include "district/rng.hpp"
#include "district/text.hpp"

namespace district {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Mock oracle

MockOracle::MockOracle(const std::vector<Dialogue>& corpus, double accuracy, std::uint64_t seed)
    : accuracy_(accuracy), seed_(seed) {
    if (!(accuracy >= 0.0 && accuracy <= 1.0)) {
        fail(ErrorKind::config, "mock oracle accuracy must be in [0, 1]");
    }
    for (const auto& d : corpus) {
        for (std::size_t t = 0; t < d.turns.size(); ++t) {
            auto key = render_turns(d, 0, t);
            auto [it, inserted] = by_context_.emplace(key, Location{&d, t});
            if (!inserted && it->second.dialogue->turns[it->second.turn].gold_state != d.turns[t].gold_state) {
                ambiguous_.insert(std::move(key));
            }
        }
    }
}

std::vector<std::string> MockOracle::generate(std::span<const std::string> inputs) const {
    std::vector<std::string> out;
    out.reserve(inputs.size());
    for (const auto& input : inputs) {
        ParsedPrompt prompt;
        try {
            prompt = parse_prompt(input);
        } catch (const Error& e) {
            fail(ErrorKind::contract, std::string("mock oracle cannot parse prompt: ") + e.what());
        }
        auto it = by_context_.find(prompt.context);
        if (it == by_context_.end()) {
            fail(ErrorKind::contract, "mock oracle has no dialogue with context \"" + prompt.context + "\"");
        }
        if (ambiguous_.count(prompt.context)) {
            fail(ErrorKind::contract, "mock oracle context maps to conflicting gold states: \"" +
                                          prompt.context + "\"");
        }
        const std::string key = prompt.context + " [slot] " + prompt.slot.str();
        SplitMix64 coin(mix64(seed_) ^ fnv1a64(key));
        const bool correct = coin.uniform() < accuracy_;
        out.push_back(correct ? target_for(*it->second.dialogue, it->second.turn, prompt.slot)
                              : std::string(kWrongValue));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Remote generator

std::vector<std::string> remote_generate(const std::string& endpoint, std::span<const std::string> inputs,
                                         const RemoteOptions& options) {
    if (inputs.empty()) return {};
    json body = {{"inputs", json::array()}};
    for (const auto& s : inputs) body["inputs"].push_back(s);
    const json reply = http::post_json(endpoint, "/generate", body, options);

    auto outputs = reply.find("outputs");
    if (outputs == reply.end() || !outputs->is_array()) {
        fail(ErrorKind::protocol, "/generate reply lacks an \"outputs\" array");
    }
    if (outputs->size() != inputs.size()) {
        fail(ErrorKind::protocol, "/generate returned " + std::to_string(outputs->size()) + " outputs for " +
                                      std::to_string(inputs.size()) + " inputs");
    }
    std::vector<std::string> out;
    out.reserve(inputs.size());
    for (const auto& o : *outputs) {
        if (!o.is_string()) fail(ErrorKind::protocol, "/generate output is not a string");
        out.push_back(o.get<std::string>());
    }
    return out;
}

namespace {

double finetune_call(const std::string& endpoint, json pairs, int epochs, std::uint64_t seed,
                     const RemoteOptions& options) {
    if (epochs < 0) fail(ErrorKind::config, "epochs must be >= 0");
    const json body = {{"pairs_path_or_inline", std::move(pairs)}, {"epochs", epochs}, {"seed", seed}};
    const json reply = http::post_json(endpoint, "/finetune", body, options);
    auto loss = reply.find("final_loss");
    if (loss == reply.end() || !loss->is_number()) {
        fail(ErrorKind::protocol, "/finetune reply lacks a numeric \"final_loss\"");
    }
    return loss->get<double>();
}

}  // namespace

double remote_finetune(const std::string& endpoint, const std::vector<PromptInstance>& pairs, int epochs,
                       std::uint64_t seed, const RemoteOptions& options) {
    const std::string jsonl = write_training_pairs(pairs);
    json inline_pairs = json::array();
    for (const auto line : split_lines(jsonl)) inline_pairs.push_back(json::parse(line));
    return finetune_call(endpoint, std::move(inline_pairs), epochs, seed, options);
}

double remote_finetune(const std::string& endpoint, const std::string& pairs_path, int epochs,
                       std::uint64_t seed, const RemoteOptions& options) {
    return finetune_call(endpoint, pairs_path, epochs, seed, options);
}

// ---------------------------------------------------------------------------
// Prediction

PredictionRun predict_states(const std::vector<Dialogue>& dialogues, const Ontology& ontology,
                             const Retriever* retriever, const QueryOptions& query_options,
                             const Generator& generator, std::size_t k,
                             const std::optional<std::string>& domain_filter, const PredictOptions& options) {
    if (k > 0 && retriever == nullptr) fail(ErrorKind::precondition, "prediction with k > 0 needs a retriever");
    if (options.batch_size == 0) fail(ErrorKind::config, "batch size must be positive");

    std::map<std::string, const Dialogue*> by_id;
    for (const auto& d : dialogues) by_id.emplace(d.id, &d);

    const auto queries = enumerate_queries(dialogues, ontology, domain_filter);
    auto provenance = [&](std::size_t i) {
        const auto& q = queries[i];
        return "dialogue " + q.dialogue_id + " turn " + std::to_string(q.turn_index) + " slot " + q.slot.str();
    };

    std::vector<std::string> prompts(queries.size());
    std::vector<RetrievalRecord> records(k > 0 ? queries.size() : 0);
    parallel_for(queries.size(), options.workers, [&](std::size_t i) {
        const auto& q = queries[i];
        const Dialogue& dialogue = *by_id.at(q.dialogue_id);
        std::vector<const SingleTurnExample*> examples;
        if (k > 0) {
            auto query = build_query(dialogue, q.turn_index, q.slot, query_options.mode);
            query.exclude_domains = query_options.exclude_domains;
            RetrievedSet set;
            try {
                set = retriever->retrieve(query, k);
            } catch (const Error& e) {
                fail(e.kind(), provenance(i) + ": " + e.what());
            }
            RetrievalRecord& rec = records[i];
            rec.dialogue_id = q.dialogue_id;
            rec.turn_index = q.turn_index;
            rec.query_slot = q.slot;
            for (const auto& item : set.items) {
                const auto& e = retriever->bank()[item.bank_index];
                examples.push_back(&e);
                rec.example_ids.push_back(item.example_id);
                rec.example_slots.push_back(e.slot);
                rec.scores.push_back(item.score);
            }
        }
        prompts[i] = assemble_prompt(examples, dialogue, q.turn_index, q.slot);
    });

    std::vector<std::string> outputs;
    outputs.reserve(prompts.size());
    for (std::size_t start = 0; start < prompts.size(); start += options.batch_size) {
        const std::size_t n = std::min(options.batch_size, prompts.size() - start);
        std::vector<std::string> batch;
        try {
            batch = generator.generate(std::span<const std::string>(prompts).subspan(start, n));
        } catch (const Error& e) {
            fail(e.kind(), "generating for " + provenance(start) + " (batch of " + std::to_string(n) +
                               "): " + e.what());
        }
        if (batch.size() != n) {
            fail(ErrorKind::contract, generator.name() + " returned " + std::to_string(batch.size()) +
                                          " outputs for " + std::to_string(n) + " inputs");
        }
        for (auto& o : batch) outputs.push_back(std::move(o));
    }

    // one state per turn, including turns with no scoped slots
    PredictionRun run;
    run.generator_inputs = prompts.size();
    std::map<std::pair<std::string, std::size_t>, DialogueState> states;
    for (const auto& [id, d] : by_id) {
        for (const auto& t : d->turns) states[{id, t.index}];
    }
    for (std::size_t i = 0; i < queries.size(); ++i) {
        auto value = normalize_value(outputs[i]);
        if (!value) continue;
        states[{queries[i].dialogue_id, queries[i].turn_index}][queries[i].slot] = std::move(*value);
    }
    for (auto& [key, entries] : states) run.states.push_back({key.first, key.second, std::move(entries)});
    run.retrievals = std::move(records);
    return run;
}

// ---------------------------------------------------------------------------
// Persistence

std::string write_states(const std::vector<TurnState>& states) {
    std::string out;
    for (const auto& s : states) {
        json state = json::object();
        for (const auto& [slot, value] : s.entries) state[slot.str()] = value;
        out += json{{"dialogue_id", s.dialogue_id}, {"turn", s.turn_index}, {"state", state}}.dump();
        out += '\n';
    }
    return out;
}

std::vector<TurnState> read_states(std::string_view jsonl) {
    std::vector<TurnState> out;
    std::size_t line_no = 0;
    for (const auto line : split_lines(jsonl)) {
        ++line_no;
        try {
            const json j = json::parse(line);
            TurnState s;
            s.dialogue_id = j.at("dialogue_id").get<std::string>();
            s.turn_index = j.at("turn").get<std::size_t>();
            for (const auto& [key, value] : j.at("state").items()) {
                if (auto v = normalize_value(value.get<std::string>())) s.entries[SlotId::parse(key)] = *v;
            }
            out.push_back(std::move(s));
        } catch (const json::parse_error& e) {
            fail(ErrorKind::parse, "state line " + std::to_string(line_no) + ": " + e.what());
        } catch (const std::exception& e) {
            fail(ErrorKind::schema, "state line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

std::string write_retrievals(const std::vector<RetrievalRecord>& records) {
    std::string out;
    for (const auto& r : records) {
        json examples = json::array();
        for (std::size_t i = 0; i < r.example_ids.size(); ++i) {
            examples.push_back({{"id", r.example_ids[i]}, {"slot", r.example_slots[i].str()}, {"score", r.scores[i]}});
        }
        out += json{{"dialogue_id", r.dialogue_id},
                    {"turn", r.turn_index},
                    {"slot", r.query_slot.str()},
                    {"examples", examples}}
                   .dump();
        out += '\n';
    }
    return out;
}

std::vector<RetrievalRecord> read_retrievals(std::string_view jsonl) {
    std::vector<RetrievalRecord> out;
    std::size_t line_no = 0;
    for (const auto line : split_lines(jsonl)) {
        ++line_no;
        try {
            const json j = json::parse(line);
            RetrievalRecord r;
            r.dialogue_id = j.at("dialogue_id").get<std::string>();
            r.turn_index = j.at("turn").get<std::size_t>();
            r.query_slot = SlotId::parse(j.at("slot").get<std::string>());
            for (const auto& e : j.at("examples")) {
                r.example_ids.push_back(e.at("id").get<std::string>());
                r.example_slots.push_back(SlotId::parse(e.at("slot").get<std::string>()));
                r.scores.push_back(e.at("score").get<double>());
            }
            out.push_back(std::move(r));
        } catch (const json::parse_error& e) {
            fail(ErrorKind::parse, "retrieval line " + std::to_string(line_no) + ": " + e.what());
        } catch (const std::exception& e) {
            fail(ErrorKind::schema, "retrieval line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

}  // namespace district
