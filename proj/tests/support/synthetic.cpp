#include "synthetic.hpp"

#include <filesystem>
#include <map>

#include <json.hpp>

#include "district/rng.hpp"

namespace district::testing {

using nlohmann::json;

namespace {

struct SlotSpec {
    const char* name;
    std::vector<const char*> values;
};

const std::map<std::string, std::vector<SlotSpec>>& schema() {
    static const std::map<std::string, std::vector<SlotSpec>> s = {
        {"attraction",
         {{"area", {"centre", "north", "south", "east", "west"}},
          {"type", {"museum", "college", "park", "theatre", "boat"}},
          {"name", {"kings college", "the fitzwilliam", "punter tours", "botanic garden"}}}},
        {"hotel",
         {{"area", {"centre", "north", "south", "east", "west"}},
          {"price range", {"cheap", "moderate", "expensive"}},
          {"stars", {"1", "2", "3", "4", "5"}},
          {"parking", {"yes", "no"}}}},
        {"restaurant",
         {{"food", {"indian", "italian", "chinese", "british", "thai"}},
          {"price range", {"cheap", "moderate", "expensive"}},
          {"people", {"1", "2", "3", "4", "6", "8"}},
          {"day", {"monday", "tuesday", "friday", "sunday"}}}},
        {"taxi",
         {{"departure", {"the station", "kings college", "the grand hotel", "addenbrookes"}},
          {"destination", {"the airport", "pizza hut", "the museum", "the cinema"}},
          {"leave at", {"08:15", "10:30", "13:45", "19:00"}}}},
        {"train",
         {{"departure", {"cambridge", "london", "norwich", "ely", "stevenage"}},
          {"destination", {"cambridge", "london", "norwich", "ely", "peterborough"}},
          {"day", {"monday", "wednesday", "thursday", "saturday"}},
          {"leave at", {"06:00", "09:30", "12:15", "17:45"}}}},
    };
    return s;
}

const char* kFiller[] = {"please", "thanks", "okay", "great", "sure", "also", "perhaps", "maybe",
                         "that", "sounds", "good", "fine", "i", "would", "like", "need"};

}  // namespace

std::string synthetic_ontology_json() {
    json slots = json::array();
    for (const auto& [domain, specs] : schema()) {
        for (const auto& s : specs) {
            slots.push_back({{"domain", domain}, {"name", s.name}, {"kind", "span"}});
        }
    }
    return json{{"slots", slots}}.dump(2);
}

std::string random_words(std::uint64_t& state, std::size_t min_words, std::size_t max_words) {
    SplitMix64 rng(state);
    state = rng.next();
    const std::size_t n = min_words + rng.below(max_words - min_words + 1);
    std::string out;
    for (std::size_t i = 0; i < n; ++i) {
        if (i) out += ' ';
        const std::size_t len = 1 + rng.below(8);
        for (std::size_t c = 0; c < len; ++c) out += static_cast<char>('a' + rng.below(26));
    }
    return out;
}

std::string synthetic_corpus_json(const SyntheticOptions& options, std::uint64_t seed) {
    SplitMix64 rng(mix64(seed));
    std::vector<std::string> domains;
    for (const auto& [d, specs] : schema()) domains.push_back(d);

    json corpus = json::array();
    for (std::size_t i = 0; i < options.dialogues; ++i) {
        const std::string id = options.id_prefix + std::to_string(100000 + i).substr(1);

        std::vector<std::string> touched;
        touched.push_back(options.force_domain.empty() ? domains[rng.below(domains.size())] : options.force_domain);
        if (rng.uniform() < options.multi_domain) {
            std::string second = domains[rng.below(domains.size())];
            if (second != touched.front()) touched.push_back(second);
        }

        const std::size_t n_turns = options.min_turns + rng.below(options.max_turns - options.min_turns + 1);
        std::map<std::string, std::string> state;
        json turns = json::array();
        for (std::size_t t = 0; t < n_turns; ++t) {
            const std::string& domain = touched[t < touched.size() ? t : rng.below(touched.size())];
            const auto& specs = schema().at(domain);

            std::string user;
            if (t == 0) user = "reference " + id + " i am looking for a " + domain;
            const std::size_t updates = (t == 0) ? 1 : rng.below(3);
            for (std::size_t u = 0; u < updates; ++u) {
                const auto& spec = specs[rng.below(specs.size())];
                const std::string value = spec.values[rng.below(spec.values.size())];
                state[domain + "-" + spec.name] = value;
                if (!user.empty()) user += ' ';
                user += std::string(spec.name) + " " + value;
            }
            if (user.empty()) user = kFiller[rng.below(std::size(kFiller))];
            user += " " + std::string(kFiller[rng.below(std::size(kFiller))]);

            std::string system;
            if (t > 0) {
                system = "turn " + std::to_string(t) + " what " +
                         std::string(specs[rng.below(specs.size())].name) + " would you like for the " + domain;
            }
            json js = json::object();
            for (const auto& [k, v] : state) js[k] = v;
            turns.push_back({{"system", system}, {"user", user}, {"state", js}});
        }
        corpus.push_back({{"id", id}, {"turns", turns}});
    }
    return corpus.dump();
}

Ontology synthetic_ontology() { return parse_ontology(synthetic_ontology_json()); }

std::vector<Dialogue> synthetic_corpus(const SyntheticOptions& options, std::uint64_t seed) {
    return parse_corpus(synthetic_corpus_json(options, seed), synthetic_ontology());
}

std::vector<Dialogue> pool_of(std::size_t n, const std::string& domain, const std::string& id_prefix) {
    const SlotId slot(domain, "area");
    std::vector<Dialogue> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        Dialogue d;
        d.id = id_prefix + std::to_string(1000000 + i).substr(1);
        Turn t;
        t.user.text = "need " + domain + " " + d.id;
        t.gold_state[slot] = "centre";
        d.turns.push_back(std::move(t));
        d.domains = {domain};
        out.push_back(std::move(d));
    }
    return out;
}

SingleTurnExample make_example(const std::string& dialogue_id, std::size_t turn, const SlotId& slot,
                               const std::string& system_text, const std::string& user_text,
                               const std::string& value) {
    SingleTurnExample ex;
    ex.id = example_id(dialogue_id, turn, slot);
    ex.dialogue_id = dialogue_id;
    ex.turn_index = turn;
    ex.domain = slot.domain();
    ex.system_text = system_text;
    ex.user_text = user_text;
    ex.slot = slot;
    ex.value = value;
    ex.rendered_text = render_example(system_text, user_text, slot, value);
    return ex;
}

std::vector<SingleTurnExample> random_bank(std::size_t n, std::uint64_t seed) {
    std::vector<std::pair<std::string, std::string>> slots;
    for (const auto& [domain, specs] : schema()) {
        for (const auto& s : specs) slots.emplace_back(domain, s.name);
    }
    std::uint64_t state = mix64(seed);
    SplitMix64 rng(state);
    std::vector<SingleTurnExample> bank;
    bank.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& [domain, name] = slots[rng.below(slots.size())];
        const std::string sys = random_words(state, 0, 6);
        const std::string user = random_words(state, 1, 8) + " " + domain;
        bank.push_back(make_example("r" + std::to_string(100000 + i).substr(1), 0, SlotId(domain, name), sys,
                                    user, random_words(state, 1, 2)));
    }
    return bank;
}

std::string temp_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("district_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir.string();
}

}  // namespace district::testing
