#include <doctest.h>

#include <algorithm>
#include <set>

#include "district/corpus.hpp"
#include "district/error.hpp"
#include "district/io.hpp"
#include "synthetic.hpp"

using namespace district;

namespace {

const std::string kData = DISTRICT_TEST_DATA;

Ontology fixture_ontology() { return parse_ontology(read_file(kData + "/ontology.json")); }

ErrorKind kind_of(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.kind();
    }
    FAIL("expected an error");
    return ErrorKind::io;
}

std::string error_text(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.what();
    }
    return {};
}

}  // namespace

TEST_CASE("normalize_value") {
    CHECK(normalize_value("  Centre ") == "centre");
    CHECK(normalize_value("not mentioned") == std::nullopt);
    CHECK(normalize_value("None") == std::nullopt);
    CHECK(normalize_value("do not care") == "dontcare");
    CHECK(normalize_value("Dont  Care") == "dontcare");
    CHECK(normalize_value("dontcare") == "dontcare");
    CHECK(normalize_value("a\t\nb") == "a b");
    CHECK(normalize_value("") == "");
}

TEST_CASE("normalize_value is idempotent") {
    std::uint64_t state = 17;
    const char* seeds[] = {"  Not Mentioned", "DO  not care ", "\tCentre\n", "Ünïcode  Text", "none "};
    for (const char* s : seeds) {
        auto once = normalize_value(s);
        if (once) CHECK(normalize_value(*once) == once);
    }
    for (int i = 0; i < 500; ++i) {
        std::string raw = testing::random_words(state, 0, 5);
        // sprinkle case and whitespace noise
        for (auto& c : raw) {
            if ((state >> (c % 13)) & 1) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
        }
        raw = "  " + raw + " \t";
        auto once = normalize_value(raw);
        REQUIRE(once);
        CHECK(normalize_value(*once) == once);
    }
}

TEST_CASE("SlotId canonical form") {
    SlotId s(" Hotel ", "Price   Range");
    CHECK(s.domain() == "hotel");
    CHECK(s.name() == "price range");
    CHECK(s.str() == "hotel-price range");
    CHECK(SlotId::parse("hotel-price range") == s);
    CHECK(SlotId::parse("taxi-leave-at").name() == "leave-at");
    CHECK(kind_of([] { SlotId::parse("nodash"); }) == ErrorKind::precondition);
    CHECK(kind_of([] { SlotId("", "x"); }) == ErrorKind::precondition);
}

TEST_CASE("ontology parsing and validation") {
    const auto onto = fixture_ontology();
    CHECK(onto.size() == 8);
    CHECK(onto.domains() == std::set<std::string>{"hotel", "train"});
    CHECK(onto.contains(SlotId("hotel", "price range")));
    CHECK(onto.slot_ids(std::string("train")).size() == 4);
    CHECK(onto.find(SlotId("hotel", "stars"))->kind == SlotKind::categorical);

    CHECK(kind_of([] { parse_ontology(R"({"slots": []})"); }) == ErrorKind::schema);
    CHECK(kind_of([] {
              parse_ontology(R"({"slots": [{"domain":"a","name":"b","kind":"span"},
                                           {"domain":"A","name":"B","kind":"span"}]})");
          }) == ErrorKind::schema);
    CHECK(kind_of([] { parse_ontology(R"({"slots": [{"domain":"a","name":"b","kind":"categorical"}]})"); }) ==
          ErrorKind::schema);
    CHECK(kind_of([] {
              parse_ontology(R"({"slots": [{"domain":"a","name":"b","kind":"span","values":["x"]}]})");
          }) == ErrorKind::schema);
    const auto dedup = parse_ontology(
        R"({"slots": [{"domain":"a","name":"b","kind":"categorical","values":["x","X "," x"]}]})");
    CHECK(dedup.slots().front().candidate_values == std::vector<std::string>{"x"});
}

TEST_CASE("parse_corpus: two-turn dialogue") {
    const auto onto = fixture_ontology();
    const auto dialogues = parse_corpus(R"([{"id": "d1", "turns": [
        {"system": "", "user": "a hotel in the centre", "state": {"hotel-area": "centre"}},
        {"system": "stars?", "user": "four", "state": {"hotel-area": "centre", "hotel-stars": "4"}}]}])",
                                        onto);
    REQUIRE(dialogues.size() == 1);
    const auto& d = dialogues.front();
    CHECK(d.id == "d1");
    CHECK(d.domains == std::set<std::string>{"hotel"});
    REQUIRE(d.turns.size() == 2);
    CHECK(d.turns[0].index == 0);
    CHECK(d.turns[1].index == 1);
    CHECK(d.turns[0].system.text.empty());
    CHECK(d.turns[0].system.speaker == Speaker::system);
    CHECK(d.turns[1].user.speaker == Speaker::user);
    CHECK(d.turns[1].gold_state.size() == 2);
    CHECK(d.turns[1].gold_state.at(SlotId("hotel", "stars")) == "4");
}

TEST_CASE("parse_corpus: errors") {
    const auto onto = fixture_ontology();
    SUBCASE("unknown slot names the slot and dialogue") {
        const auto msg = error_text([&] {
            parse_corpus(R"([{"id": "dx", "turns": [{"system": "", "user": "u",
                             "state": {"hotel-parking": "yes"}}]}])",
                         onto);
        });
        CHECK(msg.find("hotel-parking") != std::string::npos);
        CHECK(msg.find("dx") != std::string::npos);
        CHECK(kind_of([&] {
                  parse_corpus(R"([{"id": "dx", "turns": [{"system": "", "user": "u",
                                   "state": {"hotel-parking": "yes"}}]}])",
                               onto);
              }) == ErrorKind::schema);
    }
    SUBCASE("malformed JSON reports the byte offset") {
        const std::string bad = R"([{"id": "d1", "turns": [}])";
        CHECK(kind_of([&] { parse_corpus(bad, onto); }) == ErrorKind::parse);
        CHECK(error_text([&] { parse_corpus(bad, onto); }).find("byte offset 24") != std::string::npos);
    }
    SUBCASE("invalid UTF-8") {
        std::string bytes = R"([{"id": "d1", "turns": [{"system": "", "user": "caf)";
        bytes += '\xC3';
        bytes += R"(", "state": {}}]}])";
        CHECK(kind_of([&] { parse_corpus(bytes, onto); }) == ErrorKind::encoding);
        CHECK(error_text([&] { parse_corpus(bytes, onto); }).find("offset 51") != std::string::npos);
    }
    SUBCASE("schema violations") {
        CHECK(kind_of([&] { parse_corpus(R"({"id": 1})", onto); }) == ErrorKind::schema);
        CHECK(kind_of([&] { parse_corpus(R"([{"id": "a"}])", onto); }) == ErrorKind::schema);
        CHECK(kind_of([&] {
                  parse_corpus(R"([{"id": "a", "turns": [{"system": "", "user": "  ", "state": {}}]}])", onto);
              }) == ErrorKind::schema);
        CHECK(kind_of([&] {
                  parse_corpus(R"([{"id": "a", "turns": [{"system": "", "user": "x", "state": {"hotel-area": 3}}]}])",
                               onto);
              }) == ErrorKind::schema);
        CHECK(kind_of([&] {
                  parse_corpus(R"([{"id": "a", "turns": [{"system": "", "user": "x [slot] y", "state": {}}]}])",
                               onto);
              }) == ErrorKind::schema);
        CHECK(kind_of([&] {
                  parse_corpus(R"([{"id": "a", "turns": []}, {"id": "a", "turns": []}])", onto);
              }) == ErrorKind::schema);
    }
}

TEST_CASE("parse_corpus: normalization, deletion and the 10-dialogue fixture") {
    const auto onto = fixture_ontology();
    const auto dialogues = parse_corpus(read_file(kData + "/corpus_10.json"), onto);
    // frozen from tests/data/fixture_counts.py
    CHECK(dialogues.size() == 10);
    std::set<std::string> domains;
    std::size_t turns = 0;
    for (const auto& d : dialogues) {
        domains.insert(d.domains.begin(), d.domains.end());
        turns += d.turns.size();
    }
    CHECK(domains == std::set<std::string>{"hotel", "train"});
    CHECK(turns == 28);

    const auto& fx08 = dialogues[7];
    CHECK(fx08.turns[0].gold_state.count(SlotId("hotel", "area")) == 0);  // "not mentioned" dropped
    const auto& fx10 = dialogues[9];
    CHECK(fx10.turns[0].user.text == "I want the Gonville Hotel.");
    CHECK(fx10.turns[0].gold_state.at(SlotId("hotel", "name")) == "gonville hotel");
    CHECK(fx10.turns[2].gold_state.count(SlotId("hotel", "name")) == 0);  // deletion kept verbatim
    CHECK(fx10.domains == std::set<std::string>{"hotel", "train"});
    CHECK(dialogues[2].turns[2].gold_state.at(SlotId("hotel", "stars")) == "dontcare");

    // canonical write/parse is a fixed point
    const auto text = write_corpus(dialogues);
    CHECK(write_corpus(parse_corpus(text, onto)) == text);
}

TEST_CASE("Fraction parsing") {
    CHECK(Fraction::parse("0.01").floor_times(8400) == 84);
    CHECK(Fraction::parse("1%").floor_times(8400) == 84);
    CHECK(Fraction::parse("1/100").str() == "1/100");
    CHECK(Fraction::parse("0.29").floor_times(100) == 29);
    CHECK(Fraction::parse("1").is_one());
    CHECK(Fraction::parse("10%").floor_times(50) == 5);
    for (const char* bad : {"0", "1.5", "-0.1", "abc", "", "0/0", "3/2"}) {
        CAPTURE(bad);
        CHECK(kind_of([&] { Fraction::parse(bad); }) == ErrorKind::config);
    }
}

TEST_CASE("SplitSpec validation") {
    CHECK(kind_of([] { SplitSpec{SplitMode::zero_shot, std::nullopt, {}, 0}.validate(); }) == ErrorKind::config);
    CHECK(kind_of([] { SplitSpec{SplitMode::full_shot, std::string("hotel"), {}, 0}.validate(); }) ==
          ErrorKind::config);
    CHECK(kind_of([] { SplitSpec{SplitMode::multi_domain_few_shot, std::nullopt, Fraction{1, 1}, 0}.validate(); }) ==
          ErrorKind::config);
    SplitSpec{SplitMode::cross_domain_few_shot, std::string("hotel"), Fraction{1, 10}, 0}.validate();
}

TEST_CASE("make_split modes") {
    const auto corpus = testing::synthetic_corpus({.dialogues = 200, .multi_domain = 0.5}, 3);
    const std::string target = "hotel";
    std::size_t with_target = 0;
    for (const auto& d : corpus) with_target += d.domains.count(target);
    REQUIRE(with_target > 10);

    SUBCASE("zero-shot purity") {
        const auto split = make_split(corpus, {SplitMode::zero_shot, target, {}, 1});
        CHECK(split.train.size() == corpus.size() - with_target);
        CHECK(split.heldout.size() == with_target);
        for (const auto& d : split.train) CHECK(d.domains.count(target) == 0);
    }
    SUBCASE("cross-domain few-shot adds floor(fraction * pool) target dialogues") {
        const auto split = make_split(corpus, {SplitMode::cross_domain_few_shot, target, Fraction{1, 10}, 1});
        const std::size_t expect = std::max<std::size_t>(1, with_target / 10);
        CHECK(split.info.sampled == expect);
        CHECK(split.train.size() == corpus.size() - with_target + expect);
    }
    SUBCASE("multi-domain few-shot samples the whole corpus") {
        const auto split = make_split(corpus, {SplitMode::multi_domain_few_shot, std::nullopt, Fraction{1, 20}, 1});
        CHECK(split.train.size() == 10);
        CHECK(split.heldout.size() == 190);
    }
    SUBCASE("full shot keeps everything in input order") {
        const auto split = make_split(corpus, {SplitMode::full_shot, std::nullopt, {}, 1});
        REQUIRE(split.train.size() == corpus.size());
        for (std::size_t i = 0; i < corpus.size(); ++i) CHECK(split.train[i].id == corpus[i].id);
    }
    SUBCASE("minimum of one sampled dialogue") {
        const auto split = make_split(corpus, {SplitMode::cross_domain_few_shot, target, Fraction{1, 1000}, 1});
        CHECK(split.info.sampled == 1);
    }
}

TEST_CASE("make_split errors") {
    const auto pool = testing::pool_of(5, "hotel", "h");
    CHECK(kind_of([&] { make_split(pool, {SplitMode::zero_shot, std::string("hotel"), {}, 0}); }) ==
          ErrorKind::split);
    CHECK(kind_of([&] { make_split(pool, {SplitMode::zero_shot, std::string("train"), {}, 0}); }) ==
          ErrorKind::split);
    CHECK(kind_of([&] { make_split({}, {SplitMode::full_shot, std::nullopt, {}, 0}); }) == ErrorKind::split);
}

TEST_CASE("make_split determinism and nesting") {
    auto pool = testing::pool_of(50, "hotel", "t");
    auto other = testing::pool_of(30, "train", "o");
    pool.insert(pool.end(), other.begin(), other.end());

    auto sampled = [&](Fraction f, std::uint64_t seed) {
        auto s = make_split(pool, {SplitMode::cross_domain_few_shot, std::string("hotel"), f, seed});
        std::set<std::string> ids;
        for (const auto& d : s.train) {
            if (d.domains.count("hotel")) ids.insert(d.id);
        }
        return ids;
    };
    CHECK(sampled({1, 10}, 7).size() == 5);
    CHECK(sampled({1, 10}, 7) == sampled({1, 10}, 7));
    CHECK(sampled({1, 10}, 7) != sampled({1, 10}, 8));

    // input order does not matter: the pool is sorted by id before shuffling
    auto reversed = pool;
    std::reverse(reversed.begin(), reversed.end());
    auto a = make_split(pool, {SplitMode::cross_domain_few_shot, std::string("hotel"), {1, 10}, 3});
    auto b = make_split(reversed, {SplitMode::cross_domain_few_shot, std::string("hotel"), {1, 10}, 3});
    std::set<std::string> ia(a.info.train_ids.begin(), a.info.train_ids.end());
    std::set<std::string> ib(b.info.train_ids.begin(), b.info.train_ids.end());
    CHECK(ia == ib);

    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto s1 = sampled({1, 25}, seed);
        const auto s5 = sampled({1, 5}, seed);
        const auto s10 = sampled({1, 2}, seed);
        CHECK(std::includes(s5.begin(), s5.end(), s1.begin(), s1.end()));
        CHECK(std::includes(s10.begin(), s10.end(), s5.begin(), s5.end()));
    }
}

TEST_CASE("enumerate_queries") {
    const auto onto = parse_ontology(R"({"slots": [
        {"domain":"hotel","name":"area","kind":"span"},
        {"domain":"hotel","name":"stars","kind":"span"},
        {"domain":"train","name":"day","kind":"span"},
        {"domain":"train","name":"departure","kind":"span"},
        {"domain":"train","name":"destination","kind":"span"}]})");
    Dialogue d;
    d.id = "d";
    for (std::size_t t = 0; t < 3; ++t) {
        Turn turn;
        turn.index = t;
        turn.user.text = "u";
        d.turns.push_back(turn);
    }
    const std::vector<Dialogue> one{d};
    CHECK(enumerate_queries(one, onto, std::nullopt).size() == 15);
    const auto hotel = enumerate_queries(one, onto, std::string("hotel"));
    CHECK(hotel.size() == 6);
    for (const auto& q : hotel) CHECK(q.slot.domain() == "hotel");
    CHECK(enumerate_queries({}, onto, std::nullopt).empty());

    // ordered by (dialogue id, turn, slot)
    Dialogue a = d;
    a.id = "a";
    const auto both = enumerate_queries({d, a}, onto, std::nullopt);
    CHECK(both.front().dialogue_id == "a");
    CHECK(both.front().slot.str() == "hotel-area");
    CHECK(both[5].turn_index == 1);
}
