#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>

#include "district/error.hpp"
#include "district/retriever.hpp"
#include "synthetic.hpp"

using namespace district;
using testing::make_example;

namespace {

Dialogue three_turns() {
    Dialogue d;
    d.id = "d";
    const char* users[] = {"hotel please", "in the north", "cheap one"};
    const char* systems[] = {"", "which area?", "price?"};
    for (std::size_t t = 0; t < 3; ++t) {
        Turn turn;
        turn.index = t;
        turn.system.text = systems[t];
        turn.user.text = users[t];
        d.turns.push_back(turn);
    }
    return d;
}

RetrievalQuery text_query(std::string context, SlotId slot) {
    RetrievalQuery q;
    q.context_text = std::move(context);
    q.slot = std::move(slot);
    return q;
}

ErrorKind kind_of(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.kind();
    }
    FAIL("expected an error");
    return ErrorKind::io;
}

}  // namespace

TEST_CASE("build_query formats") {
    const auto d = three_turns();
    const SlotId area("hotel", "area");
    const auto whole = build_query(d, 1, area, QueryMode::whole_context);
    CHECK(whole.context_text == "[system] none [user] hotel please [system] which area? [user] in the north");
    CHECK(whole.text() == whole.context_text + " [slot] hotel-area");
    const auto single = build_query(d, 2, area, QueryMode::single_turn);
    CHECK(single.context_text == "[system] price? [user] cheap one");
    CHECK(build_query(d, 0, area, QueryMode::single_turn).context_text ==
          build_query(d, 0, area, QueryMode::whole_context).context_text);
    CHECK(kind_of([&] { build_query(d, 3, area, QueryMode::whole_context); }) == ErrorKind::precondition);
    CHECK(parse_query_mode("single") == QueryMode::single_turn);
    CHECK(parse_query_mode("whole_context") == QueryMode::whole_context);
    CHECK(parse_retriever_kind("bm25") == RetrieverKind::bm25);
}

TEST_CASE("dense index self-similarity") {
    const auto bank = testing::random_bank(200, 1);
    const LexicalEmbedder e;
    const auto index = DenseIndex::build(bank, e);
    REQUIRE(index.size() == bank.size());
    CHECK(index.dim() == 384);
    for (std::size_t i = 0; i < bank.size(); ++i) {
        CHECK(std::abs(row_cosine(index, i, e.embed(bank[i].rendered_text)) - 1.0) < 1e-6);
    }
}

TEST_CASE("dense retrieval matches a brute-force scan") {
    const auto bank = testing::random_bank(1000, 2);
    const LexicalEmbedder e;
    const auto index = DenseIndex::build(bank, e);
    const DenseRetriever retriever(index, bank, e);
    std::uint64_t state = 8;
    for (int qi = 0; qi < 20; ++qi) {
        const auto q = text_query(testing::random_words(state, 2, 10), SlotId("hotel", "area"));
        const auto qv = lexical_embed(q.text());
        std::vector<std::pair<double, std::string>> all;
        for (const auto& ex : bank) {
            const auto ev = lexical_embed(ex.rendered_text);
            std::vector<double> stored;
            for (double x : ev.values()) stored.push_back(static_cast<float>(x));
            all.emplace_back(cosine(Vector(stored), qv), ex.id);
        }
        std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
            return a.first != b.first ? a.first > b.first : a.second < b.second;
        });
        const auto got = retriever.retrieve(q, 3);
        REQUIRE(got.items.size() == 3);
        for (std::size_t r = 0; r < 3; ++r) {
            CHECK(got.items[r].example_id == all[r].second);
            CHECK(std::abs(got.items[r].score - all[r].first) < 1e-12);
        }
    }
}

TEST_CASE("retrieval filters") {
    std::vector<SingleTurnExample> bank;
    bank.push_back(make_example("a", 0, SlotId("restaurant", "food"), "", "indian food", "indian"));
    bank.push_back(make_example("b", 0, SlotId("restaurant", "area"), "", "north side", "north"));
    bank.push_back(make_example("c", 1, SlotId("restaurant", "day"), "", "on friday", "friday"));
    auto q = text_query("[system] none [user] food", SlotId("restaurant", "food"));
    q.exclude_domains = {"restaurant"};
    CHECK(kind_of([&] { bm25_retrieve(bank, q, 2); }) == ErrorKind::retrieval);
    CHECK(kind_of([&] { random_retrieve(bank, q, 2, 0); }) == ErrorKind::retrieval);
    const LexicalEmbedder e;
    const auto index = DenseIndex::build(bank, e);
    CHECK(kind_of([&] { dense_retrieve(index, bank, q, 2, e); }) == ErrorKind::retrieval);

    q.exclude_domains.clear();
    q.exclude_sources = {{"a", 0}, {"c", 1}};
    for (const auto& set : {bm25_retrieve(bank, q, 3), random_retrieve(bank, q, 3, 4), dense_retrieve(index, bank, q, 3, e)}) {
        REQUIRE(set.items.size() == 1);
        CHECK(set.items[0].example_id == "b:0:restaurant-area");
    }
}

TEST_CASE("bm25 hand-computed scores") {
    std::vector<SingleTurnExample> bank;
    bank.push_back(make_example("d0", 0, SlotId("hotel", "area"), "", "cheap hotel", "north"));
    bank.push_back(make_example("d1", 0, SlotId("hotel", "area"), "what area", "the north please", "north"));
    bank.push_back(make_example("d2", 0, SlotId("train", "destination"), "", "a train to ely", "ely"));
    const Bm25Retriever bm25(bank);

    // doc lengths 9, 11, 11; avgdl 31/3; "north" in 2 docs, "hotel" in 1
    const double avg = 31.0 / 3.0;
    const double idf_north = std::log((3 - 2 + 0.5) / (2 + 0.5) + 1);
    const double idf_hotel = std::log((3 - 1 + 0.5) / (1 + 0.5) + 1);
    auto term = [&](double idf, double tf, double len) {
        return idf * tf * 2.5 / (tf + 1.5 * (0.25 + 0.75 * len / avg));
    };
    CHECK(std::abs(bm25.idf("north") - std::log(1.6)) < 1e-15);
    const auto scores = bm25.score_all("north hotel");
    CHECK(std::abs(scores[0] - (term(idf_north, 1, 9) + term(idf_hotel, 1, 9))) < 1e-9);
    CHECK(std::abs(scores[0] - 1.5402677859582645) < 1e-9);
    CHECK(std::abs(scores[1] - term(idf_north, 2, 11)) < 1e-9);
    CHECK(std::abs(scores[1] - 0.6577928896892914) < 1e-9);
    CHECK(scores[2] == 0.0);
    // query multiplicity counts
    const auto twice = bm25.score_all("North  NORTH");
    CHECK(std::abs(twice[1] - 1.3155857793785828) < 1e-9);
    CHECK(bm25.idf("absent") == doctest::Approx(std::log(3.5 / 0.5 + 1)));
}

TEST_CASE("bm25 ties resolve by id") {
    std::vector<SingleTurnExample> bank;
    for (const char* id : {"z", "m", "a", "q"}) {
        bank.push_back(make_example(id, 0, SlotId("hotel", "area"), "", "same words here", "north"));
    }
    // only the shared "[slot]" marker matches: every document scores the same
    const auto none = bm25_retrieve(bank, text_query("zzz", SlotId("x", "y")), 2);
    REQUIRE(none.items.size() == 2);
    CHECK(none.items[0].score == none.items[1].score);
    CHECK(none.items[0].example_id == "a:0:hotel-area");
    CHECK(none.items[1].example_id == "m:0:hotel-area");
    const auto dup = bm25_retrieve(bank, text_query("same words", SlotId("hotel", "area")), 4);
    REQUIRE(dup.items.size() == 4);
    CHECK(dup.items[0].score > 0.0);
    CHECK(dup.items[0].example_id == "a:0:hotel-area");
    CHECK(dup.items[3].example_id == "z:0:hotel-area");
}

TEST_CASE("random retriever") {
    const auto bank = testing::random_bank(10, 3);
    const auto q = text_query("some query", SlotId("hotel", "area"));
    const auto a = random_retrieve(bank, q, 3, 42);
    const auto b = random_retrieve(bank, q, 3, 42);
    REQUIRE(a.items.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(a.items[i].example_id == b.items[i].example_id);
        CHECK(a.items[i].score == 0.0);
    }
    const auto all = random_retrieve(bank, q, 50, 42);
    CHECK(all.items.size() == 10);
    std::set<std::string> distinct;
    for (const auto& it : all.items) distinct.insert(it.example_id);
    CHECK(distinct.size() == 10);

    // each example drawn first with probability 1/10: counts within 5 sigma
    std::map<std::string, int> counts;
    const int draws = 10000;
    for (int i = 0; i < draws; ++i) {
        counts[random_retrieve(bank, text_query("q" + std::to_string(i), q.slot), 1, 7).items[0].example_id]++;
    }
    CHECK(counts.size() == 10);
    const double sigma = std::sqrt(draws * 0.1 * 0.9);
    for (const auto& [id, c] : counts) {
        CAPTURE(id);
        CHECK(std::abs(c - draws * 0.1) < 5 * sigma);
    }
}

TEST_CASE("dense index persistence") {
    const auto bank = testing::random_bank(50, 4);
    const LexicalEmbedder e(128);
    const auto index = DenseIndex::build(bank, e);
    const auto dir = std::filesystem::path(testing::temp_dir("index"));
    index.save(dir / "index.bin", dir / "index.ids.jsonl");
    const auto back = DenseIndex::load(dir / "index.bin", dir / "index.ids.jsonl");
    CHECK(back.ids() == index.ids());
    CHECK(back.dim() == 128);
    CHECK(back.provider_name() == "lexical-fh-v1");
    CHECK(back.matrix_bytes() == index.matrix_bytes());
    CHECK(index.matrix_bytes().substr(0, 8) == "DSTIDX01");

    auto bytes = index.matrix_bytes();
    CHECK(kind_of([&] { DenseIndex::from_bytes(bytes.substr(0, bytes.size() - 1), index.ids_jsonl()); }) ==
          ErrorKind::parse);
    bytes[0] = 'X';
    CHECK(kind_of([&] { DenseIndex::from_bytes(bytes, index.ids_jsonl()); }) == ErrorKind::parse);

    const LexicalEmbedder other(256);
    CHECK_THROWS_AS(DenseRetriever(back, bank, other), Error);
    auto shuffled = bank;
    std::swap(shuffled[0], shuffled[1]);
    CHECK_THROWS_AS(DenseRetriever(back, shuffled, e), Error);
}

TEST_CASE("excluded domains never leak") {
    const auto bank = testing::random_bank(300, 5);
    const LexicalEmbedder e(128);
    const auto index = DenseIndex::build(bank, e);
    const DenseRetriever dense(index, bank, e);
    const Bm25Retriever bm25(bank);
    const RandomRetriever rnd(bank, 9);
    const std::vector<std::string> domains{"attraction", "hotel", "restaurant", "taxi", "train"};
    std::uint64_t state = 77;
    for (int i = 0; i < 100; ++i) {
        auto q = text_query(testing::random_words(state, 1, 8), SlotId(domains[i % 5], "area"));
        q.exclude_domains = {domains[i % 5], domains[(i + 2) % 5]};
        for (const Retriever* r : {static_cast<const Retriever*>(&dense), static_cast<const Retriever*>(&bm25),
                                   static_cast<const Retriever*>(&rnd)}) {
            const auto got = r->retrieve(q, 5);
            CHECK(got.items.size() == 5);
            for (const auto& item : got.items) CHECK(q.exclude_domains.count(bank[item.bank_index].domain) == 0);
        }
    }
}
