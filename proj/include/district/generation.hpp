#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "district/corpus.hpp"
#include "district/embedding.hpp"
#include "district/prompting.hpp"
#include "district/retriever.hpp"

namespace district {

/// Maps prompts to raw slot-value strings, one output per input, in order.
class Generator {
public:
    virtual ~Generator() = default;
    virtual std::string name() const = 0;
    virtual std::vector<std::string> generate(std::span<const std::string> inputs) const = 0;
};

/// Output of the mock oracle when it decides to be wrong.
inline constexpr std::string_view kWrongValue = "__wrong__";

/// Test generator that reads the [context]/[slot] blocks of a prompt, looks up
/// the gold value in `corpus` and returns it with probability `accuracy`,
/// otherwise "__wrong__". The coin for a prompt is a pure function of
/// (seed, context, slot), so results do not depend on batching or threads.
class MockOracle final : public Generator {
public:
    MockOracle(const std::vector<Dialogue>& corpus, double accuracy, std::uint64_t seed);

    std::string name() const override { return "mock-oracle"; }
    std::vector<std::string> generate(std::span<const std::string> inputs) const override;

private:
    struct Location {
        const Dialogue* dialogue;
        std::size_t turn;
    };
    std::unordered_map<std::string, Location> by_context_;
    std::unordered_set<std::string> ambiguous_;
    double accuracy_;
    std::uint64_t seed_;
};

/// POST {"inputs": [...]} to <endpoint>/generate, expecting {"outputs": [...]}.
std::vector<std::string> remote_generate(const std::string& endpoint,
                                         std::span<const std::string> inputs,
                                         const RemoteOptions& options = {});

class RemoteGenerator final : public Generator {
public:
    explicit RemoteGenerator(std::string endpoint, RemoteOptions options = {})
        : endpoint_(std::move(endpoint)), options_(options) {}

    std::string name() const override { return "remote@" + endpoint_; }
    std::vector<std::string> generate(std::span<const std::string> inputs) const override {
        return remote_generate(endpoint_, inputs, options_);
    }

private:
    std::string endpoint_;
    RemoteOptions options_;
};

/// POST /finetune with the pairs inline; returns the reported final loss.
double remote_finetune(const std::string& endpoint, const std::vector<PromptInstance>& pairs,
                       int epochs, std::uint64_t seed, const RemoteOptions& options = {});
/// Same, but the server reads the pairs file itself.
double remote_finetune(const std::string& endpoint, const std::string& pairs_path, int epochs,
                       std::uint64_t seed, const RemoteOptions& options = {});

using PredictedState = TurnState;

/// What the retriever returned for one query.
struct RetrievalRecord {
    std::string dialogue_id;
    std::size_t turn_index = 0;
    SlotId query_slot;
    std::vector<std::string> example_ids;
    std::vector<SlotId> example_slots;
    std::vector<double> scores;
};

struct PredictOptions {
    std::size_t batch_size = 32;
    std::size_t workers = 1;
};

struct PredictionRun {
    std::vector<PredictedState> states;     // one per (dialogue, turn), ordered by (dialogue id, turn)
    std::vector<RetrievalRecord> retrievals;  // one per query when k > 0, query order
    std::size_t generator_inputs = 0;
};

/// For every (turn, slot) query: build the query, retrieve k examples,
/// assemble the prompt, generate, normalize. Outputs normalizing to absent or
/// to "none" are dropped from the state. Generator calls are issued
/// sequentially in batches of `batch_size`; retrieval runs on `workers`
/// threads.
PredictionRun predict_states(const std::vector<Dialogue>& dialogues, const Ontology& ontology,
                             const Retriever* retriever, const QueryOptions& query_options,
                             const Generator& generator, std::size_t k,
                             const std::optional<std::string>& domain_filter,
                             const PredictOptions& options = {});

/// JSON-lines {"dialogue_id", "turn", "state": {...}}.
std::string write_states(const std::vector<TurnState>& states);
std::vector<TurnState> read_states(std::string_view jsonl);

/// JSON-lines {"dialogue_id", "turn", "slot", "examples": [{"id", "slot", "score"}]}.
std::string write_retrievals(const std::vector<RetrievalRecord>& records);
std::vector<RetrievalRecord> read_retrievals(std::string_view jsonl);

}  // namespace district
