#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "district/corpus.hpp"
#include "district/embedding.hpp"
#include "district/evaluation.hpp"
#include "district/generation.hpp"
#include "district/retriever.hpp"

namespace district {

enum class EmbedderKind { lexical, remote };
enum class GeneratorKind { mock, remote };

const char* to_string(EmbedderKind kind) noexcept;
const char* to_string(GeneratorKind kind) noexcept;
EmbedderKind parse_embedder_kind(std::string_view s);
GeneratorKind parse_generator_kind(std::string_view s);

struct RunConfig {
    std::filesystem::path corpus;
    std::filesystem::path ontology;
    /// Evaluation dialogues. Without it the split's held-out dialogues are
    /// evaluated, or the training dialogues when nothing is held out.
    std::optional<std::filesystem::path> test_corpus;

    SplitMode split_mode = SplitMode::full_shot;
    std::optional<std::string> target_domain;
    Fraction fraction;

    RetrieverKind retriever = RetrieverKind::dense;
    QueryMode query_mode = QueryMode::whole_context;
    std::size_t k = kDefaultK;

    EmbedderKind embedder = EmbedderKind::lexical;
    std::size_t embed_dim = kDefaultEmbeddingDim;

    GeneratorKind generator = GeneratorKind::mock;
    double mock_accuracy = 1.0;
    int finetune_epochs = 3;

    std::string endpoint;
    RemoteOptions remote;

    /// Domain whose slots are queried and scored. Defaults to the target
    /// domain when the split has one; "all" disables the restriction.
    std::optional<std::string> eval_domain;

    std::vector<std::uint64_t> seeds{0};
    std::filesystem::path output_dir;

    std::size_t batch_size = 32;
    std::size_t workers = 1;

    /// Throws a config error describing the first problem.
    void validate() const;
    /// The domain actually used for query filtering and slot scope.
    std::optional<std::string> effective_eval_domain() const;
};

struct ExperimentResult {
    std::vector<EvalReport> runs;
    RunStats stats;
    std::filesystem::path report_path;
    std::filesystem::path manifest_path;
};

/// Runs split -> bank -> index -> export -> (finetune) -> predict -> eval ->
/// analyze once per seed and writes every artifact under
/// config.output_dir. Errors keep their kind and gain the stage name.
ExperimentResult run_experiment(const RunConfig& config);

/// Constructs the provider named by the config (probes the remote service).
std::unique_ptr<EmbeddingProvider> make_embedder(EmbedderKind kind, std::size_t dim,
                                                 const std::string& endpoint, const RemoteOptions& remote);

/// Constructs a retriever over `bank`. `index` and `provider` are needed for
/// dense retrieval only.
std::unique_ptr<Retriever> make_retriever(RetrieverKind kind, std::span<const SingleTurnExample> bank,
                                          const DenseIndex* index, const EmbeddingProvider* provider,
                                          std::uint64_t seed);

}  // namespace district
