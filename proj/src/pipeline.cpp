#include "district/pipeline.hpp"

#include <functional>
#include <map>

#include <json.hpp>

#include "district/error.hpp"
#include "district/io.hpp"
#include "district/prompting.hpp"

namespace district {

using nlohmann::json;
namespace fs = std::filesystem;

const char* to_string(EmbedderKind kind) noexcept {
    return kind == EmbedderKind::lexical ? "lexical" : "remote";
}

const char* to_string(GeneratorKind kind) noexcept {
    return kind == GeneratorKind::mock ? "mock" : "remote";
}

EmbedderKind parse_embedder_kind(std::string_view s) {
    if (s == "lexical") return EmbedderKind::lexical;
    if (s == "remote") return EmbedderKind::remote;
    fail(ErrorKind::config, "unknown embedder: " + std::string(s));
}

GeneratorKind parse_generator_kind(std::string_view s) {
    if (s == "mock") return GeneratorKind::mock;
    if (s == "remote") return GeneratorKind::remote;
    fail(ErrorKind::config, "unknown generator: " + std::string(s));
}

void RunConfig::validate() const {
    if (corpus.empty()) fail(ErrorKind::config, "no corpus path given");
    if (ontology.empty()) fail(ErrorKind::config, "no ontology path given");
    if (output_dir.empty()) fail(ErrorKind::config, "no output directory given");
    if (seeds.empty()) fail(ErrorKind::config, "at least one seed is required");
    if (batch_size == 0) fail(ErrorKind::config, "batch size must be positive");
    if (workers == 0) fail(ErrorKind::config, "worker count must be positive");
    if (finetune_epochs < 0) fail(ErrorKind::config, "finetune epochs must be >= 0");
    if (!(mock_accuracy >= 0.0 && mock_accuracy <= 1.0)) {
        fail(ErrorKind::config, "mock accuracy must be in [0, 1]");
    }
    const bool needs_endpoint = (embedder == EmbedderKind::remote && retriever == RetrieverKind::dense) ||
                                generator == GeneratorKind::remote;
    if (needs_endpoint && endpoint.empty()) fail(ErrorKind::config, "remote components need --endpoint");
    SplitSpec{split_mode, target_domain, fraction, 0}.validate();
    for (const auto* p : {&corpus, &ontology}) {
        if (!fs::exists(*p)) fail(ErrorKind::config, "no such file: " + p->string());
    }
    if (test_corpus && !fs::exists(*test_corpus)) {
        fail(ErrorKind::config, "no such file: " + test_corpus->string());
    }
}

std::optional<std::string> RunConfig::effective_eval_domain() const {
    if (eval_domain) {
        if (*eval_domain == "all") return std::nullopt;
        return eval_domain;
    }
    return target_domain;
}

std::unique_ptr<EmbeddingProvider> make_embedder(EmbedderKind kind, std::size_t dim, const std::string& endpoint,
                                                 const RemoteOptions& remote) {
    if (kind == EmbedderKind::lexical) return std::make_unique<LexicalEmbedder>(dim);
    return std::make_unique<RemoteEmbedder>(endpoint, remote);
}

std::unique_ptr<Retriever> make_retriever(RetrieverKind kind, std::span<const SingleTurnExample> bank,
                                          const DenseIndex* index, const EmbeddingProvider* provider,
                                          std::uint64_t seed) {
    switch (kind) {
        case RetrieverKind::dense:
            if (!index || !provider) fail(ErrorKind::precondition, "dense retrieval needs an index and a provider");
            return std::make_unique<DenseRetriever>(*index, bank, *provider);
        case RetrieverKind::bm25: return std::make_unique<Bm25Retriever>(bank);
        case RetrieverKind::random: return std::make_unique<RandomRetriever>(bank, seed);
    }
    fail(ErrorKind::config, "unknown retriever");
}

namespace {

template <typename Fn>
auto stage(const char* name, Fn&& fn) -> decltype(fn()) {
    try {
        return fn();
    } catch (const Error& e) {
        fail(e.kind(), std::string("stage ") + name + ": " + e.what());
    }
}

json split_info_json(const SplitInfo& info) {
    return {{"mode", to_string(info.mode)},
            {"target_domain", info.target_domain ? json(*info.target_domain) : json(nullptr)},
            {"fraction", info.fraction},
            {"seed", info.seed},
            {"corpus_size", info.corpus_size},
            {"target_pool_size", info.target_pool_size},
            {"sampled", info.sampled},
            {"train_ids", info.train_ids},
            {"heldout_ids", info.heldout_ids},
            {"description", info.describe()}};
}

json config_json(const RunConfig& c) {
    json seeds = json::array();
    for (auto s : c.seeds) seeds.push_back(s);
    const auto eval_domain = c.effective_eval_domain();
    return {{"corpus", c.corpus.string()},
            {"ontology", c.ontology.string()},
            {"test_corpus", c.test_corpus ? json(c.test_corpus->string()) : json(nullptr)},
            {"split_mode", to_string(c.split_mode)},
            {"target_domain", c.target_domain ? json(*c.target_domain) : json(nullptr)},
            {"fraction", c.fraction.str()},
            {"retriever", to_string(c.retriever)},
            {"query_mode", to_string(c.query_mode)},
            {"k", c.k},
            {"embedder", to_string(c.embedder)},
            {"embed_dim", c.embed_dim},
            {"generator", to_string(c.generator)},
            {"mock_accuracy", c.mock_accuracy},
            {"finetune_epochs", c.finetune_epochs},
            {"endpoint", c.endpoint},
            {"eval_domain", eval_domain ? json(*eval_domain) : json("all")},
            {"seeds", seeds},
            {"output_dir", c.output_dir.string()},
            {"batch_size", c.batch_size},
            {"workers", c.workers}};
}

class ArtifactWriter {
public:
    explicit ArtifactWriter(fs::path root) : root_(std::move(root)) {}

    void write(const fs::path& relative, std::string_view bytes) {
        write_file(root_ / relative, bytes);
        hashes_[relative.generic_string()] = sha256_hex(bytes);
    }
    const std::map<std::string, std::string>& hashes() const { return hashes_; }

private:
    fs::path root_;
    std::map<std::string, std::string> hashes_;
};

std::vector<SelectionLog> selection_logs(const std::vector<RetrievalRecord>& records) {
    std::vector<SelectionLog> logs;
    logs.reserve(records.size());
    for (const auto& r : records) logs.push_back({r.query_slot, r.example_slots});
    return logs;
}

}  // namespace

ExperimentResult run_experiment(const RunConfig& config) {
    stage("config", [&] { config.validate(); });

    const std::string ontology_bytes = stage("ingest", [&] { return read_file(config.ontology); });
    const std::string corpus_bytes = stage("ingest", [&] { return read_file(config.corpus); });
    const std::string test_bytes =
        config.test_corpus ? stage("ingest", [&] { return read_file(*config.test_corpus); }) : std::string();

    const Ontology ontology = stage("ingest", [&] { return parse_ontology(ontology_bytes); });
    const auto corpus = stage("ingest", [&] { return parse_corpus(corpus_bytes, ontology); });
    const auto test_corpus = config.test_corpus
                                 ? stage("ingest", [&] { return parse_corpus(test_bytes, ontology); })
                                 : std::vector<Dialogue>{};
    const auto eval_domain = config.effective_eval_domain();
    if (eval_domain && !ontology.domains().count(*eval_domain)) {
        fail(ErrorKind::config, "evaluation domain \"" + *eval_domain + "\" is not in the ontology");
    }

    std::unique_ptr<EmbeddingProvider> provider;
    if (config.retriever == RetrieverKind::dense && config.k > 0) {
        provider = stage("index", [&] {
            return make_embedder(config.embedder, config.embed_dim, config.endpoint, config.remote);
        });
    }

    ArtifactWriter artifacts(config.output_dir);
    ExperimentResult result;
    json run_entries = json::array();

    for (const std::uint64_t seed : config.seeds) {
        const fs::path dir = "seed-" + std::to_string(seed);

        const Split split = stage("split", [&] {
            return make_split(corpus, SplitSpec{config.split_mode, config.target_domain, config.fraction, seed});
        });
        artifacts.write(dir / "split.json", split_info_json(split.info).dump(2) + "\n");
        artifacts.write(dir / "train.json", write_corpus(split.train));

        std::vector<Dialogue> eval_set = config.test_corpus ? test_corpus
                                         : split.heldout.empty() ? split.train
                                                                 : split.heldout;
        if (eval_domain) {
            std::erase_if(eval_set, [&](const Dialogue& d) { return !d.domains.count(*eval_domain); });
        }
        if (eval_set.empty()) {
            fail(ErrorKind::split, "stage split: no evaluation dialogues" +
                                       (eval_domain ? " touching domain " + *eval_domain : std::string()));
        }
        artifacts.write(dir / "eval.json", write_corpus(eval_set));

        const auto bank = stage("bank", [&] { return build_bank(split.train); });
        artifacts.write(dir / "bank.jsonl", write_bank(bank));

        std::optional<DenseIndex> index;
        if (provider) {
            index = stage("index", [&] { return DenseIndex::build(bank, *provider); });
            artifacts.write(dir / "index.bin", index->matrix_bytes());
            artifacts.write(dir / "index.ids.jsonl", index->ids_jsonl());
        }

        std::unique_ptr<Retriever> retriever;
        if (config.k > 0) {
            retriever = stage("index", [&] {
                return make_retriever(config.retriever, bank, index ? &*index : nullptr, provider.get(), seed);
            });
        }

        QueryOptions query_options;
        query_options.mode = config.query_mode;
        if (config.split_mode == SplitMode::zero_shot) query_options.exclude_domains.insert(*config.target_domain);

        const auto pairs = stage("export-train", [&] {
            return export_training_pairs(split.train, retriever.get(), query_options, ontology, config.k,
                                         config.workers);
        });
        const std::string pairs_bytes = write_training_pairs(pairs);
        artifacts.write(dir / "train_pairs.jsonl", pairs_bytes);

        std::unique_ptr<Generator> generator;
        std::optional<double> final_loss;
        if (config.generator == GeneratorKind::mock) {
            generator = std::make_unique<MockOracle>(eval_set, config.mock_accuracy, seed);
        } else {
            final_loss = stage("finetune", [&] {
                return remote_finetune(config.endpoint, pairs, config.finetune_epochs, seed, config.remote);
            });
            generator = std::make_unique<RemoteGenerator>(config.endpoint, config.remote);
        }

        const PredictionRun prediction = stage("predict", [&] {
            return predict_states(eval_set, ontology, retriever.get(), query_options, *generator, config.k,
                                  eval_domain, PredictOptions{config.batch_size, config.workers});
        });
        artifacts.write(dir / "predictions.jsonl", write_states(prediction.states));
        artifacts.write(dir / "retrievals.jsonl", write_retrievals(prediction.retrievals));

        const auto golds = gold_states(eval_set);
        EvalReport report = stage("eval", [&] {
            return joint_goal_accuracy(prediction.states, golds, eval_domain);
        });
        artifacts.write(dir / "report.json", write_report(report));

        if (!prediction.retrievals.empty()) {
            stage("analyze", [&] {
                const auto logs = selection_logs(prediction.retrievals);
                const std::vector<std::string> domains(ontology.domains().begin(), ontology.domains().end());
                const auto by_domain = selection_analysis(logs, SelectionAxis::domain, domains);
                const auto by_slot = selection_analysis(logs, SelectionAxis::slot);
                artifacts.write(dir / "selection_domain.json", write_selection_json(by_domain));
                artifacts.write(dir / "selection_domain.csv", by_domain.matrix.to_csv());
                artifacts.write(dir / "selection_slot.json", write_selection_json(by_slot));
                artifacts.write(dir / "selection_slot.csv", by_slot.matrix.to_csv());
            });
        }

        json entry = {{"seed", seed},
                      {"jga", report.jga},
                      {"turn_count", report.turn_count},
                      {"train_dialogues", split.train.size()},
                      {"eval_dialogues", eval_set.size()},
                      {"bank_size", bank.size()},
                      {"training_pairs", pairs.size()},
                      {"generator_inputs", prediction.generator_inputs}};
        if (final_loss) entry["final_loss"] = *final_loss;
        run_entries.push_back(std::move(entry));
        result.runs.push_back(std::move(report));
    }

    result.stats = aggregate_runs(result.runs);
    json seed_runs = json::array();
    for (const auto& r : result.runs) seed_runs.push_back(r.jga);
    const json aggregate = {{"runs", run_entries},
                            {"seed_runs", seed_runs},
                            {"mean", result.stats.mean},
                            {"std", result.stats.std}};
    artifacts.write("report.json", aggregate.dump(2) + "\n");
    result.report_path = config.output_dir / "report.json";

    json inputs = {{"corpus", sha256_hex(corpus_bytes)}, {"ontology", sha256_hex(ontology_bytes)}};
    if (config.test_corpus) inputs["test_corpus"] = sha256_hex(test_bytes);
    json manifest = {{"config", config_json(config)},
                     {"inputs", inputs},
                     {"artifacts", artifacts.hashes()},
                     {"tool", "district"}};
    result.manifest_path = config.output_dir / "manifest.json";
    write_file(result.manifest_path, manifest.dump(2) + "\n");
    return result;
}

}  // namespace district
