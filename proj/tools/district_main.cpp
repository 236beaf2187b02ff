// district: command-line front end for the retrieval-augmented DST pipeline.
//
//   district ingest | split | bank | index | export-train | predict | eval | analyze | run
//
// Exit codes: 0 success, 2 config error, 3 data error, 4 remote error.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "district/config.hpp"
#include "district/corpus.hpp"
#include "district/error.hpp"
#include "district/evaluation.hpp"
#include "district/example_bank.hpp"
#include "district/generation.hpp"
#include "district/io.hpp"
#include "district/pipeline.hpp"
#include "district/prompting.hpp"
#include "district/retriever.hpp"

namespace {

using namespace district;

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitRemote = 4;

int exit_code(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::config: return kExitConfig;
        case ErrorKind::transport:
        case ErrorKind::protocol: return kExitRemote;
        default: return kExitData;
    }
}

Ontology load_ontology(const std::string& path) { return parse_ontology(read_file(path)); }

std::vector<Dialogue> load_corpus(const std::string& path, const Ontology& ontology) {
    return parse_corpus(read_file(path), ontology);
}

// Flags shared by the retrieval-driven stages.
struct RetrievalFlags {
    std::string retriever = "dense";
    std::string query_mode = "whole";
    std::size_t k = kDefaultK;
    std::uint64_t seed = 0;
    std::string embedder = "lexical";
    std::size_t dim = kDefaultEmbeddingDim;
    std::string endpoint;
    std::string bank;
    std::string index;  // prefix: <index>.bin and <index>.ids.jsonl
    std::vector<std::string> exclude_domains;

    void attach(CLI::App* cmd) {
        cmd->add_option("--retriever", retriever, "dense | bm25 | random")->capture_default_str();
        cmd->add_option("--query-mode", query_mode, "whole | single")->capture_default_str();
        cmd->add_option("--k", k, "in-context examples per prompt")->capture_default_str();
        cmd->add_option("--seed", seed, "seed for random retrieval and the mock oracle")->capture_default_str();
        cmd->add_option("--embedder", embedder, "lexical | remote")->capture_default_str();
        cmd->add_option("--dim", dim, "lexical embedding dimension")->capture_default_str();
        cmd->add_option("--endpoint", endpoint, "model server base URL");
        cmd->add_option("--bank", bank, "example bank (JSON-lines)")->required();
        cmd->add_option("--index", index, "dense index prefix");
        cmd->add_option("--exclude-domain", exclude_domains, "domains the retriever may not return");
    }

    struct Loaded {
        std::vector<SingleTurnExample> bank;
        std::unique_ptr<EmbeddingProvider> provider;
        std::optional<DenseIndex> index;
        std::unique_ptr<Retriever> retriever;
        QueryOptions options;
    };

    // Returned by pointer so the retriever's references into bank/index stay valid.
    std::unique_ptr<Loaded> load() const {
        auto out = std::make_unique<Loaded>();
        const auto kind = parse_retriever_kind(retriever);
        out->options.mode = parse_query_mode(query_mode);
        out->options.exclude_domains.insert(exclude_domains.begin(), exclude_domains.end());
        out->bank = read_bank(read_file(bank));
        if (k == 0) return out;
        if (kind == RetrieverKind::dense) {
            if (index.empty()) fail(ErrorKind::config, "dense retrieval needs --index");
            out->provider = make_embedder(parse_embedder_kind(embedder), dim, endpoint, RemoteOptions{});
            out->index = DenseIndex::load(index + ".bin", index + ".ids.jsonl");
        }
        out->retriever = make_retriever(kind, out->bank, out->index ? &*out->index : nullptr,
                                        out->provider.get(), seed);
        return out;
    }
};

int run_cli(int argc, char** argv) {
    CLI::App app{"Retrieval-augmented dialogue state tracking toolkit"};
    app.require_subcommand(1);

    // ingest
    std::string corpus_path, ontology_path, out_path;
    auto* ingest = app.add_subcommand("ingest", "validate and normalize a corpus");
    ingest->add_option("--corpus", corpus_path)->required();
    ingest->add_option("--ontology", ontology_path)->required();
    ingest->add_option("--out", out_path, "normalized corpus output");
    ingest->callback([&] {
        const auto ontology = load_ontology(ontology_path);
        const auto dialogues = load_corpus(corpus_path, ontology);
        std::set<std::string> domains;
        std::size_t turns = 0;
        for (const auto& d : dialogues) {
            domains.insert(d.domains.begin(), d.domains.end());
            turns += d.turns.size();
        }
        if (!out_path.empty()) write_file(out_path, write_corpus(dialogues));
        std::cout << dialogues.size() << " dialogues, " << turns << " turns, domains:";
        for (const auto& d : domains) std::cout << ' ' << d;
        std::cout << '\n';
    });

    // split
    std::string mode = "full_shot", target, fraction = "1", out_dir;
    std::uint64_t split_seed = 0;
    auto* split = app.add_subcommand("split", "write a zero/few/full-shot training split");
    split->add_option("--corpus", corpus_path)->required();
    split->add_option("--ontology", ontology_path)->required();
    split->add_option("--mode", mode, "zero_shot | cross_domain_few_shot | multi_domain_few_shot | full_shot")
        ->capture_default_str();
    split->add_option("--target", target, "target (unseen) domain");
    split->add_option("--fraction", fraction, "few-shot fraction, e.g. 0.01 or 5%")->capture_default_str();
    split->add_option("--seed", split_seed)->capture_default_str();
    split->add_option("--out-dir", out_dir)->required();
    split->callback([&] {
        const auto ontology = load_ontology(ontology_path);
        const auto dialogues = load_corpus(corpus_path, ontology);
        SplitSpec spec{parse_split_mode(mode), target.empty() ? std::nullopt : std::optional(target),
                       Fraction::parse(fraction), split_seed};
        const auto result = make_split(dialogues, spec);
        write_file(std::filesystem::path(out_dir) / "train.json", write_corpus(result.train));
        write_file(std::filesystem::path(out_dir) / "heldout.json", write_corpus(result.heldout));
        nlohmann::json info = {{"description", result.info.describe()},
                               {"train_ids", result.info.train_ids},
                               {"heldout_ids", result.info.heldout_ids},
                               {"sampled", result.info.sampled},
                               {"target_pool_size", result.info.target_pool_size}};
        write_file(std::filesystem::path(out_dir) / "split.json", info.dump(2) + "\n");
        std::cout << result.info.describe() << '\n';
    });

    // bank
    auto* bank_cmd = app.add_subcommand("bank", "build the single-turn example bank");
    bank_cmd->add_option("--corpus", corpus_path, "training split")->required();
    bank_cmd->add_option("--ontology", ontology_path)->required();
    bank_cmd->add_option("--out", out_path)->required();
    bank_cmd->callback([&] {
        const auto ontology = load_ontology(ontology_path);
        const auto bank = build_bank(load_corpus(corpus_path, ontology));
        write_file(out_path, write_bank(bank));
        std::cout << bank.size() << " examples\n";
    });

    // index
    std::string bank_path, index_prefix, embedder = "lexical", endpoint;
    std::size_t dim = kDefaultEmbeddingDim;
    auto* index_cmd = app.add_subcommand("index", "embed the bank into a dense index");
    index_cmd->add_option("--bank", bank_path)->required();
    index_cmd->add_option("--out", index_prefix, "writes <out>.bin and <out>.ids.jsonl")->required();
    index_cmd->add_option("--embedder", embedder, "lexical | remote")->capture_default_str();
    index_cmd->add_option("--dim", dim)->capture_default_str();
    index_cmd->add_option("--endpoint", endpoint);
    index_cmd->callback([&] {
        const auto bank = read_bank(read_file(bank_path));
        const auto provider = make_embedder(parse_embedder_kind(embedder), dim, endpoint, RemoteOptions{});
        const auto index = DenseIndex::build(bank, *provider);
        write_file(index_prefix + ".bin", index.matrix_bytes());
        write_file(index_prefix + ".ids.jsonl", index.ids_jsonl());
        std::cout << index.size() << " rows x " << index.dim() << " (" << index.provider_name() << ")\n";
    });

    // export-train
    RetrievalFlags export_flags;
    std::size_t workers = 1;
    auto* export_cmd = app.add_subcommand("export-train", "write (input, target) training pairs");
    export_cmd->add_option("--corpus", corpus_path, "training split")->required();
    export_cmd->add_option("--ontology", ontology_path)->required();
    export_cmd->add_option("--out", out_path)->required();
    export_cmd->add_option("--workers", workers)->capture_default_str();
    export_flags.attach(export_cmd);
    export_cmd->callback([&] {
        const auto ontology = load_ontology(ontology_path);
        const auto train = load_corpus(corpus_path, ontology);
        const auto loaded = export_flags.load();
        const auto pairs = export_training_pairs(train, loaded->retriever.get(), loaded->options, ontology,
                                                 export_flags.k, workers);
        write_file(out_path, write_training_pairs(pairs));
        std::cout << pairs.size() << " pairs\n";
    });

    // predict
    RetrievalFlags predict_flags;
    std::string generator = "mock", domain_filter, retrievals_out;
    double accuracy = 1.0;
    std::size_t batch_size = 32;
    auto* predict_cmd = app.add_subcommand("predict", "predict dialogue states");
    predict_cmd->add_option("--corpus", corpus_path, "evaluation dialogues")->required();
    predict_cmd->add_option("--ontology", ontology_path)->required();
    predict_cmd->add_option("--out", out_path, "predicted states (JSON-lines)")->required();
    predict_cmd->add_option("--retrievals-out", retrievals_out, "retrieval log (JSON-lines)");
    predict_cmd->add_option("--generator", generator, "mock | remote")->capture_default_str();
    predict_cmd->add_option("--mock-accuracy", accuracy)->capture_default_str();
    predict_cmd->add_option("--domain-filter", domain_filter, "only query this domain's slots");
    predict_cmd->add_option("--batch-size", batch_size)->capture_default_str();
    predict_cmd->add_option("--workers", workers)->capture_default_str();
    predict_flags.attach(predict_cmd);
    predict_cmd->callback([&] {
        const auto ontology = load_ontology(ontology_path);
        const auto dialogues = load_corpus(corpus_path, ontology);
        const auto loaded = predict_flags.load();
        std::unique_ptr<Generator> gen;
        if (parse_generator_kind(generator) == GeneratorKind::mock) {
            gen = std::make_unique<MockOracle>(dialogues, accuracy, predict_flags.seed);
        } else {
            if (predict_flags.endpoint.empty()) fail(ErrorKind::config, "remote generator needs --endpoint");
            gen = std::make_unique<RemoteGenerator>(predict_flags.endpoint);
        }
        const auto run = predict_states(dialogues, ontology, loaded->retriever.get(), loaded->options, *gen,
                                        predict_flags.k,
                                        domain_filter.empty() ? std::nullopt : std::optional(domain_filter),
                                        PredictOptions{batch_size, workers});
        write_file(out_path, write_states(run.states));
        if (!retrievals_out.empty()) write_file(retrievals_out, write_retrievals(run.retrievals));
        std::cout << run.states.size() << " turns, " << run.generator_inputs << " generator inputs\n";
    });

    // eval
    std::string predictions_path, slot_scope;
    auto* eval_cmd = app.add_subcommand("eval", "joint goal accuracy of predicted states");
    eval_cmd->add_option("--predictions", predictions_path)->required();
    eval_cmd->add_option("--corpus", corpus_path, "gold dialogues")->required();
    eval_cmd->add_option("--ontology", ontology_path)->required();
    eval_cmd->add_option("--slot-scope", slot_scope, "judge only this domain's slots");
    eval_cmd->add_option("--out", out_path);
    eval_cmd->callback([&] {
        const auto ontology = load_ontology(ontology_path);
        auto dialogues = load_corpus(corpus_path, ontology);
        if (!slot_scope.empty()) {
            std::erase_if(dialogues, [&](const Dialogue& d) { return !d.domains.count(slot_scope); });
        }
        const auto preds = read_states(read_file(predictions_path));
        const auto golds = gold_states(dialogues);
        const auto report = joint_goal_accuracy(preds, golds,
                                                slot_scope.empty() ? std::nullopt : std::optional(slot_scope));
        const auto text = write_report(report);
        if (!out_path.empty()) write_file(out_path, text);
        std::cout << text;
    });

    // analyze
    std::string retrievals_path, out_prefix, axis = "both";
    auto* analyze_cmd = app.add_subcommand("analyze", "domain/slot selection matrices from a retrieval log");
    analyze_cmd->add_option("--retrievals", retrievals_path)->required();
    analyze_cmd->add_option("--out-prefix", out_prefix, "writes <prefix>_<axis>.json and .csv")->required();
    analyze_cmd->add_option("--axis", axis, "domain | slot | both")->capture_default_str();
    analyze_cmd->callback([&] {
        const auto records = read_retrievals(read_file(retrievals_path));
        std::vector<SelectionLog> logs;
        for (const auto& r : records) logs.push_back({r.query_slot, r.example_slots});
        std::vector<SelectionAxis> axes;
        if (axis == "domain" || axis == "both") axes.push_back(SelectionAxis::domain);
        if (axis == "slot" || axis == "both") axes.push_back(SelectionAxis::slot);
        if (axes.empty()) fail(ErrorKind::config, "unknown axis: " + axis);
        for (auto a : axes) {
            const auto summary = selection_analysis(logs, a);
            const std::string base = out_prefix + "_" + to_string(a);
            write_file(base + ".json", write_selection_json(summary));
            write_file(base + ".csv", summary.matrix.to_csv());
            std::cout << to_string(a) << ": same-slot " << summary.same_slot_fraction << ", same-domain "
                      << summary.same_domain_fraction << " over " << summary.retrieved << " examples\n";
        }
    });

    // run
    RunConfig cfg;
    std::string run_test_corpus, run_mode = "full_shot", run_target, run_fraction = "1", run_retriever = "dense",
                run_query_mode = "whole", run_embedder = "lexical", run_generator = "mock", run_eval_domain;
    std::string run_corpus, run_ontology, run_out;
    auto* run_cmd = app.add_subcommand("run", "full pipeline, once per seed (accepts --config FILE)");
    run_cmd->add_option("--corpus", run_corpus)->required();
    run_cmd->add_option("--ontology", run_ontology)->required();
    run_cmd->add_option("--test-corpus", run_test_corpus);
    run_cmd->add_option("--mode", run_mode)->capture_default_str();
    run_cmd->add_option("--target", run_target);
    run_cmd->add_option("--fraction", run_fraction)->capture_default_str();
    run_cmd->add_option("--retriever", run_retriever, "dense | bm25 | random")->capture_default_str();
    run_cmd->add_option("--query-mode", run_query_mode, "whole | single")->capture_default_str();
    run_cmd->add_option("--k", cfg.k)->capture_default_str();
    run_cmd->add_option("--embedder", run_embedder, "lexical | remote")->capture_default_str();
    run_cmd->add_option("--dim", cfg.embed_dim)->capture_default_str();
    run_cmd->add_option("--generator", run_generator, "mock | remote")->capture_default_str();
    run_cmd->add_option("--mock-accuracy", cfg.mock_accuracy)->capture_default_str();
    run_cmd->add_option("--epochs", cfg.finetune_epochs, "remote fine-tuning epochs")->capture_default_str();
    run_cmd->add_option("--endpoint", cfg.endpoint);
    run_cmd->add_option("--eval-domain", run_eval_domain, "domain to query and score, or 'all'");
    run_cmd->add_option("--seed", cfg.seeds, "one pipeline run per seed")->expected(1, -1);
    run_cmd->add_option("--out-dir", run_out)->required();
    run_cmd->add_option("--batch-size", cfg.batch_size)->capture_default_str();
    run_cmd->add_option("--workers", cfg.workers)->capture_default_str();
    run_cmd->callback([&] {
        cfg.corpus = run_corpus;
        cfg.ontology = run_ontology;
        if (!run_test_corpus.empty()) cfg.test_corpus = run_test_corpus;
        cfg.split_mode = parse_split_mode(run_mode);
        if (!run_target.empty()) cfg.target_domain = run_target;
        cfg.fraction = Fraction::parse(run_fraction);
        cfg.retriever = parse_retriever_kind(run_retriever);
        cfg.query_mode = parse_query_mode(run_query_mode);
        cfg.embedder = parse_embedder_kind(run_embedder);
        cfg.generator = parse_generator_kind(run_generator);
        if (!run_eval_domain.empty()) cfg.eval_domain = run_eval_domain;
        cfg.output_dir = run_out;
        const auto result = run_experiment(cfg);
        for (std::size_t i = 0; i < result.runs.size(); ++i) {
            std::cout << "seed " << cfg.seeds[i] << ": JGA " << result.runs[i].jga << " over "
                      << result.runs[i].turn_count << " turns\n";
        }
        std::cout << "mean " << result.stats.mean << " std " << result.stats.std << '\n'
                  << "report " << result.report_path.string() << '\n';
    });

    std::vector<std::string> args(argv + 1, argv + argc);
    if (!args.empty() && args.front() == "run") args = expand_config(args);
    std::reverse(args.begin(), args.end());  // CLI11 consumes a reversed vector
    try {
        app.parse(args);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kExitConfig;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run_cli(argc, argv);
    } catch (const district::Error& e) {
        std::cerr << "district: " << district::to_string(e.kind()) << ": " << e.what() << '\n';
        return exit_code(e.kind());
    } catch (const std::exception& e) {
        std::cerr << "district: " << e.what() << '\n';
        return kExitData;
    }
}
