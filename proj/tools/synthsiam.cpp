// synthsiam: command-line front end wiring corpus -> prompts -> generation ->
// training -> calibration -> detection -> evaluation.
//
// Exit codes: 0 success (or Human verdict), 3 Machine verdict, 1 usage error,
// 2 runtime error. Errors print one JSON diagnostic line to stderr.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "synthsiam/config.hpp"
#include "synthsiam/http_client.hpp"
#include "synthsiam/synthsiam.hpp"

namespace {

using namespace synthsiam;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;
constexpr int kExitMachine = 3;

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open '" + path.string() + "'");
    }
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

TemplateRegistry load_registry(const RunConfig& config) {
    if (config.templates.empty()) return TemplateRegistry::builtin();
    return TemplateRegistry::load(config.templates);
}

std::unique_ptr<GenerationClient> make_client(const GeneratorSettings& settings) {
    if (settings.backend == "mock") {
        return std::make_unique<MockGenerator>(settings.seed, settings.model_id);
    }
    if (settings.backend == "http") {
        HttpBackendConfig http;
        http.endpoint = settings.endpoint;
        http.model = settings.model_id;
        http.credential_env = settings.credential_env;
        return std::make_unique<HttpChatClient>(http);
    }
    throw InvalidArgument("unknown generator backend '" + settings.backend + "'");
}

std::shared_ptr<TrainableTextEncoder> make_encoder(const RunConfig& config) {
    if (!config.encoder.checkpoint.empty()) {
        return load_encoder(config.encoder.checkpoint);
    }
    if (config.encoder.backend == "toy") {
        return std::make_shared<ToyEncoder>(config.encoder.dimension, config.encoder.seed);
    }
    if (config.encoder.backend == "transformer") {
        throw InvalidArgument(
            "the transformer backend needs encoder.checkpoint to point at a checkpoint "
            "directory");
    }
    throw InvalidArgument("unknown encoder backend '" + config.encoder.backend + "'");
}

// Encoder for detection/evaluation: explicit checkpoint first, then the run's
// trained encoder, then a fresh eval-mode toy encoder.
std::shared_ptr<TrainableTextEncoder> load_eval_encoder(const RunConfig& config) {
    if (!config.encoder.checkpoint.empty()) {
        return load_encoder(config.encoder.checkpoint);
    }
    if (std::filesystem::exists(config.final_encoder_dir() / "config.json")) {
        return load_encoder(config.final_encoder_dir());
    }
    auto encoder = make_encoder(config);
    encoder->set_mode(EncoderMode::Eval);
    return encoder;
}

Corpus corpus_view(const Corpus& corpus, SplitTag tag) {
    if (!corpus.has_split_tags()) return corpus;
    Corpus out;
    for (const Document* doc : corpus.split(tag)) out.add(*doc);
    if (out.empty()) {
        throw InvalidArgument("corpus has no documents tagged '" + split_tag_name(tag) + "'");
    }
    return out;
}

std::vector<Document> split_documents(const Corpus& corpus, SplitTag tag) {
    const Corpus view = corpus_view(corpus, tag);
    return view.documents();
}

Corpus load_run_corpus(const RunConfig& config) {
    if (!std::filesystem::exists(config.corpus_path())) {
        throw Error("no ingested corpus at '" + config.corpus_path().string() +
                    "'; run `synthsiam ingest` first");
    }
    return load_corpus(config.corpus_path());
}

// Level-1 directly-use-requirement generation from sampled content sources;
// used for the reference pool and the train/val generated sets.
Corpus generate_simple_set(const Corpus& humans, GenerationClient& client,
                           const TemplateRegistry& registry, std::size_t count,
                           std::uint64_t seed, const RunConfig& config,
                           ResponseCache& cache, const std::string& what) {
    detail::SplitMix64 rng(seed);
    const auto eligible = detail::eligible_sources(humans, ContentLevel::L1,
                                                   TemplateVariant::DirectlyUseRequirement);
    const auto sources = detail::sample_documents(humans, eligible, count, rng, what);
    std::vector<PromptSpec> specs;
    specs.reserve(sources.size());
    for (const Document* doc : sources) {
        specs.push_back(render_prompt(registry, TemplateVariant::DirectlyUseRequirement,
                                      derive_content(*doc, ContentLevel::L1)));
    }
    GenerateOptions options;
    options.cache = &cache;
    BatchResult batch = generate_batch(client, specs, config.params, options, 4);
    if (!batch.failures.empty()) {
        throw GenerationError(what + ": " + std::to_string(batch.failures.size()) +
                              " generation failures; first: " +
                              batch.failures.front().message);
    }
    Corpus out;
    for (auto& doc : batch.documents) out.add(std::move(doc));
    return out;
}

std::vector<TrainingPair> build_validation_pairs(const RunConfig& config,
                                                 const Corpus& corpus) {
    const auto val_humans = split_documents(corpus, SplitTag::Val);
    const auto val_generated = load_corpus(config.valset_path()).documents();
    const auto references = load_corpus(config.references_path()).documents();
    return build_pairs(val_humans, val_generated, references,
                       detail::mix_seeds(config.train.seed, 0x7a1ULL));
}

double resolve_threshold(const RunConfig& config, double flag_value) {
    if (flag_value > 0.0) return flag_value;
    const json manifest = read_manifest(config.manifest_path());
    if (manifest.contains("calibration") && manifest["calibration"].contains("threshold")) {
        return manifest["calibration"]["threshold"].get<double>();
    }
    return config.detect.threshold;
}

std::string sanitize_name(std::string name) {
    for (char& c : name) {
        if (c == ':' || c == '/' || c == ' ') c = '_';
    }
    return name;
}

// ---------------------------------------------------------------------------

int cmd_ingest(const RunConfig& config) {
    if (config.corpus.input.empty()) {
        throw InvalidArgument("no corpus input file configured (corpus.input or --input)");
    }
    FieldFilter filter;
    if (!config.corpus.filter_category.empty()) {
        filter = category_filter(config.corpus.filter_category);
    }
    IngestStats stats;
    Corpus corpus = ingest_human_corpus(config.corpus.input, filter, &stats);
    corpus = split_corpus(std::move(corpus), config.corpus.split, config.seed);
    save_corpus(corpus, config.corpus_path());

    const json summary{{"documents", corpus.size()},
                       {"train", corpus.split(SplitTag::Train).size()},
                       {"val", corpus.split(SplitTag::Val).size()},
                       {"test", corpus.split(SplitTag::Test).size()},
                       {"malformed", stats.malformed},
                       {"filtered_out", stats.filtered_out},
                       {"deduplicated", stats.deduplicated},
                       {"corpus_path", config.corpus_path().string()}};
    update_manifest(config.manifest_path(), "ingest",
                    json{{"stats", summary}, {"seed", config.seed},
                         {"input", config.corpus.input}});
    std::cout << summary.dump() << '\n';
    return kExitOk;
}

int cmd_generate(const RunConfig& config, const std::string& what) {
    const Corpus corpus = load_run_corpus(config);
    const TemplateRegistry registry = load_registry(config);
    ResponseCache cache(config.cache_dir());
    const auto client = make_client(config.generator);

    const bool all = what == "all";
    json summary = json::object();

    SuiteBuildOptions suite_options;
    suite_options.params = config.params;
    suite_options.generate.cache = &cache;
    suite_options.registry = &registry;
    suite_options.concurrency = 4;

    if (all || what == "references") {
        const Corpus refs = generate_simple_set(
            corpus_view(corpus, SplitTag::Train), *client, registry,
            config.train.reference_count, detail::mix_seeds(config.seed, 0x1ULL), config,
            cache, "teacher reference sources");
        save_corpus(refs, config.references_path());
        summary["references"] = refs.size();
    }
    if (all || what == "trainset") {
        const Corpus trainset = generate_simple_set(
            corpus_view(corpus, SplitTag::Train), *client, registry,
            config.train.trainset_count, detail::mix_seeds(config.seed, 0x2ULL), config,
            cache, "training-set content sources");
        save_corpus(trainset, config.trainset_path());
        summary["trainset"] = trainset.size();
    }
    if (all || what == "valset") {
        const Corpus valset = generate_simple_set(
            corpus_view(corpus, SplitTag::Val), *client, registry, config.train.valset_count,
            detail::mix_seeds(config.seed, 0x3ULL), config, cache,
            "validation-set content sources");
        save_corpus(valset, config.valset_path());
        summary["valset"] = valset.size();
    }

    const Corpus test_view = corpus_view(corpus, SplitTag::Test);
    if (all || what == "level") {
        const TestSuite suite =
            build_level_suite(test_view, *client, config.eval.per_class,
                              detail::mix_seeds(config.eval.seed, 0x10ULL), suite_options);
        suite.save(config.suite_dir("level"));
        summary["level"] = suite.total_documents();
    }
    if (all || what == "scenario") {
        const TestSuite suite =
            build_scenario_suite(test_view, *client, config.eval.per_cell,
                                 detail::mix_seeds(config.eval.seed, 0x11ULL), suite_options);
        suite.save(config.suite_dir("scenario"));
        summary["scenario"] = suite.total_documents();
    }
    if (all || what == "model") {
        std::vector<std::unique_ptr<GenerationClient>> extra;
        std::vector<GenerationClient*> generators{client.get()};
        for (const auto& settings : config.extra_generators) {
            extra.push_back(make_client(settings));
            generators.push_back(extra.back().get());
        }
        const TestSuite suite =
            build_model_suite(test_view, generators, config.eval.per_class,
                              detail::mix_seeds(config.eval.seed, 0x12ULL), suite_options);
        suite.save(config.suite_dir("model"));
        summary["model"] = suite.total_documents();
    }
    if (all || what == "grid") {
        const TestSuite suite =
            build_grid_suite(test_view, *client, config.eval.grid_per_cell,
                             detail::mix_seeds(config.eval.seed, 0x13ULL), suite_options);
        suite.save(config.suite_dir("grid"));
        summary["grid"] = suite.total_documents();
    }

    summary["registry_hash"] = registry.version_hash();
    update_manifest(config.manifest_path(), "generate:" + what, summary);
    std::cout << summary.dump() << '\n';
    return kExitOk;
}

int cmd_train(const RunConfig& config, const std::string& model) {
    const Corpus corpus = load_run_corpus(config);
    const TemplateRegistry registry = load_registry(config);
    const auto train_humans = split_documents(corpus, SplitTag::Train);
    const auto trainset = load_corpus(config.trainset_path()).documents();
    const auto references = load_corpus(config.references_path()).documents();

    TrainConfig train_config;
    train_config.epochs = config.train.epochs;
    train_config.batch_size = config.train.batch_size;
    train_config.learning_rate = config.train.learning_rate;
    train_config.optimizer = config.train.optimizer;
    train_config.seed = config.train.seed;

    json summary = json::object();

    if (model == "siamese" || model == "both") {
        const auto encoder = make_encoder(config);
        train_config.checkpoint_dir = config.checkpoints_dir();
        std::vector<TrainingPair> validation;
        if (std::filesystem::exists(config.valset_path())) {
            validation = build_validation_pairs(config, corpus);
        }
        TrainingHistory history;
        if (config.train.resample_references) {
            history = train_siamese_resampled(*encoder, train_humans, trainset, references,
                                              train_config,
                                              validation.empty() ? nullptr : &validation);
        } else {
            const auto pairs =
                build_pairs(train_humans, trainset, references, config.train.seed);
            history = train_siamese(*encoder, pairs, train_config,
                                    validation.empty() ? nullptr : &validation);
        }
        encoder->save(config.final_encoder_dir());
        detail::write_json_file(config.checkpoints_dir() / "history.json",
                                history.to_json());
        detail::write_json_file(
            config.checkpoints_dir() / "MANIFEST.json",
            json{{"registry_hash", registry.version_hash()},
                 {"seed", config.train.seed},
                 {"encoder", json{{"backend", encoder->backend_name()},
                                  {"dimension", encoder->dimension()}}},
                 {"train", json{{"epochs", train_config.epochs},
                                {"batch_size", train_config.batch_size},
                                {"learning_rate", train_config.learning_rate},
                                {"optimizer", train_config.optimizer},
                                {"resample_references", config.train.resample_references}}}});
        json entry{{"epochs", history.epochs.size()},
                   {"final_loss", history.epochs.back().mean_loss},
                   {"checkpoint", config.final_encoder_dir().string()},
                   {"registry_hash", registry.version_hash()},
                   {"seed", config.train.seed}};
        if (history.epochs.back().val_accuracy.has_value()) {
            entry["val_accuracy"] = *history.epochs.back().val_accuracy;
        }
        summary["siamese"] = entry;
    }

    if (model == "baseline" || model == "both") {
        auto encoder = make_encoder(config);
        SingleInputClassifier classifier(encoder,
                                         detail::mix_seeds(config.train.seed, 0xbaceULL));
        std::vector<Document> docs = train_humans;
        docs.insert(docs.end(), trainset.begin(), trainset.end());
        std::vector<Document> validation = split_documents(corpus, SplitTag::Val);
        if (std::filesystem::exists(config.valset_path())) {
            const auto valset = load_corpus(config.valset_path()).documents();
            validation.insert(validation.end(), valset.begin(), valset.end());
        }
        TrainConfig baseline_config = train_config;
        baseline_config.checkpoint_dir.clear();
        const TrainingHistory history =
            train_baseline(classifier, docs, baseline_config,
                           validation.empty() ? nullptr : &validation);
        classifier.save(config.baseline_dir() / "final");
        detail::write_json_file(config.baseline_dir() / "history.json", history.to_json());
        json entry{{"epochs", history.epochs.size()},
                   {"final_loss", history.epochs.back().mean_loss},
                   {"checkpoint", (config.baseline_dir() / "final").string()}};
        if (history.epochs.back().val_accuracy.has_value()) {
            entry["val_accuracy"] = *history.epochs.back().val_accuracy;
        }
        summary["baseline"] = entry;
    }

    if (summary.empty()) {
        throw InvalidArgument("--model must be siamese, baseline, or both");
    }
    update_manifest(config.manifest_path(), "train", summary);
    std::cout << summary.dump() << '\n';
    return kExitOk;
}

int cmd_calibrate(const RunConfig& config) {
    const Corpus corpus = load_run_corpus(config);
    const auto encoder = load_eval_encoder(config);
    const auto pairs = build_validation_pairs(config, corpus);
    const double tau =
        calibrate_threshold(*encoder, pairs, config.detect.calibration_grid_step);
    const json summary{{"threshold", tau},
                       {"grid_step", config.detect.calibration_grid_step},
                       {"validation_pairs", pairs.size()}};
    update_manifest(config.manifest_path(), "calibration", summary);
    // record tau in the training history as well, when one exists
    const auto history_path = config.checkpoints_dir() / "history.json";
    if (std::filesystem::exists(history_path)) {
        TrainingHistory history =
            TrainingHistory::from_json(detail::read_json_file(history_path));
        history.threshold = tau;
        detail::write_json_file(history_path, history.to_json());
    }
    std::cout << summary.dump() << '\n';
    return kExitOk;
}

std::vector<Document> load_reference_documents(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) {
        throw InvalidArgument("references path '" + path.string() + "' does not exist");
    }
    if (std::filesystem::is_regular_file(path)) {
        return load_corpus(path).documents();
    }
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(path)) {
        if (entry.is_regular_file()) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) {
        throw InvalidArgument("references directory '" + path.string() + "' is empty");
    }
    std::vector<Document> docs;
    PromptMeta meta;
    meta.variant = "operator_supplied";
    meta.level = 1;
    meta.derivation = "external";
    for (const auto& file : files) {
        docs.push_back(Document::generated("ref-" + file.filename().string(),
                                           read_text_file(file), "operator", meta));
    }
    return docs;
}

int cmd_detect(const RunConfig& config, const std::string& query_file,
               const std::string& references_path, double threshold_flag,
               const std::string& aggregation, bool pretty) {
    const Document query = Document::human("query", read_text_file(query_file));
    const auto references = load_reference_documents(references_path);
    const auto encoder = load_eval_encoder(config);
    const double threshold = resolve_threshold(config, threshold_flag);
    const Verdict verdict = detect(*encoder, query, references, threshold,
                                   aggregation_from_name(aggregation));
    std::cout << (pretty ? verdict.to_json().dump(2) : verdict.to_json().dump()) << '\n';
    return verdict.is_machine ? kExitMachine : kExitOk;
}

int cmd_eval(const RunConfig& config, const std::string& suite_name,
             const std::string& detector_name, double threshold_flag) {
    const auto suite_path = config.suite_dir(suite_name);
    if (!std::filesystem::exists(suite_path / "suite.json")) {
        throw Error("no " + suite_name + " suite at '" + suite_path.string() +
                    "'; run `synthsiam generate --suite " + suite_name + "` first");
    }
    const TestSuite suite = TestSuite::load(suite_path);

    // Keep whichever backing objects the detector needs alive for the run.
    std::shared_ptr<TrainableTextEncoder> encoder;
    std::unique_ptr<SingleInputClassifier> classifier;
    std::unique_ptr<DetectorAdapter> adapter;
    std::unique_ptr<Detector> detector;

    if (detector_name == "siamese") {
        encoder = load_eval_encoder(config);
        if (!std::filesystem::exists(config.references_path())) {
            throw Error("no reference articles at '" + config.references_path().string() +
                        "'; run `synthsiam generate --suite references` first");
        }
        auto references = load_corpus(config.references_path()).documents();
        detector = std::make_unique<SiameseDetector>(
            *encoder, std::move(references), resolve_threshold(config, threshold_flag),
            aggregation_from_name(config.detect.aggregation));
    } else if (detector_name == "baseline") {
        encoder = load_encoder(config.baseline_dir() / "final" / "encoder");
        classifier = std::make_unique<SingleInputClassifier>(
            SingleInputClassifier::load(config.baseline_dir() / "final", encoder));
        detector = std::make_unique<BaselineDetector>(*classifier);
    } else if (detector_name == "oracle") {
        detector = std::make_unique<OracleDetector>();
    } else if (detector_name == "constant") {
        adapter = std::make_unique<ConstantScoreAdapter>(0.5);
        detector = std::make_unique<AdapterDetector>(*adapter);
    } else if (detector_name.starts_with("adapter:")) {
        const std::string name = detector_name.substr(8);
        const auto it = config.adapters.find(name);
        if (it == config.adapters.end()) {
            throw InvalidArgument("no adapter '" + name + "' in configuration");
        }
        if (!it->second.command.empty()) {
            adapter = std::make_unique<ExecAdapter>(it->second.command);
        } else if (!it->second.endpoint.empty()) {
            adapter = std::make_unique<HttpScoreAdapter>(it->second.endpoint);
        } else {
            throw InvalidArgument("adapter '" + name + "' has neither command nor endpoint");
        }
        detector = std::make_unique<AdapterDetector>(*adapter);
    } else {
        throw InvalidArgument("unknown detector '" + detector_name + "'");
    }

    const AccuracyReport report = evaluate_detector(*detector, suite);

    json cells = json::object();
    for (const auto& [key, cell] : report.cells) cells[key] = cell.accuracy();
    json reports = json::array();
    for (const auto& format : config.eval.formats) {
        const ReportFormat rf = report_format_from_name(format);
        const auto path = config.reports_dir() /
                          (suite_name + "_" + sanitize_name(report.detector_name) +
                           (rf == ReportFormat::Markdown ? ".md" : ".csv"));
        write_report(report, rf, path);
        reports.push_back(path.string());
    }
    const json summary{{"suite", suite_name},
                       {"detector", report.detector_name},
                       {"cells", cells},
                       {"reports", reports},
                       {"provenance_hash", report.provenance.hash()}};
    update_manifest(config.manifest_path(), "eval:" + suite_name + ":" + detector_name,
                    summary);
    std::cout << summary.dump() << '\n';
    return kExitOk;
}

int report_error(const std::string& type, const std::string& message) {
    std::cerr << json{{"error", json{{"type", type}, {"message", message}}}}.dump() << '\n';
    return type == "usage" ? kExitUsage : kExitRuntime;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"synthsiam: reference-based synthetic-text detection toolkit"};
    app.require_subcommand(1);

    std::string config_path;
    std::string run_dir_override;
    app.add_option("--config", config_path, "JSON run configuration file");
    app.add_option("--run-dir", run_dir_override, "override the run directory");

    auto* ingest = app.add_subcommand("ingest", "ingest and split a human corpus");
    std::string ingest_input;
    std::string ingest_filter;
    ingest->add_option("--input", ingest_input, "arXiv-style JSONL corpus file");
    ingest->add_option("--filter-category", ingest_filter, "keep only this category");

    auto* generate = app.add_subcommand("generate", "build prompt sets and generate text");
    std::string generate_what = "all";
    generate->add_option("--suite", generate_what,
                         "references|trainset|valset|level|scenario|model|grid|all");

    auto* train = app.add_subcommand("train", "train the Siamese encoder (and baseline)");
    std::string train_model = "siamese";
    train->add_option("--model", train_model, "siamese|baseline|both");

    auto* calibrate = app.add_subcommand("calibrate", "grid-search the decision threshold");

    auto* detect_cmd = app.add_subcommand("detect", "classify one query text");
    std::string query_file;
    std::string references_path;
    double detect_threshold = 0.0;
    std::string detect_aggregation;
    bool detect_pretty = false;
    detect_cmd->add_option("--query", query_file, "query text file")->required();
    detect_cmd->add_option("--references", references_path,
                           "directory of reference texts (or a corpus JSONL)")
        ->required();
    detect_cmd->add_option("--threshold", detect_threshold, "decision threshold in (0,2)");
    detect_cmd->add_option("--aggregation", detect_aggregation, "mean|min");
    detect_cmd->add_flag("--pretty", detect_pretty, "human-readable verdict");

    auto* eval_cmd = app.add_subcommand("eval", "score a detector on a test suite");
    std::string eval_suite;
    std::string eval_detector = "siamese";
    double eval_threshold = 0.0;
    eval_cmd->add_option("--suite", eval_suite, "level|scenario|model|grid")->required();
    eval_cmd->add_option("--detector", eval_detector,
                         "siamese|baseline|oracle|constant|adapter:NAME");
    eval_cmd->add_option("--threshold", eval_threshold, "decision threshold in (0,2)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        return report_error("usage", e.what());
    }

    try {
        RunConfig config;
        if (!config_path.empty()) config = RunConfig::load(config_path);
        if (!run_dir_override.empty()) config.run_dir = run_dir_override;
        if (!ingest_input.empty()) config.corpus.input = ingest_input;
        if (!ingest_filter.empty()) config.corpus.filter_category = ingest_filter;
        if (!detect_aggregation.empty()) config.detect.aggregation = detect_aggregation;

        if (app.got_subcommand(ingest)) return cmd_ingest(config);
        if (app.got_subcommand(generate)) return cmd_generate(config, generate_what);
        if (app.got_subcommand(train)) return cmd_train(config, train_model);
        if (app.got_subcommand(calibrate)) return cmd_calibrate(config);
        if (app.got_subcommand(detect_cmd)) {
            return cmd_detect(config, query_file, references_path, detect_threshold,
                              config.detect.aggregation, detect_pretty);
        }
        if (app.got_subcommand(eval_cmd)) {
            return cmd_eval(config, eval_suite, eval_detector, eval_threshold);
        }
        return report_error("usage", "no subcommand selected");
    } catch (const InvalidArgument& e) {
        return report_error("usage", e.what());
    } catch (const std::exception& e) {
        return report_error("runtime", e.what());
    }
}
