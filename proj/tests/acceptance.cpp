// Acceptance suite: each test case checks one release criterion end to end and
// prints a single pass/fail line with its runtime.

#include <catch2/catch_amalgamated.hpp>

#include <httplib.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <thread>

#include "synthsiam/config.hpp"
#include "synthsiam/http_client.hpp"
#include "synthsiam/synthsiam.hpp"
#include "test_support.hpp"

using namespace synthsiam;
using testsupport::last_json_line;
using testsupport::run_cli;

namespace {

class Criterion {
public:
    Criterion(int number, std::string title)
        : number_(number), title_(std::move(title)),
          start_(std::chrono::steady_clock::now()) {}

    void expect(bool condition, const std::string& what) {
        if (!condition) failures_.push_back(what);
    }

    double elapsed_seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_)
            .count();
    }

    void finish() {
        const bool pass = failures_.empty();
        std::printf("[criterion %02d] %s: %s (%.2fs)\n", number_, title_.c_str(),
                    pass ? "PASS" : "FAIL", elapsed_seconds());
        for (const auto& f : failures_) std::printf("    failed: %s\n", f.c_str());
        std::fflush(stdout);
        if (!pass) FAIL("criterion " << number_ << " failed: " << failures_.front());
        SUCCEED();
    }

private:
    int number_;
    std::string title_;
    std::chrono::steady_clock::time_point start_;
    std::vector<std::string> failures_;
};

double naive_cosine_distance(const std::vector<double>& a, const std::vector<double>& b) {
    long double dot = 0.0L, na = 0.0L, nb = 0.0L;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += static_cast<long double>(a[i]) * b[i];
        na += static_cast<long double>(a[i]) * a[i];
        nb += static_cast<long double>(b[i]) * b[i];
    }
    return static_cast<double>(1.0L - dot / (std::sqrt(na) * std::sqrt(nb)));
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

std::string suite_digest(const TestSuite& suite) {
    std::string digest = suite.provenance.to_json().dump();
    for (const auto& cell : suite.cells) {
        digest += "\n# " + cell.key;
        for (const auto& entry : cell.entries) {
            digest += "\n" + document_to_json(entry.doc).dump() +
                      (entry.label == TrueLabel::Machine ? "|m" : "|h");
        }
    }
    return digest;
}

Corpus fixture_subset(std::size_t count, std::size_t offset = 0) {
    Corpus out;
    for (auto& doc : testsupport::fixture_documents(count, offset)) out.add(std::move(doc));
    return out;
}

} // namespace

TEST_CASE("criterion 1: metric oracle") {
    Criterion c(1, "cosine distance matches the independent oracle");

    c.expect(cosine_distance(FeatureVector{{1, 0}}, FeatureVector{{1, 0}}) == 0.0,
             "identical direction must give exactly 0");
    c.expect(cosine_distance(FeatureVector{{1, 0}}, FeatureVector{{0, 1}}) == 1.0,
             "orthogonal must give exactly 1");
    c.expect(cosine_distance(FeatureVector{{1, 0}}, FeatureVector{{-1, 0}}) == 2.0,
             "opposite must give exactly 2");

    detail::SplitMix64 rng(20240601);
    double max_delta = 0.0;
    for (int i = 0; i < 1000; ++i) {
        std::vector<double> a(64), b(64);
        for (auto& v : a) v = rng.normal();
        for (auto& v : b) v = rng.normal();
        max_delta = std::max(max_delta,
                             std::abs(cosine_distance(FeatureVector{a}, FeatureVector{b}) -
                                      naive_cosine_distance(a, b)));
    }
    c.expect(max_delta <= 1e-9,
             "max |ours - naive| = " + std::to_string(max_delta) + " > 1e-9");
    c.expect(c.elapsed_seconds() < 1.0, "runtime exceeded 1 s");
    c.finish();
}

TEST_CASE("criterion 2: loss correctness") {
    Criterion c(2, "contrastive loss matches hand substitution and is monotone");

    c.expect(contrastive_loss(0.0, PairLabel::Same) == 0.0, "(0, Same) != 0");
    c.expect(contrastive_loss(2.0, PairLabel::Different) == 0.0, "(2, Different) != 0");
    c.expect(contrastive_loss(1.0, PairLabel::Same) == 1.0, "(1, Same) != 1");
    c.expect(contrastive_loss(0.5, PairLabel::Different) == 2.25, "(0.5, Different) != 2.25");

    double prev_same = -1.0, prev_diff = 5.0;
    bool monotone = true, bounded = true;
    for (int k = 0; k <= 200; ++k) {
        const double d = 2.0 * static_cast<double>(k) / 200.0;
        const double same = contrastive_loss(d, PairLabel::Same);
        const double diff = contrastive_loss(d, PairLabel::Different);
        bounded = bounded && same >= 0.0 && same <= 4.0 && diff >= 0.0 && diff <= 4.0;
        monotone = monotone && same > prev_same && diff < prev_diff;
        prev_same = same;
        prev_diff = diff;
    }
    c.expect(bounded, "loss left [0, 4] on the 201-point grid");
    c.expect(monotone, "monotonicity violated on the 201-point grid");
    c.finish();
}

TEST_CASE("criterion 3: gradient check") {
    Criterion c(3, "analytic gradients match central finite differences");

    const auto humans = testsupport::fixture_documents(8);
    const auto machines = testsupport::mock_documents(8, 9);
    const auto pool = testsupport::mock_documents(4, 10);
    auto pairs = build_pairs(humans, machines, pool, 5);
    pairs.resize(16);

    ToyEncoder encoder(16, 21);
    const LossGrad analytic = siamese_loss_and_gradient(encoder, pairs);
    auto& params = encoder.parameters();
    double max_rel = 0.0;
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double h = 1e-5;
        const double saved = params[i];
        params[i] = saved + h;
        const double up = siamese_loss_and_gradient(encoder, pairs).loss;
        params[i] = saved - h;
        const double down = siamese_loss_and_gradient(encoder, pairs).loss;
        params[i] = saved;
        const double fd = (up - down) / (2.0 * h);
        max_rel = std::max(max_rel, std::abs(fd - analytic.grad[i]) /
                                        std::max(1e-5, std::abs(fd) +
                                                           std::abs(analytic.grad[i])));
    }
    c.expect(max_rel <= 1e-4,
             "max relative error " + std::to_string(max_rel) + " > 1e-4");
    c.expect(c.elapsed_seconds() < 10.0, "runtime exceeded 10 s");
    c.finish();
}

TEST_CASE("criterion 4: separable mock experiment") {
    Criterion c(4, "toy encoder and baseline reach 90% on the separable corpus");

    const auto exp = testsupport::make_mock_experiment(200, 0.8, 11);
    TrainConfig config;
    config.epochs = 20;
    config.batch_size = 16;
    config.learning_rate = 0.02;
    config.seed = 3;

    ToyEncoder encoder(64, 7);
    train_siamese_resampled(encoder, exp.train_human, exp.train_machine, exp.references,
                            config);
    const auto held_pairs =
        build_pairs(exp.held_human, exp.held_machine, exp.references, 111);
    const double siamese_accuracy = pair_accuracy(encoder, held_pairs, kDefaultThreshold);
    c.expect(siamese_accuracy >= 0.90, "siamese held-out pair accuracy " +
                                           std::to_string(siamese_accuracy) + " < 0.90");

    std::vector<Document> train_docs = exp.train_human;
    train_docs.insert(train_docs.end(), exp.train_machine.begin(), exp.train_machine.end());
    std::vector<Document> held_docs = exp.held_human;
    held_docs.insert(held_docs.end(), exp.held_machine.begin(), exp.held_machine.end());
    SingleInputClassifier baseline(std::make_shared<ToyEncoder>(64, 7), 13);
    train_baseline(baseline, train_docs, config);
    const double baseline_acc = baseline_accuracy(baseline, held_docs);
    c.expect(baseline_acc >= 0.90,
             "baseline held-out accuracy " + std::to_string(baseline_acc) + " < 0.90");
    c.expect(c.elapsed_seconds() < 120.0, "runtime exceeded 2 min");
    c.finish();
}

TEST_CASE("criterion 5: threshold calibration oracle") {
    Criterion c(5, "calibrated threshold equals the brute-force argmax");

    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        ToyEncoder encoder(32, seed);
        encoder.set_mode(EncoderMode::Eval);
        const auto humans = testsupport::fixture_documents(15, seed);
        const auto machines = testsupport::mock_documents(15, seed + 100);
        const auto pool = testsupport::mock_documents(4, seed + 200);
        const auto pairs = build_pairs(humans, machines, pool, seed);

        const double grid_step = 0.05;
        const double tau = calibrate_threshold(encoder, pairs, grid_step);

        std::vector<std::pair<double, PairLabel>> scored;
        std::size_t same_total = 0;
        for (const auto& p : pairs) {
            scored.emplace_back(cosine_distance(encoder.encode(p.query.text),
                                                encoder.encode(p.reference.text)),
                                p.label);
            same_total += p.label == PairLabel::Same ? 1 : 0;
        }
        double best_score = -1.0, best_tau = 0.0;
        const int steps = static_cast<int>(std::llround(2.0 / grid_step)) - 1;
        for (int k = 1; k <= steps; ++k) {
            const double candidate = k * grid_step;
            std::size_t sc = 0, dc = 0;
            for (const auto& [d, label] : scored) {
                if (label == PairLabel::Same && d < candidate) ++sc;
                if (label == PairLabel::Different && d >= candidate) ++dc;
            }
            const double balanced =
                0.5 * (static_cast<double>(sc) / static_cast<double>(same_total) +
                       static_cast<double>(dc) /
                           static_cast<double>(scored.size() - same_total));
            if (balanced > best_score + 1e-12 ||
                (std::abs(balanced - best_score) <= 1e-12 &&
                 std::abs(candidate - 1.0) < std::abs(best_tau - 1.0) - 1e-12)) {
                best_score = balanced;
                best_tau = candidate;
            }
        }
        c.expect(tau == best_tau, "seed " + std::to_string(seed) + ": calibrate gave " +
                                      std::to_string(tau) + ", brute force " +
                                      std::to_string(best_tau));
    }
    c.finish();
}

TEST_CASE("criterion 6: suite construction") {
    Criterion c(6, "suite builders produce the declared cell structures reproducibly");

    const Corpus corpus = fixture_subset(40);
    const auto build_all = [&]() {
        MockGenerator client(3);
        MockGenerator extra(4, "mock-b");
        std::vector<TestSuite> suites;
        suites.push_back(build_level_suite(corpus, client, 5, 17));
        suites.push_back(build_scenario_suite(corpus, client, 5, 21));
        suites.push_back(build_model_suite(corpus, {&client, &extra}, 5, 29));
        suites.push_back(build_grid_suite(corpus, client, 3, 31));
        return suites;
    };

    const auto suites = build_all();
    c.expect(suites[0].cells.size() == 3, "level suite must have 3 cells");
    c.expect(suites[1].cells.size() == 8, "scenario suite must have 8 cells");
    c.expect(suites[2].cells.size() == 4, "model suite must have 4 cells");
    c.expect(suites[3].cells.size() == 16, "grid suite must have 16 cells");
    for (const auto& cell : suites[0].cells) {
        c.expect(cell.entries.size() == 10, "level cell " + cell.key + " count != 10");
    }
    for (const auto& cell : suites[1].cells) {
        c.expect(cell.entries.size() == 10, "scenario cell " + cell.key + " count != 10");
    }
    for (const auto& cell : suites[2].cells) {
        c.expect(cell.entries.size() == 10, "model cell " + cell.key + " count != 10");
    }
    for (const auto& cell : suites[3].cells) {
        c.expect(cell.entries.size() == 3, "grid cell " + cell.key + " count != 3");
        for (const auto& entry : cell.entries) {
            c.expect(entry.label == TrueLabel::Machine,
                     "grid cell " + cell.key + " must be machine-only");
        }
    }

    const auto again = build_all();
    for (std::size_t i = 0; i < suites.size(); ++i) {
        c.expect(suite_digest(suites[i]) == suite_digest(again[i]),
                 "suite " + suite_kind_name(suites[i].kind) +
                     " not byte-identical across runs");
    }
    c.finish();
}

TEST_CASE("criterion 7: harness soundness") {
    Criterion c(7, "oracle scores 100%, constant stub 50%, recount matches");

    const Corpus corpus = fixture_subset(40);
    MockGenerator client(3);
    MockGenerator extra(4, "mock-b");
    std::vector<TestSuite> suites;
    suites.push_back(build_level_suite(corpus, client, 5, 17));
    suites.push_back(build_scenario_suite(corpus, client, 5, 21));
    suites.push_back(build_model_suite(corpus, {&client, &extra}, 5, 29));
    suites.push_back(build_grid_suite(corpus, client, 3, 31));

    const OracleDetector oracle;
    ConstantScoreAdapter constant_stub(0.5);
    const AdapterDetector constant(constant_stub);

    for (const auto& suite : suites) {
        const AccuracyReport report = evaluate_detector(oracle, suite);
        for (const auto& [key, cell] : report.cells) {
            c.expect(cell.accuracy() == 1.0,
                     "oracle not 100% in " + suite_kind_name(suite.kind) + "/" + key);
        }

        const AccuracyReport const_report = evaluate_detector(constant, suite);
        for (const auto& [key, cell] : const_report.cells) {
            if (cell.human_total == cell.machine_total) {
                c.expect(cell.accuracy() == 0.5,
                         "constant stub not exactly 0.5 on balanced cell " + key);
            }
        }

        // independent recount
        for (const auto& cell : suite.cells) {
            std::size_t correct = 0;
            for (const auto& entry : cell.entries) {
                if (oracle.classify_machine(entry.doc) ==
                    (entry.label == TrueLabel::Machine)) {
                    ++correct;
                }
            }
            const CellAccuracy* reported = report.find_cell(cell.key);
            c.expect(reported != nullptr && reported->correct == correct &&
                         reported->total == cell.entries.size(),
                     "recount mismatch in " + cell.key);
        }
    }
    c.finish();
}

TEST_CASE("criterion 8: invariance suite") {
    Criterion c(8, "detection invariances and threshold monotonicity");

    class ScaledEncoder final : public TextEncoder {
    public:
        ScaledEncoder(const TextEncoder& base, double factor)
            : base_(base), factor_(factor) {}
        FeatureVector encode(std::string_view text) const override {
            FeatureVector v = base_.encode(text);
            for (double& x : v.values) x *= factor_;
            return v;
        }
        std::size_t dimension() const override { return base_.dimension(); }
        EncoderMode mode() const override { return EncoderMode::Eval; }
        void set_mode(EncoderMode) override {}
        std::string backend_name() const override { return "scaled"; }
        void save(const std::filesystem::path&) const override {}

    private:
        const TextEncoder& base_;
        double factor_;
    };

    ToyEncoder encoder(32, 5);
    encoder.set_mode(EncoderMode::Eval);
    auto references = testsupport::mock_documents(4, 6);

    std::vector<Document> queries = testsupport::fixture_documents(50);
    for (auto& doc : testsupport::mock_documents(50, 71)) queries.push_back(doc);

    detail::SplitMix64 rng(17);
    std::size_t checked = 0;
    for (const auto& query : queries) {
        const double tau = 0.2 + 1.6 * rng.uniform();
        const Verdict plain = detect(encoder, query, references, tau);

        for (const double alpha : {0.5, 2.0, 17.0}) {
            const ScaledEncoder scaled(encoder, alpha);
            c.expect(detect(scaled, query, references, tau).is_machine == plain.is_machine,
                     "scaling flipped a decision for " + query.id);
        }

        auto shuffled = references;
        rng.shuffle(shuffled);
        const Verdict permuted = detect(encoder, query, shuffled, tau);
        c.expect(std::abs(permuted.distance - plain.distance) <= 1e-12,
                 "reference permutation moved the distance for " + query.id);
        c.expect(permuted.is_machine == plain.is_machine,
                 "reference permutation flipped a decision for " + query.id);

        bool was_machine = false;
        for (double sweep = 0.1; sweep < 2.0; sweep += 0.1) {
            const bool is_machine = detect(encoder, query, references, sweep).is_machine;
            c.expect(!was_machine || is_machine,
                     "raising threshold flipped Machine to Human for " + query.id);
            was_machine = is_machine;
        }
        ++checked;
    }
    c.expect(checked == 100, "expected 100 seeded verdicts");
    c.finish();
}

TEST_CASE("criterion 9: end-to-end mock pipeline via the CLI") {
    Criterion c(9, "ingest -> generate -> train -> calibrate -> eval -> report");

    testsupport::TempDir tmp("accept-e2e");
    const auto run_dir = tmp.path() / "run";
    const std::string base =
        "--config configs/mock_pipeline.json --run-dir '" + run_dir.string() + "' ";

    const auto step = [&](const std::string& args) {
        const auto result = run_cli(base + args);
        c.expect(result.exit_code == 0,
                 "`" + args + "` exited " + std::to_string(result.exit_code) + ": " +
                     result.output.substr(0, 300));
        return result;
    };

    step("ingest");
    step("generate --suite all");
    step("train --model both");
    const auto calibrated = step("calibrate");
    const json calibration = last_json_line(calibrated.output);
    c.expect(calibration.contains("threshold"), "calibrate printed no threshold");

    const std::size_t expected_cells[] = {3, 8, 4, 16};
    const std::string suites[] = {"level", "scenario", "model", "grid"};
    for (int i = 0; i < 4; ++i) {
        step("eval --suite " + suites[i] + " --detector siamese");
        const auto md = run_dir / "reports" / (suites[i] + "_siamese.md");
        const auto csv = run_dir / "reports" / (suites[i] + "_siamese.csv");
        c.expect(std::filesystem::exists(md), suites[i] + " markdown report missing");
        c.expect(std::filesystem::exists(csv), suites[i] + " csv report missing");
        if (!std::filesystem::exists(csv)) continue;
        const auto cells = parse_report_csv(read_file(csv));
        c.expect(cells.size() == expected_cells[i],
                 suites[i] + " report has " + std::to_string(cells.size()) +
                     " cells, expected " + std::to_string(expected_cells[i]));
        for (const auto& [key, cell] : cells) {
            c.expect(cell.total > 0, suites[i] + " cell " + key + " is empty");
        }
    }

    // table-shaped markdown spot checks
    const std::string level_md = read_file(run_dir / "reports" / "level_siamese.md");
    c.expect(level_md.find("| Level 1 |") != std::string::npos,
             "level report lacks the Level 1 row");
    const std::string grid_md = read_file(run_dir / "reports" / "grid_siamese.md");
    c.expect(grid_md.find("Directly use requirement") != std::string::npos,
             "grid report lacks the variant columns");
    const std::string scenario_md = read_file(run_dir / "reports" / "scenario_siamese.md");
    c.expect(scenario_md.find("| Same |") != std::string::npos &&
                 scenario_md.find("| Different |") != std::string::npos,
             "scenario report lacks Same/Different rows");
    const std::string model_md = read_file(run_dir / "reports" / "model_siamese.md");
    c.expect(model_md.find("mock-b") != std::string::npos,
             "model report lacks the second generator column");

    c.expect(c.elapsed_seconds() < 300.0, "pipeline exceeded 5 min");
    c.finish();
}

TEST_CASE("criterion 10: operator-supplied encoder and real backend emit the level report") {
    Criterion c(10, "cmd_eval emits the Table 2-format report with external assets");

    testsupport::TempDir tmp("accept-real");
    const auto run_dir = tmp.path() / "run";

    // Operator-supplied encoder checkpoint in the documented format: a small
    // transformer saved to disk.
    TransformerConfig tconfig;
    tconfig.hidden = 32;
    tconfig.heads = 4;
    tconfig.layers = 1;
    tconfig.ffn_dim = 64;
    tconfig.max_positions = 96;
    tconfig.vocab = {"[UNK]"};
    {
        std::set<std::string> words;
        for (const auto& doc : testsupport::fixture_documents(60)) {
            for (const auto& tok : tokenize_words(doc.text)) words.insert(tok);
        }
        for (const auto& w : words) tconfig.vocab.push_back(w);
    }
    TransformerEncoder::random_init(tconfig, 41)->save(tmp.path() / "checkpoint");

    // Stand-in for a remote generation backend: a chat-completion HTTP service.
    MockGenerator upstream(77, "remote-gpt");
    httplib::Server server;
    server.Post("/v1/chat/completions",
                [&](const httplib::Request& req, httplib::Response& res) {
                    const json request = json::parse(req.body);
                    GenerationParams params;
                    params.temperature = request.value("temperature", 0.7);
                    params.max_tokens = request.value("max_tokens", 256);
                    const std::string prompt =
                        request["messages"][0]["content"].get<std::string>();
                    const json reply{
                        {"choices",
                         json::array({json{{"message",
                                            json{{"role", "assistant"},
                                                 {"content",
                                                  upstream.complete(prompt, params)}}}}})}};
                    res.set_content(reply.dump(), "application/json");
                });
    const int port = server.bind_to_any_port("127.0.0.1");
    c.expect(port > 0, "could not bind the backend server");
    std::thread server_thread([&]() { server.listen_after_bind(); });
    server.wait_until_ready();

    RunConfig config;
    config.run_dir = run_dir;
    config.corpus.input = testsupport::fixture_corpus_path().string();
    config.templates = testsupport::registry_path().string();
    config.generator.backend = "http";
    config.generator.model_id = "remote-gpt";
    config.generator.endpoint =
        "http://127.0.0.1:" + std::to_string(port) + "/v1/chat/completions";
    config.encoder.backend = "transformer";
    config.encoder.checkpoint = (tmp.path() / "checkpoint").string();
    config.eval.per_class = 3;
    config.train.reference_count = 4;
    const auto config_path = tmp.path() / "config.json";
    detail::write_json_file(config_path, config.to_json());

    const std::string base = "--config '" + config_path.string() + "' ";
    for (const std::string& args :
         {std::string("ingest"), std::string("generate --suite references"),
          std::string("generate --suite level"),
          std::string("eval --suite level --detector siamese --threshold 1.0")}) {
        const auto result = run_cli(base + args);
        c.expect(result.exit_code == 0,
                 "`" + args + "` exited " + std::to_string(result.exit_code) + ": " +
                     result.output.substr(0, 300));
    }

    const auto report_path = run_dir / "reports" / "level_siamese.md";
    c.expect(std::filesystem::exists(report_path), "level report missing");
    const std::string report = read_file(report_path);
    for (const std::string row : {"| Level 1 |", "| Level 2 |", "| Level 3 |"}) {
        c.expect(report.find(row) != std::string::npos, "report lacks row " + row);
    }

    // documentation states the paper's reference values as context only
    const std::string readme = read_file(testsupport::source_dir() / "README.md");
    c.expect(readme.find("95.0%") != std::string::npos,
             "README does not state the reference accuracy values");
    c.expect(readme.find("not a pass/fail") != std::string::npos,
             "README does not mark the reference values as context only");

    server.stop();
    server_thread.join();
    c.finish();
}
