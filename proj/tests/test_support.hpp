#pragma once

// Shared helpers for the test suites: fixture paths, scratch directories, and
// the separable mock corpus used by the training experiments.

#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include "synthsiam/corpus.hpp"
#include "synthsiam/generation.hpp"
#include "synthsiam/prompts.hpp"

namespace testsupport {

inline std::filesystem::path source_dir() { return SYNTHSIAM_SOURCE_DIR; }

inline std::filesystem::path fixture_corpus_path() {
    return source_dir() / "data" / "fixtures" / "human_abstracts.jsonl";
}

inline std::filesystem::path registry_path() {
    return source_dir() / "data" / "templates" / "default_registry.txt";
}

inline std::filesystem::path cli_path() { return SYNTHSIAM_CLI_PATH; }

// Unique scratch directory removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static std::atomic<unsigned> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("synthsiam-test-" + tag + "-" + std::to_string(::getpid()) + "-" +
                 std::to_string(counter.fetch_add(1)));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

inline const synthsiam::Corpus& fixture_corpus() {
    static const synthsiam::Corpus corpus =
        synthsiam::ingest_human_corpus(fixture_corpus_path());
    return corpus;
}

inline std::vector<synthsiam::Document> fixture_documents(std::size_t count,
                                                          std::size_t offset = 0) {
    const auto& docs = fixture_corpus().documents();
    std::vector<synthsiam::Document> out;
    for (std::size_t i = offset; i < docs.size() && out.size() < count; ++i) {
        out.push_back(docs[i]);
    }
    return out;
}

// Machine documents generated by the mock backend from level-1 prompts over
// fixture titles.
inline std::vector<synthsiam::Document> mock_documents(std::size_t count,
                                                       std::uint64_t seed,
                                                       std::size_t source_offset = 0) {
    using namespace synthsiam;
    MockGenerator client(seed);
    GenerationParams params;
    const auto& registry = TemplateRegistry::builtin();
    std::vector<Document> out;
    const auto sources = fixture_documents(count, source_offset);
    for (std::size_t i = 0; i < count; ++i) {
        const auto spec =
            render_prompt(registry, TemplateVariant::DirectlyUseRequirement,
                          derive_content(sources[i % sources.size()], ContentLevel::L1));
        out.push_back(generate_document(client, spec, params));
    }
    return out;
}

// The separable mock experiment: disjoint-vocabulary human fixture texts vs
// mock-generated texts, split for training and held-out evaluation.
struct MockExperiment {
    std::vector<synthsiam::Document> train_human, held_human;
    std::vector<synthsiam::Document> train_machine, held_machine;
    std::vector<synthsiam::Document> references;
};

inline MockExperiment make_mock_experiment(std::size_t per_class = 200,
                                           double train_fraction = 0.8,
                                           std::uint64_t seed = 11) {
    MockExperiment exp;
    const auto humans = fixture_documents(per_class);
    const auto machines = mock_documents(per_class, seed);
    const std::size_t train_n =
        static_cast<std::size_t>(static_cast<double>(per_class) * train_fraction);
    for (std::size_t i = 0; i < humans.size(); ++i) {
        (i < train_n ? exp.train_human : exp.held_human).push_back(humans[i]);
        (i < train_n ? exp.train_machine : exp.held_machine).push_back(machines[i]);
    }
    // Teacher reference articles from sources outside the experiment pool.
    exp.references = mock_documents(8, seed + 1, per_class);
    return exp;
}

struct CliResult {
    int exit_code = -1;
    std::string output; // stdout + stderr interleaved
};

// Runs the built CLI with `args`, capturing combined output.
inline CliResult run_cli(const std::string& args,
                         const std::filesystem::path& cwd = source_dir()) {
    CliResult result;
    const std::string cmd = "cd '" + cwd.string() + "' && '" + cli_path().string() + "' " +
                            args + " 2>&1";
    FILE* pipe = ::popen(cmd.c_str(), "r");
    if (pipe == nullptr) return result;
    char buf[512];
    while (std::fgets(buf, sizeof(buf), pipe) != nullptr) result.output += buf;
    const int status = ::pclose(pipe);
    result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return result;
}

// Last non-empty line of CLI output parsed as JSON (the commands' summary line).
inline synthsiam::json last_json_line(const std::string& output) {
    std::size_t end = output.find_last_not_of('\n');
    if (end == std::string::npos) return synthsiam::json::object();
    std::size_t start = output.find_last_of('\n', end);
    start = start == std::string::npos ? 0 : start + 1;
    return synthsiam::json::parse(output.substr(start, end - start + 1));
}

} // namespace testsupport
