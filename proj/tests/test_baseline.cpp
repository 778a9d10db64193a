#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <fstream>

#include "synthsiam/baseline.hpp"
#include "synthsiam/encoder_io.hpp"
#include "test_support.hpp"

using namespace synthsiam;

namespace {

std::shared_ptr<ToyEncoder> make_toy(std::size_t dim = 32, std::uint64_t seed = 5) {
    return std::make_shared<ToyEncoder>(dim, seed);
}

std::vector<Document> mixed_docs(std::size_t per_class, std::uint64_t seed) {
    auto docs = testsupport::fixture_documents(per_class);
    for (auto& doc : testsupport::mock_documents(per_class, seed)) {
        docs.push_back(std::move(doc));
    }
    return docs;
}

} // namespace

TEST_CASE("classifier head outputs a normalized probability pair") {
    SingleInputClassifier model(make_toy(), 3);
    CHECK(model.hidden_size() == 16); // D/2 default
    model.mark_trained();
    const auto probs = model.predict_proba("alpha beta gamma");
    CHECK(probs[0] >= 0.0);
    CHECK(probs[1] >= 0.0);
    CHECK(std::abs(probs[0] + probs[1] - 1.0) <= 1e-6);
    CHECK(model.predict_machine_probability("alpha beta gamma") == probs[1]);

    // eval purity
    CHECK(model.predict_proba("repeat me") == model.predict_proba("repeat me"));
}

TEST_CASE("predictions require a trained model") {
    SingleInputClassifier model(make_toy(), 3);
    CHECK_THROWS_AS(model.predict_proba("text"), Error);
    CHECK_THROWS_AS(predict_baseline(model, "text"), Error);
}

TEST_CASE("baseline training requires both classes") {
    SingleInputClassifier model(make_toy(), 3);
    TrainConfig config;
    config.epochs = 1;
    const auto humans = testsupport::fixture_documents(4);
    CHECK_THROWS_AS(train_baseline(model, humans, config), InvalidArgument);
    const auto machines = testsupport::mock_documents(4, 1);
    CHECK_THROWS_AS(train_baseline(model, machines, config), InvalidArgument);
}

TEST_CASE("baseline head gradients match finite differences") {
    SingleInputClassifier model(make_toy(16, 9), 4);
    const auto docs = mixed_docs(4, 11);
    const std::span<const Document> batch(docs.data(), docs.size());

    const BaselineLossGrad analytic = baseline_loss_and_gradient(model, batch);
    auto loss_at = [&]() { return baseline_loss_and_gradient(model, batch).loss; };

    double max_rel = 0.0;
    auto check_params = [&](std::vector<double>& params, const std::vector<double>& grad) {
        for (std::size_t i = 0; i < params.size(); i += 3) {
            const double h = 1e-5;
            const double saved = params[i];
            params[i] = saved + h;
            const double up = loss_at();
            params[i] = saved - h;
            const double down = loss_at();
            params[i] = saved;
            const double fd = (up - down) / (2.0 * h);
            const double rel = std::abs(fd - grad[i]) /
                               std::max(1e-5, std::abs(fd) + std::abs(grad[i]));
            max_rel = std::max(max_rel, rel);
        }
    };
    check_params(model.head_parameters(), analytic.grad_head);
    check_params(model.encoder().parameters(), analytic.grad_encoder);
    CHECK(max_rel <= 1e-4);
}

TEST_CASE("baseline separates the mock corpus and is deterministic") {
    const auto exp = testsupport::make_mock_experiment(60, 0.8, 23);
    std::vector<Document> train_docs = exp.train_human;
    train_docs.insert(train_docs.end(), exp.train_machine.begin(), exp.train_machine.end());
    std::vector<Document> held_docs = exp.held_human;
    held_docs.insert(held_docs.end(), exp.held_machine.begin(), exp.held_machine.end());

    TrainConfig config;
    config.epochs = 10;
    config.batch_size = 16;
    config.learning_rate = 0.02;
    config.seed = 3;

    SingleInputClassifier model(make_toy(64, 7), 13);
    const TrainingHistory history = train_baseline(model, train_docs, config, &held_docs);
    CHECK(history.epochs.back().mean_loss < history.epochs.front().mean_loss);
    CHECK(baseline_accuracy(model, held_docs) >= 0.90);

    // machine texts score above human texts on average
    double machine_mean = 0.0, human_mean = 0.0;
    for (const auto& doc : exp.held_machine) {
        machine_mean += model.predict_machine_probability(doc.text);
    }
    for (const auto& doc : exp.held_human) {
        human_mean += model.predict_machine_probability(doc.text);
    }
    machine_mean /= static_cast<double>(exp.held_machine.size());
    human_mean /= static_cast<double>(exp.held_human.size());
    CHECK(machine_mean > human_mean);

    SingleInputClassifier model2(make_toy(64, 7), 13);
    const TrainingHistory history2 = train_baseline(model2, train_docs, config, &held_docs);
    for (std::size_t e = 0; e < history.epochs.size(); ++e) {
        CHECK(history.epochs[e].mean_loss == history2.epochs[e].mean_loss);
    }
}

TEST_CASE("baseline save/load round-trips predictions") {
    testsupport::TempDir tmp("baseline");
    SingleInputClassifier model(make_toy(16, 9), 4);
    const auto docs = mixed_docs(6, 31);
    TrainConfig config;
    config.epochs = 2;
    config.batch_size = 4;
    config.learning_rate = 0.02;
    train_baseline(model, docs, config);
    model.save(tmp.path() / "model");

    auto encoder = load_encoder(tmp.path() / "model" / "encoder");
    const SingleInputClassifier loaded =
        SingleInputClassifier::load(tmp.path() / "model", std::move(encoder));
    CHECK(loaded.trained());
    for (const auto& doc : docs) {
        CHECK(loaded.predict_machine_probability(doc.text) ==
              model.predict_machine_probability(doc.text));
    }
}

TEST_CASE("constant adapter returns its fixed score") {
    ConstantScoreAdapter adapter(0.5);
    CHECK(adapter.score("anything") == 0.5);
    CHECK(adapter.name() == "constant");
}

TEST_CASE("exec adapter runs a command and parses the score") {
    testsupport::TempDir tmp("exec");
    const auto script = tmp.path() / "score.sh";
    {
        std::ofstream out(script);
        out << "#!/bin/sh\ncat > /dev/null\nprintf '{\"score\": 0.75}'\n";
    }
    std::filesystem::permissions(script, std::filesystem::perms::owner_all);

    ExecAdapter adapter(script.string());
    CHECK(adapter.score("query text") == 0.75);
    CHECK(adapter.name().starts_with("exec:"));

    const auto bad = tmp.path() / "bad.sh";
    {
        std::ofstream out(bad);
        out << "#!/bin/sh\ncat > /dev/null\nprintf 'not json'\n";
    }
    std::filesystem::permissions(bad, std::filesystem::perms::owner_all);
    CHECK_THROWS_AS(ExecAdapter(bad.string()).score("q"), Error);

    const auto out_of_range = tmp.path() / "range.sh";
    {
        std::ofstream out(out_of_range);
        out << "#!/bin/sh\ncat > /dev/null\nprintf '{\"score\": 1.5}'\n";
    }
    std::filesystem::permissions(out_of_range, std::filesystem::perms::owner_all);
    CHECK_THROWS_AS(ExecAdapter(out_of_range.string()).score("q"), Error);

    CHECK_THROWS_AS(ExecAdapter(""), InvalidArgument);
}
