#include <catch2/catch_amalgamated.hpp>

#include <filesystem>

#include "facealign/model.hpp"
#include "facealign/synthetic.hpp"
#include "oracles.hpp"

using namespace facealign;
namespace fs = std::filesystem;

namespace {

Matrix random_matrix(Rng& rng, std::size_t r, std::size_t c, double std = 1.0) {
    Matrix m(r, c);
    for (double& v : m.data()) v = rng.normal(0.0, std);
    return m;
}

Matrix row_stochastic(Rng& rng, std::size_t k) {
    Matrix a(k, k);
    for (std::size_t i = 0; i < k; ++i) {
        double sum = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            a(i, j) = rng.uniform() + 1e-3;
            sum += a(i, j);
        }
        for (std::size_t j = 0; j < k; ++j) a(i, j) /= sum;
    }
    return a;
}

ModelParams random_model(Rng& rng, std::size_t k, std::size_t d_in, std::size_t d,
                         std::size_t layers, double slope = 0.2) {
    ModelParams p;
    p.fusion = random_matrix(rng, d_in, d, 0.5);
    p.gcn = GcnParams::make(std::vector<std::size_t>(layers + 1, d), slope, rng, 0.5);
    p.text0 = random_matrix(rng, k, d, 0.5);
    p.bias.resize(k);
    for (auto& b : p.bias) b = rng.normal(0.0, 0.1);
    return p;
}

LabelMatrix random_labels(Rng& rng, std::size_t n, std::size_t k) {
    LabelMatrix lm;
    lm.n_attrs = k;
    for (std::size_t i = 0; i < n; ++i) {
        lm.sample_ids.push_back(std::to_string(i));
        for (std::size_t j = 0; j < k; ++j) lm.labels.push_back(rng.bernoulli(0.5) ? 1 : 0);
    }
    return lm;
}

}  // namespace

TEST_CASE("zero fusion and bias give probability one half") {
    Rng rng(1);
    const std::size_t k = 3, dv = 4, ds = 2, d = 3;
    auto params = random_model(rng, k, dv + ds, d, 1);
    params.fusion = Matrix(dv + ds, d);
    params.bias.assign(k, 0.0);
    auto adj = row_stochastic(rng, k);
    auto preds = predict(params, adj, random_matrix(rng, 2, dv), random_matrix(rng, 2, ds));
    for (double p : preds.probs.data()) CHECK(p == 0.5);
}

TEST_CASE("predict matches straight-line dense recomputation") {
    Rng rng(11);
    const std::size_t n = 2, k = 3, dv = 4, ds = 2, d = 3, layers = 2;
    auto params = random_model(rng, k, dv + ds, d, layers);
    auto adj = row_stochastic(rng, k);
    auto visual = random_matrix(rng, n, dv);
    auto seg = random_matrix(rng, n, ds);
    auto preds = predict(params, adj, visual, seg);

    // independent recomputation with nothing shared beyond the raw values
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> x;
        for (std::size_t c = 0; c < dv; ++c) x.push_back(visual(i, c));
        for (std::size_t c = 0; c < ds; ++c) x.push_back(seg(i, c));
        std::vector<double> fused(d, 0.0);
        for (std::size_t c = 0; c < d; ++c)
            for (std::size_t r = 0; r < dv + ds; ++r) fused[c] += x[r] * params.fusion(r, c);

        // GCN layers
        std::vector<std::vector<double>> t(k, std::vector<double>(d));
        for (std::size_t a = 0; a < k; ++a)
            for (std::size_t c = 0; c < d; ++c) t[a][c] = params.text0(a, c);
        auto t0 = t;
        for (std::size_t l = 0; l < layers; ++l) {
            std::vector<std::vector<double>> prop(k, std::vector<double>(d, 0.0));
            for (std::size_t a = 0; a < k; ++a)
                for (std::size_t b = 0; b < k; ++b)
                    for (std::size_t c = 0; c < d; ++c) prop[a][c] += adj(a, b) * t[b][c];
            std::vector<std::vector<double>> next(k, std::vector<double>(d, 0.0));
            for (std::size_t a = 0; a < k; ++a)
                for (std::size_t c = 0; c < d; ++c) {
                    double acc = 0.0;
                    for (std::size_t r = 0; r < d; ++r) acc += prop[a][r] * params.gcn.weights[l](r, c);
                    next[a][c] = acc >= 0 ? acc : 0.2 * acc;
                }
            t = next;
        }
        for (std::size_t a = 0; a < k; ++a) {
            double s = params.bias[a];
            for (std::size_t c = 0; c < d; ++c) s += fused[c] * (t0[a][c] + t[a][c]);
            const double p = 1.0 / (1.0 + std::exp(-s));
            CHECK(preds.probs(i, a) == Catch::Approx(p).margin(1e-12));
        }
    }
}

TEST_CASE("duplicate input rows give identical prediction rows") {
    Rng rng(3);
    const std::size_t k = 4, dv = 3, ds = 0, d = 3;
    auto params = random_model(rng, k, dv, d, 1);
    auto adj = row_stochastic(rng, k);
    Matrix visual(2, dv);
    for (std::size_t c = 0; c < dv; ++c) visual(0, c) = visual(1, c) = rng.normal();
    auto preds = predict(params, adj, visual, Matrix(2, 0));
    for (std::size_t j = 0; j < k; ++j) CHECK(preds.probs(0, j) == preds.probs(1, j));
}

TEST_CASE("bce point values") {
    Predictions preds;
    preds.probs = Matrix(1, 2, 0.5);
    LabelMatrix labels;
    labels.n_attrs = 2;
    labels.sample_ids = {"a"};
    labels.labels = {1, 0};
    auto [loss, grad] = bce_loss(preds, labels);
    CHECK(loss == Catch::Approx(2.0 * std::log(2.0)));

    // predictions equal to clamped labels: loss effectively zero
    const double eps = 1e-7;
    preds.probs(0, 0) = 1.0 - eps;
    preds.probs(0, 1) = eps;
    CHECK(bce_loss(preds, labels).first < 1e-6);
}

TEST_CASE("bce gradient matches finite differences") {
    Rng rng(5);
    Predictions preds;
    preds.probs = Matrix(3, 4);
    for (double& p : preds.probs.data()) p = 0.1 + 0.8 * rng.uniform();
    auto labels = random_labels(rng, 3, 4);
    auto [loss, grad] = bce_loss(preds, labels);
    auto loss_fn = [&]() { return bce_loss(preds, labels).first; };
    CHECK(oracle::max_rel_error(preds.probs.data(), grad.data(), loss_fn) < 1e-6);
}

namespace {

struct TotalLossFixture {
    ModelParams params;
    Matrix adjacency;
    RuleSet rules;
    Matrix visual, seg;
    LabelMatrix labels;
    TrainConfig config;

    double loss() const {
        return total_loss(params, adjacency, rules, visual, seg, labels, config).first.total;
    }
};

TotalLossFixture make_fixture(std::uint64_t seed, double lambda, bool train_text0) {
    Rng rng(seed);
    const std::size_t n = 3, k = 4, dv = 3, ds = 2, d = 3, layers = 2;
    TotalLossFixture f;
    f.params = random_model(rng, k, dv + ds, d, layers);
    f.adjacency = row_stochastic(rng, k);
    AttributeVocabulary vocab({"A", "B", "C", "D"});
    f.rules = parse_rules_text("EXCLUDES: A -> B\n", vocab);
    f.visual = random_matrix(rng, n, dv);
    f.seg = random_matrix(rng, n, ds);
    f.labels = random_labels(rng, n, k);
    f.config.lambda_logic = lambda;
    f.config.train_text0 = train_text0;
    return f;
}

}  // namespace

TEST_CASE("total loss reduces to bce when lambda or rules vanish") {
    auto f = make_fixture(21, 0.0, false);
    auto [breakdown, grads] =
        total_loss(f.params, f.adjacency, f.rules, f.visual, f.seg, f.labels, f.config);
    auto preds = predict(f.params, f.adjacency, f.visual, f.seg, f.config.prob_clamp_eps);
    CHECK(breakdown.total == Catch::Approx(bce_loss(preds, f.labels).first));

    f.config.lambda_logic = 1.0;
    f.rules = RuleSet{};
    auto [b2, g2] = total_loss(f.params, f.adjacency, f.rules, f.visual, f.seg, f.labels, f.config);
    CHECK(b2.total == Catch::Approx(bce_loss(preds, f.labels).first));
}

TEST_CASE("end-to-end gradients match finite differences") {
    double worst = 0.0;
    for (std::uint64_t seed : {101, 202, 303, 404, 505}) {
        auto f = make_fixture(seed, 1.0, true);
        auto [breakdown, grads] =
            total_loss(f.params, f.adjacency, f.rules, f.visual, f.seg, f.labels, f.config);
        auto loss_fn = [&]() { return f.loss(); };

        worst = std::max(worst, oracle::max_rel_error(f.params.fusion.data(), grads.fusion.data(), loss_fn));
        for (std::size_t l = 0; l < f.params.gcn.weights.size(); ++l)
            worst = std::max(worst, oracle::max_rel_error(f.params.gcn.weights[l].data(),
                                                          grads.gcn_weights[l].data(), loss_fn));
        worst = std::max(worst, oracle::max_rel_error(f.params.text0.data(), grads.text0.data(), loss_fn));
        worst = std::max(worst, oracle::max_rel_error(f.params.bias, grads.bias, loss_fn));
    }
    CHECK(worst < 1e-4);
}

namespace {

SyntheticData training_fixture(AttributeVocabulary& vocab, RuleSet& rules, std::size_t n = 256) {
    vocab = AttributeVocabulary({"A", "B", "C", "D", "E", "F", "G", "H"});
    SyntheticSpec spec;
    spec.seed = 77;
    spec.n_samples = n;
    spec.vocabulary = vocab;
    spec.planted_conditionals.push_back({0, 2, 0.9});
    spec.rules = parse_rules_text("EXCLUDES: A -> B\n", vocab);
    rules = spec.rules;
    spec.embed_dim_visual = 12;
    spec.embed_dim_seg = 6;
    spec.noise_std = 0.5;
    return generate_synthetic(spec);
}

}  // namespace

TEST_CASE("training with zero learning rate leaves params untouched") {
    AttributeVocabulary vocab;
    RuleSet rules;
    auto data = training_fixture(vocab, rules, 64);
    auto maps = build_correlation(data.labels, 0.4, 0.8);
    ModelDims dims{vocab.size(), data.visual.dim(), data.seg.dim(), 8, 2};
    TrainConfig config;
    config.learning_rate = 0.0;
    config.epochs = 2;
    config.seed = 9;
    auto result = train(data.visual.vectors, data.seg.vectors, data.labels, rules, maps, dims, config);
    auto initial = init_params(dims, config);
    CHECK(result.params.fusion == initial.fusion);
    CHECK(result.params.text0 == initial.text0);
    CHECK(result.params.bias == initial.bias);
    for (std::size_t l = 0; l < initial.gcn.weights.size(); ++l)
        CHECK(result.params.gcn.weights[l] == initial.gcn.weights[l]);
}

TEST_CASE("training reduces the loss on the synthetic fixture") {
    AttributeVocabulary vocab;
    RuleSet rules;
    auto data = training_fixture(vocab, rules, 256);
    auto maps = build_correlation(data.labels, 0.4, 0.8);
    ModelDims dims{vocab.size(), data.visual.dim(), data.seg.dim(), 8, 2};
    TrainConfig config;
    config.epochs = 15;
    config.seed = 9;
    auto result = train(data.visual.vectors, data.seg.vectors, data.labels, rules, maps, dims, config);
    REQUIRE(result.trace.size() == config.epochs);
    CHECK(result.trace.back().total < result.trace.front().total);
}

TEST_CASE("training is deterministic for a fixed seed") {
    AttributeVocabulary vocab;
    RuleSet rules;
    auto data = training_fixture(vocab, rules, 64);
    auto maps = build_correlation(data.labels, 0.4, 0.8);
    ModelDims dims{vocab.size(), data.visual.dim(), data.seg.dim(), 8, 2};
    TrainConfig config;
    config.epochs = 4;
    config.seed = 123;
    auto a = train(data.visual.vectors, data.seg.vectors, data.labels, rules, maps, dims, config);
    auto b = train(data.visual.vectors, data.seg.vectors, data.labels, rules, maps, dims, config);
    REQUIRE(a.trace.size() == b.trace.size());
    for (std::size_t i = 0; i < a.trace.size(); ++i)
        CHECK(a.trace[i].total == b.trace[i].total);
    CHECK(a.params.fusion == b.params.fusion);
}

TEST_CASE("checkpoint round-trip preserves predictions bitwise") {
    Rng rng(71);
    const std::size_t k = 4, dv = 3, ds = 2, d = 3;
    Checkpoint ckpt;
    ckpt.params = random_model(rng, k, dv + ds, d, 2);
    ckpt.tau = 0.4;
    ckpt.omega = 0.8;
    ckpt.adjacency = row_stochastic(rng, k);

    const auto path = (fs::temp_directory_path() / "fa_ckpt_test.json").string();
    save_model(path, ckpt);
    auto loaded = load_model(path);

    auto visual = random_matrix(rng, 3, dv);
    auto seg = random_matrix(rng, 3, ds);
    auto a = predict(ckpt.params, ckpt.adjacency, visual, seg);
    auto b = predict(loaded.params, loaded.adjacency, visual, seg);
    CHECK(a.probs == b.probs);
    fs::remove(path);
}

TEST_CASE("truncated checkpoint is a load error") {
    Rng rng(72);
    Checkpoint ckpt;
    ckpt.params = random_model(rng, 3, 4, 2, 1);
    ckpt.adjacency = row_stochastic(rng, 3);
    const auto path = (fs::temp_directory_path() / "fa_ckpt_trunc.json").string();
    save_model(path, ckpt);
    auto bytes = read_file_bytes(path);
    std::ofstream(path, std::ios::binary) << bytes.substr(0, bytes.size() / 2);
    CHECK_THROWS_AS(load_model(path), ParseError);
    fs::remove(path);
}

TEST_CASE("shape-mismatched checkpoint is rejected") {
    Rng rng(73);
    Checkpoint ckpt;
    ckpt.params = random_model(rng, 3, 4, 2, 1);
    ckpt.adjacency = row_stochastic(rng, 4);  // K mismatch
    const auto path = (fs::temp_directory_path() / "fa_ckpt_shape.json").string();
    save_model(path, ckpt);
    CHECK_THROWS_AS(load_model(path), ValidationError);
    fs::remove(path);
}
