// Command-line surface for the facial-attribute alignment toolkit:
// synthetic data generation, correlation-prior construction, training,
// evaluation, rule linting, and the omega ablation sweep.

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "facealign/correlation.hpp"
#include "facealign/export.hpp"
#include "facealign/hash.hpp"
#include "facealign/logic.hpp"
#include "facealign/metrics.hpp"
#include "facealign/model.hpp"
#include "facealign/synthetic.hpp"
#include "facealign/vocab.hpp"

namespace fs = std::filesystem;
using namespace facealign;

namespace {

constexpr const char* kToolVersion = "0.1.0";

// Deterministic number formatting shared by all text artifacts.
std::string fmt(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

struct ManifestInput {
    std::string path;
    std::string digest;
};

void write_manifest(const std::string& path, const std::string& command,
                    const std::vector<std::string>& argv_rest, std::uint64_t seed,
                    const std::vector<std::string>& input_files, double wall_ms) {
    ordered_json j;
    j["tool_version"] = kToolVersion;
    j["command"] = command;
    j["arguments"] = argv_rest;
    j["seed"] = seed;
    ordered_json inputs = ordered_json::array();
    for (const auto& f : input_files)
        inputs.push_back({{"path", f}, {"digest", file_digest(f)}});
    j["inputs"] = std::move(inputs);
    j["wall_time_ms"] = wall_ms;
    write_json_file(path, j);
}

std::vector<PlantedConditional> parse_plants(const std::vector<std::string>& specs) {
    std::vector<PlantedConditional> out;
    for (const auto& s : specs) {
        PlantedConditional pc;
        char c1 = 0, c2 = 0;
        std::istringstream is(s);
        long long i = -1, j = -1;
        if (!(is >> i >> c1 >> j >> c2 >> pc.prob) || c1 != ':' || c2 != ':' || !is.eof() || i < 0 || j < 0)
            throw ValidationError("--plant expects i:j:p, got '" + s + "'");
        pc.given = static_cast<std::size_t>(i);
        pc.target = static_cast<std::size_t>(j);
        if (pc.prob < 0.0 || pc.prob > 1.0)
            throw ValidationError("--plant probability out of [0, 1] in '" + s + "'");
        out.push_back(pc);
    }
    return out;
}

AttributeVocabulary default_vocab(std::size_t k) {
    std::vector<std::string> names;
    for (std::size_t i = 0; i < k; ++i) names.push_back("A" + std::to_string(i));
    return AttributeVocabulary(std::move(names));
}

struct GenDataArgs {
    std::uint64_t seed = 0;
    std::size_t samples = 0;
    std::size_t attrs = 0;
    std::string rules_path;
    std::string out_dir;
    std::vector<std::string> plants;
    std::size_t dim_visual = 32;
    std::size_t dim_seg = 16;
    double noise_std = 0.1;
    double base_rate = 0.35;
};

void run_gen_data(const GenDataArgs& a) {
    SyntheticSpec spec;
    spec.seed = a.seed;
    spec.n_samples = a.samples;
    spec.vocabulary = default_vocab(a.attrs);
    spec.planted_conditionals = parse_plants(a.plants);
    for (const auto& pc : spec.planted_conditionals)
        if (pc.given >= a.attrs || pc.target >= a.attrs)
            throw ValidationError("--plant index out of range for --attrs " + std::to_string(a.attrs));
    std::vector<std::string> inputs;
    if (!a.rules_path.empty()) {
        spec.rules = parse_rules(a.rules_path, spec.vocabulary);
        inputs.push_back(a.rules_path);
    }
    spec.embed_dim_visual = a.dim_visual;
    spec.embed_dim_seg = a.dim_seg;
    spec.noise_std = a.noise_std;
    spec.base_rate = a.base_rate;

    const auto t0 = std::chrono::steady_clock::now();
    auto data = generate_synthetic(spec);
    fs::create_directories(a.out_dir);
    const fs::path dir(a.out_dir);
    write_labels_file((dir / "labels.txt").string(), spec.vocabulary, data.labels);
    write_embeddings_file((dir / "visual.txt").string(), data.visual.vectors);
    write_embeddings_file((dir / "seg.txt").string(), data.seg.vectors);
    const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    write_manifest((dir / "manifest.json").string(), "gen-data", {}, a.seed, inputs, ms);
}

LabelFormat parse_format(const std::string& s) {
    return s == "signed" ? LabelFormat::Signed : LabelFormat::Binary;
}

struct TrainArgs {
    std::string labels, visual, seg, rules, out, trace;
    std::string format = "binary";
    double tau = 0.4;
    double omega = 0.8;
    std::size_t layers = 2;
    std::size_t dim = 32;
    double lr = 0.05;
    double momentum = 0.9;
    std::size_t epochs = 30;
    std::size_t batch = 64;
    std::uint64_t seed = 0;
    double lambda_logic = 1.0;
    bool train_text0 = false;
    bool no_bias = false;
};

TrainResult run_train_core(const TrainArgs& a, AttributeVocabulary& vocab, CorrelationMaps& maps) {
    auto [v, labels] = load_labels(a.labels, parse_format(a.format));
    vocab = std::move(v);
    auto visual = load_embeddings(a.visual, labels.n_samples());
    EmbeddingSet seg;
    seg.vectors = Matrix(labels.n_samples(), 0);
    if (!a.seg.empty()) seg = load_embeddings(a.seg, labels.n_samples());
    RuleSet rules;
    if (!a.rules.empty()) rules = parse_rules(a.rules, vocab);

    maps = build_correlation(labels, a.tau, a.omega);

    ModelDims dims;
    dims.n_attrs = vocab.size();
    dims.d_visual = visual.dim();
    dims.d_seg = seg.vectors.cols();
    dims.d_text = a.dim;
    dims.gcn_layers = a.layers;

    TrainConfig config;
    config.learning_rate = a.lr;
    config.momentum = a.momentum;
    config.epochs = a.epochs;
    config.batch_size = a.batch;
    config.seed = a.seed;
    config.lambda_logic = a.lambda_logic;
    config.train_text0 = a.train_text0;
    config.use_bias = !a.no_bias;
    config.validate();

    return train(visual.vectors, seg.vectors, labels, rules, maps, dims, config);
}

void run_train(const TrainArgs& a) {
    const auto t0 = std::chrono::steady_clock::now();
    AttributeVocabulary vocab;
    CorrelationMaps maps;
    auto result = run_train_core(a, vocab, maps);

    Checkpoint ckpt;
    ckpt.params = std::move(result.params);
    ckpt.tau = a.tau;
    ckpt.omega = a.omega;
    ckpt.adjacency = maps.adjacency;
    save_model(a.out, ckpt);

    const std::string trace_path = a.trace.empty() ? a.out + ".trace.tsv" : a.trace;
    std::ofstream trace(trace_path, std::ios::binary);
    if (!trace) throw ParseError("cannot write trace file: " + trace_path);
    trace << "epoch\tbce\tlogic\ttotal\n";
    for (const auto& e : result.trace)
        trace << e.epoch << '\t' << fmt(e.bce) << '\t' << fmt(e.logic) << '\t' << fmt(e.total) << '\n';

    std::vector<std::string> inputs = {a.labels, a.visual};
    if (!a.seg.empty()) inputs.push_back(a.seg);
    if (!a.rules.empty()) inputs.push_back(a.rules);
    const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    write_manifest(a.out + ".manifest.json", "train", {}, a.seed, inputs, ms);
}

struct EvalArgs {
    std::string model, labels, visual, seg, report;
    std::string format = "binary";
    double threshold = 0.5;
};

MetricsReport run_eval_core(const EvalArgs& a) {
    auto ckpt = load_model(a.model);
    auto [vocab, labels] = load_labels(a.labels, parse_format(a.format));
    if (vocab.size() != ckpt.params.n_attrs())
        throw ValidationError("checkpoint K=" + std::to_string(ckpt.params.n_attrs()) +
                              " does not match label file K=" + std::to_string(vocab.size()));
    auto visual = load_embeddings(a.visual, labels.n_samples());
    EmbeddingSet seg;
    seg.vectors = Matrix(labels.n_samples(), 0);
    if (!a.seg.empty()) seg = load_embeddings(a.seg, labels.n_samples());
    auto preds = predict(ckpt.params, ckpt.adjacency, visual.vectors, seg.vectors);
    return evaluate(preds, labels, a.threshold);
}

void run_eval(const EvalArgs& a) {
    const auto t0 = std::chrono::steady_clock::now();
    auto report = run_eval_core(a);
    write_json_file(a.report, metrics_report_json(report));
    std::vector<std::string> inputs = {a.model, a.labels, a.visual};
    if (!a.seg.empty()) inputs.push_back(a.seg);
    const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    write_manifest(a.report + ".manifest.json", "eval", {}, 0, inputs, ms);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"facial-attribute alignment toolkit"};
    app.set_version_flag("--version", kToolVersion);
    app.require_subcommand(1);

    // gen-data
    GenDataArgs gen;
    auto* cmd_gen = app.add_subcommand("gen-data", "generate a seeded synthetic dataset");
    cmd_gen->add_option("--seed", gen.seed, "rng seed")->required();
    cmd_gen->add_option("--samples", gen.samples, "number of samples")->required();
    cmd_gen->add_option("--attrs", gen.attrs, "number of attributes")->required()->check(CLI::PositiveNumber);
    cmd_gen->add_option("--rules", gen.rules_path, "rule file the labels must satisfy");
    cmd_gen->add_option("--out", gen.out_dir, "output directory")->required();
    cmd_gen->add_option("--plant", gen.plants, "planted conditional i:j:p (repeatable)");
    cmd_gen->add_option("--dim-visual", gen.dim_visual, "visual embedding dim");
    cmd_gen->add_option("--dim-seg", gen.dim_seg, "segmentation embedding dim");
    cmd_gen->add_option("--noise-std", gen.noise_std, "embedding noise std")->check(CLI::NonNegativeNumber);
    cmd_gen->add_option("--base-rate", gen.base_rate, "marginal positive rate");

    // build-corr
    std::string bc_labels, bc_out, bc_format = "binary";
    double bc_tau = 0.4, bc_omega = 0.8;
    auto* cmd_corr = app.add_subcommand("build-corr", "build the correlation prior chain");
    cmd_corr->add_option("--labels", bc_labels, "label file")->required();
    cmd_corr->add_option("--format", bc_format, "label encoding: binary (0/1) or signed (+1/-1)")
        ->check(CLI::IsMember({"binary", "signed"}));
    cmd_corr->add_option("--tau", bc_tau, "edge threshold")->check(CLI::Range(0.0, 1.0));
    cmd_corr->add_option("--omega", bc_omega, "self-weight")->check(CLI::Range(0.0, 1.0));
    cmd_corr->add_option("--out", bc_out, "output JSON path")->required();

    // train
    TrainArgs tr;
    auto* cmd_train = app.add_subcommand("train", "train the alignment model");
    cmd_train->add_option("--labels", tr.labels)->required();
    cmd_train->add_option("--format", tr.format, "label encoding: binary (0/1) or signed (+1/-1)")
        ->check(CLI::IsMember({"binary", "signed"}));
    cmd_train->add_option("--visual", tr.visual)->required();
    cmd_train->add_option("--seg", tr.seg, "segmentation embeddings (omit for the org-only arm)");
    cmd_train->add_option("--rules", tr.rules, "rule file for the logical loss");
    cmd_train->add_option("--tau", tr.tau)->check(CLI::Range(0.0, 1.0));
    cmd_train->add_option("--omega", tr.omega)->check(CLI::Range(0.0, 1.0));
    cmd_train->add_option("--layers", tr.layers)->check(CLI::PositiveNumber);
    cmd_train->add_option("--dim", tr.dim, "text embedding dim")->check(CLI::PositiveNumber);
    cmd_train->add_option("--lr", tr.lr)->check(CLI::NonNegativeNumber);
    cmd_train->add_option("--momentum", tr.momentum)->check(CLI::Range(0.0, 0.9999));
    cmd_train->add_option("--epochs", tr.epochs)->check(CLI::PositiveNumber);
    cmd_train->add_option("--batch", tr.batch)->check(CLI::PositiveNumber);
    cmd_train->add_option("--seed", tr.seed);
    cmd_train->add_option("--lambda-logic", tr.lambda_logic)->check(CLI::NonNegativeNumber);
    cmd_train->add_flag("--train-text0", tr.train_text0, "also update the initial text embeddings");
    cmd_train->add_flag("--no-bias", tr.no_bias, "score without the per-attribute bias term");
    cmd_train->add_option("--out", tr.out, "checkpoint path")->required();
    cmd_train->add_option("--trace", tr.trace, "loss trace path (default <out>.trace.tsv)");

    // eval
    EvalArgs ev;
    auto* cmd_eval = app.add_subcommand("eval", "evaluate a checkpoint");
    cmd_eval->add_option("--model", ev.model)->required();
    cmd_eval->add_option("--labels", ev.labels)->required();
    cmd_eval->add_option("--format", ev.format, "label encoding: binary (0/1) or signed (+1/-1)")
        ->check(CLI::IsMember({"binary", "signed"}));
    cmd_eval->add_option("--visual", ev.visual)->required();
    cmd_eval->add_option("--seg", ev.seg);
    cmd_eval->add_option("--threshold", ev.threshold)->check(CLI::Range(0.0, 1.0));
    cmd_eval->add_option("--report", ev.report)->required();

    // check-rules
    std::string cr_preds, cr_rules, cr_out;
    double cr_threshold = 0.5;
    auto* cmd_check = app.add_subcommand("check-rules", "lint hard predictions against rules");
    cmd_check->add_option("--predictions", cr_preds, "label-format file; values may be probabilities")->required();
    cmd_check->add_option("--rules", cr_rules)->required();
    cmd_check->add_option("--threshold", cr_threshold)->check(CLI::Range(0.0, 1.0));
    cmd_check->add_option("--out", cr_out, "report path (default stdout)");

    // sweep-omega
    TrainArgs sw;
    std::string sw_values = "0,0.2,0.5,0.8,1.0";
    std::string sw_out;
    std::string sw_eval_labels, sw_eval_visual, sw_eval_seg;
    auto* cmd_sweep = app.add_subcommand("sweep-omega", "train+eval per omega, shared seed");
    cmd_sweep->add_option("--values", sw_values, "comma-separated omega values");
    cmd_sweep->add_option("--labels", sw.labels)->required();
    cmd_sweep->add_option("--format", sw.format, "label encoding: binary (0/1) or signed (+1/-1)")
        ->check(CLI::IsMember({"binary", "signed"}));
    cmd_sweep->add_option("--visual", sw.visual)->required();
    cmd_sweep->add_option("--seg", sw.seg);
    cmd_sweep->add_option("--rules", sw.rules);
    cmd_sweep->add_option("--tau", sw.tau)->check(CLI::Range(0.0, 1.0));
    cmd_sweep->add_option("--layers", sw.layers)->check(CLI::PositiveNumber);
    cmd_sweep->add_option("--dim", sw.dim)->check(CLI::PositiveNumber);
    cmd_sweep->add_option("--lr", sw.lr)->check(CLI::NonNegativeNumber);
    cmd_sweep->add_option("--momentum", sw.momentum)->check(CLI::Range(0.0, 0.9999));
    cmd_sweep->add_option("--epochs", sw.epochs)->check(CLI::PositiveNumber);
    cmd_sweep->add_option("--batch", sw.batch)->check(CLI::PositiveNumber);
    cmd_sweep->add_option("--seed", sw.seed);
    cmd_sweep->add_option("--lambda-logic", sw.lambda_logic)->check(CLI::NonNegativeNumber);
    cmd_sweep->add_option("--eval-labels", sw_eval_labels, "held-out labels (default: training labels)");
    cmd_sweep->add_option("--eval-visual", sw_eval_visual);
    cmd_sweep->add_option("--eval-seg", sw_eval_seg);
    cmd_sweep->add_option("--out", sw_out, "TSV output path (default stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (*cmd_gen) {
            run_gen_data(gen);
        } else if (*cmd_corr) {
            auto [vocab, labels] = load_labels(bc_labels, parse_format(bc_format));
            auto maps = build_correlation(labels, bc_tau, bc_omega);
            write_json_file(bc_out, correlation_json(maps));
            write_manifest(bc_out + ".manifest.json", "build-corr", {}, 0, {bc_labels}, 0.0);
        } else if (*cmd_train) {
            run_train(tr);
        } else if (*cmd_eval) {
            run_eval(ev);
        } else if (*cmd_check) {
            auto [vocab, probs] = load_predictions(cr_preds);
            auto rules = parse_rules(cr_rules, vocab);
            Predictions preds;
            preds.probs = std::move(probs);
            auto report = check_rules(rules, binarize(preds, cr_threshold));
            auto j = violation_report_json(report);
            if (cr_out.empty())
                std::cout << j.dump(2) << '\n';
            else
                write_json_file(cr_out, j);
        } else if (*cmd_sweep) {
            std::vector<double> omegas;
            std::stringstream ss(sw_values);
            std::string tok;
            std::set<std::string> seen;
            while (std::getline(ss, tok, ',')) {
                if (tok.empty()) continue;
                const double w = std::stod(tok);
                if (w < 0.0 || w > 1.0) throw ValidationError("omega value out of [0, 1]: " + tok);
                if (!seen.insert(fmt(w)).second) {
                    std::cerr << "warning: duplicate omega value " << tok << " ignored\n";
                    continue;
                }
                omegas.push_back(w);
            }
            if (omegas.empty()) throw ValidationError("no omega values given");

            const std::string eval_labels = sw_eval_labels.empty() ? sw.labels : sw_eval_labels;
            const std::string eval_visual = sw_eval_visual.empty() ? sw.visual : sw_eval_visual;
            const std::string eval_seg = sw_eval_seg.empty() ? sw.seg : sw_eval_seg;

            std::ostringstream table;
            table << "omega\tf1\n";
            for (double w : omegas) {
                TrainArgs run = sw;
                run.omega = w;
                AttributeVocabulary vocab;
                CorrelationMaps maps;
                auto result = run_train_core(run, vocab, maps);

                auto [ev_vocab, ev_lab] = load_labels(eval_labels, parse_format(sw.format));
                auto ev_vis = load_embeddings(eval_visual, ev_lab.n_samples());
                EmbeddingSet ev_sg;
                ev_sg.vectors = Matrix(ev_lab.n_samples(), 0);
                if (!eval_seg.empty()) ev_sg = load_embeddings(eval_seg, ev_lab.n_samples());
                auto preds = predict(result.params, maps.adjacency, ev_vis.vectors, ev_sg.vectors);
                auto rep = evaluate(preds, ev_lab);
                table << fmt(w) << '\t' << fmt(rep.f1) << '\n';
            }
            if (sw_out.empty())
                std::cout << table.str();
            else {
                std::ofstream out(sw_out, std::ios::binary);
                if (!out) throw ParseError("cannot write sweep table: " + sw_out);
                out << table.str();
            }
        }
    } catch (const ParseError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const GenerationError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const TrainingError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
