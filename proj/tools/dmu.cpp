// dmu: train, evaluate and inspect delayed-memory-update entity networks.
//
// Exit codes: 0 success, 2 input or configuration error, 3 numeric
// divergence, 4 incompatible artifact.

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dmu/dmu.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 2;
constexpr int kExitDiverged = 3;
constexpr int kExitIncompatible = 4;

struct Options {
    std::string corpus;
    std::string embeddings;
    std::size_t dim = 300;
    std::size_t chains = 6;
    std::size_t tied_chains = 2;
    std::size_t epochs = 800;
    std::size_t batch = 128;
    double lr = 0.05;
    double dropout = 0.2;
    double l2 = 0.001;
    bool l2_squared = false;
    std::uint64_t seed = 1;
    std::string gate_mode = "delayed";
    std::string delay_input = "current";
    int precision = 64;
    std::string out;
    std::string checkpoint;
    std::string predictions;
    std::string compare;
    std::size_t n_min = 2;
    std::size_t n_max = 10;
    std::size_t runs = 5;
    std::string split = "test";
    std::int64_t sentence_id = -1;
    std::string text;
    std::string spec;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(Options, corpus, embeddings, dim, chains, tied_chains,
                                                epochs, batch, lr, dropout, l2, l2_squared, seed,
                                                gate_mode, delay_input, precision, out, checkpoint,
                                                predictions, compare, n_min, n_max, runs, split,
                                                sentence_id, text, spec)

std::string utc_now() {
    const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::ostringstream s;
    s << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return s.str();
}

void say(const std::string& msg) { std::cerr << "dmu: " << msg << '\n'; }

// ---- configuration ----

// Fills unset data paths from DMU_DATA_DIR.
void resolve_data_paths(Options& o) {
    const char* dir = std::getenv("DMU_DATA_DIR");
    if (dir == nullptr || *dir == '\0') return;
    if (o.corpus.empty()) o.corpus = dir;
    if (o.embeddings.empty()) o.embeddings = (fs::path(dir) / "embeddings.txt").string();
}

void require_path(const std::string& value, const char* flag) {
    if (value.empty()) {
        throw dmu::ConfigError(std::string(flag) + " is required (or set DMU_DATA_DIR)");
    }
    if (!fs::exists(value)) {
        throw dmu::FormatError(std::string(flag) + " '" + value + "' does not exist");
    }
}

dmu::ModelConfig model_config(const Options& o, std::size_t chains) {
    dmu::ModelConfig c = dmu::ModelConfig::with(o.dim, chains, o.tied_chains, dmu::parse_gate_mode(o.gate_mode));
    c.delay_input = dmu::parse_delay_input(o.delay_input);
    c.validate();
    return c;
}

dmu::TrainConfig train_config(const Options& o, std::uint64_t seed) {
    dmu::TrainConfig t;
    t.epochs = o.epochs;
    t.batch_size = o.batch;
    t.learning_rate = o.lr;
    t.dropout_rate = o.dropout;
    t.l2 = o.l2;
    t.l2_squared = o.l2_squared;
    t.seed = seed;
    t.validate();
    return t;
}

json to_json(const dmu::ModelConfig& c) {
    return {{"embed_dim", c.embed_dim},   {"n_chains", c.n_chains},
            {"n_tied_keys", c.n_tied_keys}, {"n_classes", c.n_classes},
            {"gru_hidden", c.gru_hidden}, {"gate_mode", dmu::to_string(c.gate_mode)},
            {"delay_input", dmu::to_string(c.delay_input)}};
}

json to_json(const dmu::TrainConfig& t) {
    return {{"epochs", t.epochs},         {"batch_size", t.batch_size}, {"learning_rate", t.learning_rate},
            {"dropout_rate", t.dropout_rate}, {"l2", t.l2},          {"l2_squared", t.l2_squared},
            {"ftrl_beta", t.ftrl_beta},   {"ftrl_l1", t.ftrl_l1},       {"seed", t.seed},
            {"balanced", t.balanced}};
}

struct Manifest {
    std::string command;
    std::string started = utc_now();
    json body = json::object();

    void write(const std::string& path, const Options& o) const {
        json m = body;
        m["tool"] = "dmu";
        m["version"] = dmu::kVersion;
        m["command"] = command;
        m["options"] = o;
        m["started_at"] = started;
        m["finished_at"] = utc_now();
        std::ofstream out(path);
        if (!out) throw dmu::FormatError("cannot write manifest '" + path + "'");
        out << m.dump(2) << '\n';
    }
};

// Replaces the options with the ones recorded in a manifest, keeping --out.
void apply_manifest(Options& o, const std::string& path, const std::string& command) {
    std::ifstream in(path);
    if (!in) throw dmu::FormatError("cannot open manifest '" + path + "'");
    json m;
    try {
        in >> m;
    } catch (const json::exception& e) {
        throw dmu::FormatError("manifest '" + path + "': " + e.what());
    }
    if (m.value("command", "") != command) {
        throw dmu::ConfigError("manifest '" + path + "' was written by '" + m.value("command", "?") +
                               "', not '" + command + "'");
    }
    const std::string out = o.out;
    o = m.at("options").get<Options>();
    if (!out.empty()) o.out = out;
}

std::string sidecar(const std::string& path) { return path + ".manifest.json"; }

void write_text(const std::string& path, const std::string& content) {
    if (path.empty()) {
        std::cout << content;
        return;
    }
    std::ofstream out(path);
    if (!out) throw dmu::FormatError("cannot write '" + path + "'");
    out << content;
}

// ---- data ----

struct Data {
    dmu::CorpusSplit split;
    dmu::EmbeddingTable table{1};
};

std::unordered_set<std::string> needed_tokens(const dmu::CorpusSplit& s, std::size_t tied) {
    std::unordered_set<std::string> keep;
    for (const auto* part : {&s.train, &s.validation, &s.test}) {
        for (const auto& r : *part) {
            for (auto& t : dmu::tokenize(r.text)) keep.insert(std::move(t));
        }
    }
    for (const auto& a : dmu::default_aspects()) {
        std::stringstream ss(a);
        std::string w;
        while (std::getline(ss, w, '-')) keep.insert(w);
    }
    for (std::size_t j = 0; j < tied; ++j) keep.insert(dmu::tied_key_token(j));
    return keep;
}

Data load_data(const Options& o) {
    require_path(o.corpus, "--corpus");
    require_path(o.embeddings, "--embeddings");
    Data d;
    d.split = dmu::load_split(o.corpus, o.seed);
    const auto keep = needed_tokens(d.split, o.tied_chains);
    d.table = dmu::load_embeddings(o.embeddings, o.dim, &keep);
    if (d.table.malformed_lines() > 0) {
        say("skipped " + std::to_string(d.table.malformed_lines()) + " malformed embedding lines");
    }
    return d;
}

const std::vector<dmu::SentenceRecord>& pick_split(const dmu::CorpusSplit& s, const std::string& name) {
    if (name == "train") return s.train;
    if (name == "dev" || name == "validation") return s.validation;
    if (name == "test") return s.test;
    throw dmu::ConfigError("--split must be train, dev or test, got '" + name + "'");
}

template <typename T>
dmu::EncodedCorpus<T> encode(const std::vector<dmu::SentenceRecord>& records, const dmu::EmbeddingTable& table,
                             const char* what) {
    auto instances = dmu::expand_instances(records, dmu::default_aspects());
    if (instances.empty()) {
        throw dmu::EmptyInputError(std::string(what) + " set is empty");
    }
    return dmu::encode_corpus<T>(std::move(instances), table);
}

template <typename T>
dmu::LoadedModel<T> load_checked(const std::string& path, const dmu::EmbeddingTable& table) {
    auto m = dmu::load_archive<T>(path);
    if (m.header.config.embed_dim != table.dim()) {
        throw dmu::IncompatibleArtifactError("checkpoint '" + path + "' has embed_dim " +
                                             std::to_string(m.header.config.embed_dim) + ", embeddings have " +
                                             std::to_string(table.dim()));
    }
    if (m.header.vocabulary_hash != table.vocabulary_hash()) {
        throw dmu::IncompatibleArtifactError("checkpoint '" + path +
                                             "' was trained with a different embedding vocabulary");
    }
    return m;
}

std::string describe(const dmu::EvalReport& r) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(4);
    for (const auto& [k, v] : dmu::headline_metrics(r)) {
        s << ' ' << k << '=';
        if (v) {
            s << *v;
        } else {
            s << "n/a";
        }
    }
    return s.str();
}

// ---- train ----

struct TrainOutcome {
    int code = kExitOk;
    std::optional<dmu::EvalReport> test;
};

template <typename T>
TrainOutcome train_once(const Options& o, const Data& d, const dmu::ModelConfig& config, std::uint64_t seed,
                        const fs::path& dir, bool verbose) {
    const auto tc = train_config(o, seed);
    auto train_set = encode<T>(d.split.train, d.table, "training");
    auto val_set = encode<T>(d.split.validation, d.table, "validation");
    std::mt19937_64 rng(seed);
    auto params = dmu::init_params<T>(config, d.table, rng);

    fs::create_directories(dir);
    std::ofstream log(dir / "log.jsonl");
    auto on_epoch = [&](const dmu::EpochLog& e) {
        log << dmu::to_json(e).dump() << '\n';
        if (verbose) {
            std::ostringstream s;
            s << "epoch " << e.epoch << " loss " << std::setprecision(5) << e.mean_loss << describe(e.validation)
              << (e.improved ? " *" : "");
            say(s.str());
        }
    };
    auto result = dmu::train(train_set, val_set, params, config, tc, dmu::default_aspects(), on_epoch);
    const auto hash = d.table.vocabulary_hash();
    if (result.diverged) {
        dmu::save_archive((dir / "last_good.dmu").string(), result.last_good, config, hash);
        say("diverged: " + result.diagnostic + "; last good parameters in " + (dir / "last_good.dmu").string());
        return {kExitDiverged, std::nullopt};
    }
    dmu::save_archive((dir / "checkpoint.dmu").string(), result.best, config, hash);
    TrainOutcome out;
    if (!d.split.test.empty()) {
        auto test_set = encode<T>(d.split.test, d.table, "test");
        out.test = dmu::evaluate_model(result.best, config, test_set);
        std::ofstream(dir / "test_report.json") << dmu::to_json(*out.test).dump(2) << '\n';
    }
    if (verbose) say("best epoch " + std::to_string(result.best_epoch));
    return out;
}

template <typename T>
int cmd_train(const Options& o) {
    Manifest manifest{"train"};
    const auto config = model_config(o, o.chains);
    const auto data = load_data(o);
    const fs::path dir = o.out.empty() ? fs::path("run") : fs::path(o.out);
    const auto outcome = train_once<T>(o, data, config, o.seed, dir, true);
    manifest.body["model_config"] = to_json(config);
    manifest.body["train_config"] = to_json(train_config(o, o.seed));
    manifest.body["vocabulary_hash"] = data.table.vocabulary_hash();
    manifest.body["diverged"] = outcome.code == kExitDiverged;
    manifest.write((dir / "manifest.json").string(), o);
    if (outcome.test) say("test" + describe(*outcome.test));
    return outcome.code;
}

// ---- evaluate ----

template <typename T>
int cmd_evaluate(const Options& o) {
    Manifest manifest{"evaluate"};
    json report;
    if (!o.predictions.empty()) {
        require_path(o.predictions, "--predictions");
        std::ifstream in(o.predictions);
        json j;
        try {
            in >> j;
        } catch (const json::exception& e) {
            throw dmu::FormatError("predictions '" + o.predictions + "': " + e.what());
        }
        const auto records = dmu::parse_predictions(j);
        if (records.empty()) throw dmu::EmptyInputError("prediction file is empty");
        report = dmu::to_json(dmu::evaluate_records(records));
    } else {
        require_path(o.checkpoint, "--checkpoint");
        std::vector<std::string> paths;
        if (fs::is_directory(o.checkpoint)) {
            for (const auto& e : fs::recursive_directory_iterator(o.checkpoint)) {
                if (e.is_regular_file() && e.path().extension() == ".dmu") paths.push_back(e.path().string());
            }
            std::sort(paths.begin(), paths.end());
            if (paths.empty()) throw dmu::FormatError("no .dmu checkpoints under '" + o.checkpoint + "'");
        } else {
            paths.push_back(o.checkpoint);
        }
        const auto data = load_data(o);
        const auto set = encode<T>(pick_split(data.split, o.split), data.table, o.split.c_str());
        std::vector<dmu::EvalReport> reports;
        json runs = json::array();
        for (const auto& p : paths) {
            const auto model = load_checked<T>(p, data.table);
            reports.push_back(dmu::evaluate_model(model.params, model.header.config, set));
            auto r = dmu::to_json(reports.back());
            r["checkpoint"] = p;
            runs.push_back(std::move(r));
            say(p + describe(reports.back()));
        }
        report = reports.size() == 1 ? runs.front() : json{{"runs", runs}, {"summary", dmu::summarize(reports)}};
    }
    write_text(o.out, report.dump(2) + "\n");
    if (!o.out.empty()) manifest.write(sidecar(o.out), o);
    return kExitOk;
}

// ---- inspect-gates ----

template <typename T>
std::vector<dmu::HeatmapRow> gate_rows(const dmu::ModelParams<T>& params, const dmu::ModelConfig& config,
                                       const std::vector<std::string>& tokens, const dmu::EmbeddingTable& table) {
    const auto rows = dmu::embed_tokens<T>(tokens, table);
    dmu::ChainTrace<T> trace;
    dmu::predict_sentence<T>(params, config, rows, {}, &trace);
    return dmu::export_gate_heatmap(trace, tokens);
}

template <typename T>
int cmd_inspect(const Options& o) {
    Manifest manifest{"inspect-gates"};
    require_path(o.checkpoint, "--checkpoint");
    require_path(o.embeddings, "--embeddings");
    std::string text = o.text;
    if (text.empty()) {
        if (o.sentence_id < 0) throw dmu::ConfigError("give --sentence-id or --text");
        require_path(o.corpus, "--corpus");
        const auto split = dmu::load_split(o.corpus, o.seed);
        bool found = false;
        for (const auto* part : {&split.train, &split.validation, &split.test}) {
            for (const auto& r : *part) {
                if (r.id == o.sentence_id) {
                    text = r.text;
                    found = true;
                }
            }
        }
        if (!found) throw dmu::ConfigError("sentence id " + std::to_string(o.sentence_id) + " not found");
    }
    const auto tokens = dmu::tokenize(text);
    auto keep = std::unordered_set<std::string>(tokens.begin(), tokens.end());
    const auto table = dmu::load_embeddings(o.embeddings, o.dim, &keep);
    const auto model = load_checked<T>(o.checkpoint, table);
    const auto& config = model.header.config;

    std::ostringstream out;
    dmu::write_heatmap_header(out, config.n_chains);
    const auto rows = gate_rows(model.params, config, tokens, table);
    if (o.compare.empty()) {
        dmu::write_heatmap_rows(out, rows, dmu::to_string(config.gate_mode));
    } else {
        // Either another checkpoint, or a gate mode to re-run this one under.
        dmu::ModelParams<T> other_params = model.params;
        dmu::ModelConfig other_config = config;
        if (o.compare == "entnet" || o.compare == "delayed") {
            other_config.gate_mode = dmu::parse_gate_mode(o.compare);
        } else {
            auto other = load_checked<T>(o.compare, table);
            if (other.header.config.n_chains != config.n_chains) {
                throw dmu::ConfigError("--compare checkpoint has a different chain count");
            }
            other_params = std::move(other.params);
            other_config = other.header.config;
        }
        const auto other_rows = gate_rows(other_params, other_config, tokens, table);
        std::string a = dmu::to_string(config.gate_mode), b = dmu::to_string(other_config.gate_mode);
        if (a == b) {
            a += "_a";
            b += "_b";
        }
        for (std::size_t i = 0; i < rows.size(); ++i) {
            dmu::write_heatmap_rows(out, std::span(&rows[i], 1), a);
            dmu::write_heatmap_rows(out, std::span(&other_rows[i], 1), b);
        }
    }
    write_text(o.out, out.str());
    if (!o.out.empty()) manifest.write(sidecar(o.out), o);
    return kExitOk;
}

// ---- sweep-chains ----

template <typename T>
int cmd_sweep(const Options& o) {
    Manifest manifest{"sweep-chains"};
    if (o.n_min < 2 || o.n_max < o.n_min) {
        throw dmu::ConfigError("chain range needs 2 <= --n-min <= --n-max (two chains are tied to targets)");
    }
    if (o.tied_chains != 2) throw dmu::ConfigError("sweep-chains keeps exactly 2 tied chains");
    if (o.runs == 0) throw dmu::ConfigError("--runs must be positive");
    const auto data = load_data(o);
    const fs::path dir = o.out.empty() ? fs::path("sweep") : fs::path(o.out);
    json rows = json::array();
    int code = kExitOk;
    for (std::size_t n = o.n_min; n <= o.n_max; ++n) {
        const auto config = model_config(o, n);
        std::vector<double> f1;
        json runs = json::array();
        for (std::size_t r = 0; r < o.runs; ++r) {
            const std::uint64_t seed = o.seed + r;
            const auto run_dir = dir / ("n" + std::to_string(n)) / ("run" + std::to_string(r));
            const auto outcome = train_once<T>(o, data, config, seed, run_dir, false);
            if (outcome.code != kExitOk) {
                code = outcome.code;
                runs.push_back({{"seed", seed}, {"diverged", true}});
                continue;
            }
            const auto value = outcome.test ? outcome.test->aspect_macro_f1() : std::nullopt;
            if (value) f1.push_back(*value);
            runs.push_back({{"seed", seed}, {"aspect_macro_f1", dmu::detail::opt(value)}});
        }
        const auto ms = dmu::mean_std(f1);
        say("n=" + std::to_string(n) + " f1 " + std::to_string(ms.mean) + " +- " + std::to_string(ms.stddev));
        rows.push_back({{"n", n},
                        {"free_chains", n - 2},
                        {"mean_f1", f1.empty() ? json(nullptr) : json(ms.mean)},
                        {"std_f1", f1.empty() ? json(nullptr) : json(ms.stddev)},
                        {"runs", runs}});
    }
    fs::create_directories(dir);
    std::ofstream(dir / "sweep.json") << json{{"rows", rows}}.dump(2) << '\n';
    manifest.body["vocabulary_hash"] = data.table.vocabulary_hash();
    manifest.write((dir / "manifest.json").string(), o);
    return code;
}

// ---- synth ----

int cmd_synth(const Options& o) {
    Manifest manifest{"synth"};
    dmu::SynthSpec spec;
    if (!o.spec.empty()) spec = dmu::load_synth_spec(o.spec);
    std::mt19937_64 rng(spec.seed);
    const auto records = dmu::synth_generate(spec, rng);
    const auto table = dmu::synth_embeddings(spec, rng);
    const fs::path dir = o.out.empty() ? fs::path("synth") : fs::path(o.out);
    fs::create_directories(dir);
    dmu::save_corpus(records, (dir / "corpus.json").string());
    dmu::save_embeddings(table, (dir / "embeddings.txt").string());
    manifest.body["embed_dim"] = spec.embed_dim;
    manifest.body["sentences"] = records.size();
    manifest.write((dir / "manifest.json").string(), o);
    say("wrote " + std::to_string(records.size()) + " sentences to " + dir.string());
    return kExitOk;
}

template <typename F>
int dispatch(int precision, F&& f) {
    if (precision == 32) return f(float{});
    if (precision == 64) return f(double{});
    throw dmu::ConfigError("--precision must be 32 or 64");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Delayed-memory-update entity network for targeted aspect-based sentiment analysis"};
    app.set_version_flag("--version", std::string(dmu::kVersion));
    app.require_subcommand(1);
    Options o;
    std::string manifest;

    auto data_flags = [&](CLI::App* s) {
        s->add_option("--corpus", o.corpus, "Corpus file or directory (train/dev/test files)");
        s->add_option("--embeddings", o.embeddings, "Word vectors, one 'token v1 .. vD' per line");
        s->add_option("--dim", o.dim, "Embedding dimension")->capture_default_str();
        s->add_option("--seed", o.seed, "Random seed")->capture_default_str();
        s->add_option("--precision", o.precision, "Arithmetic precision, 32 or 64")->capture_default_str();
        s->add_option("--out", o.out, "Output path");
        s->add_option("--manifest", manifest, "Replay the options recorded in a manifest");
    };
    auto model_flags = [&](CLI::App* s) {
        s->add_option("--tied-chains", o.tied_chains, "Chains whose keys are the target embeddings")
            ->capture_default_str();
        s->add_option("--epochs", o.epochs, "Training epochs")->capture_default_str();
        s->add_option("--batch", o.batch, "Batch size")->capture_default_str();
        s->add_option("--lr", o.lr, "FTRL learning rate")->capture_default_str();
        s->add_option("--dropout", o.dropout, "Dropout rate")->capture_default_str();
        s->add_option("--l2", o.l2, "Penalty weight on the classifier matrix")->capture_default_str();
        s->add_flag("--l2-squared", o.l2_squared, "Penalise the squared Frobenius norm");
        s->add_option("--gate-mode", o.gate_mode, "delayed or entnet")
            ->check(CLI::IsMember({"delayed", "entnet"}))
            ->capture_default_str();
        s->add_option("--delay-input", o.delay_input, "Gate reads the current or the previous delay state")
            ->check(CLI::IsMember({"current", "previous"}))
            ->capture_default_str();
    };

    auto* train = app.add_subcommand("train", "Train a model and write checkpoint, log and manifest");
    data_flags(train);
    model_flags(train);
    train->add_option("--chains", o.chains, "Memory chains")->capture_default_str();

    auto* evaluate = app.add_subcommand("evaluate", "Score checkpoints or a prediction file");
    data_flags(evaluate);
    evaluate->add_option("--checkpoint", o.checkpoint, "Checkpoint file or directory of checkpoints");
    evaluate->add_option("--predictions", o.predictions, "Prediction file to score instead of a model");
    evaluate->add_option("--split", o.split, "train, dev or test")->capture_default_str();

    auto* inspect = app.add_subcommand("inspect-gates", "Per-token gate values for one sentence");
    data_flags(inspect);
    inspect->add_option("--checkpoint", o.checkpoint, "Checkpoint file")->required();
    inspect->add_option("--sentence-id", o.sentence_id, "Sentence id in --corpus");
    inspect->add_option("--text", o.text, "Raw sentence text");
    inspect->add_option("--compare", o.compare, "'entnet', 'delayed' or a second checkpoint");

    auto* sweep = app.add_subcommand("sweep-chains", "Aspect F1 against the number of memory chains");
    data_flags(sweep);
    model_flags(sweep);
    sweep->add_option("--n-min", o.n_min, "Smallest chain count")->capture_default_str();
    sweep->add_option("--n-max", o.n_max, "Largest chain count")->capture_default_str();
    sweep->add_option("--runs", o.runs, "Seeds per chain count")->capture_default_str();

    auto* synth = app.add_subcommand("synth", "Generate a synthetic corpus and embeddings");
    synth->add_option("--spec", o.spec, "key = value spec file");
    synth->add_option("--out", o.out, "Output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitInput;
    }

    try {
        CLI::App* sub = app.get_subcommands().front();
        if (!manifest.empty()) apply_manifest(o, manifest, sub->get_name());
        if (sub == synth) return cmd_synth(o);
        resolve_data_paths(o);
        return dispatch(o.precision, [&](auto tag) {
            using T = decltype(tag);
            if (sub == train) return cmd_train<T>(o);
            if (sub == evaluate) return cmd_evaluate<T>(o);
            if (sub == inspect) return cmd_inspect<T>(o);
            return cmd_sweep<T>(o);
        });
    } catch (const dmu::IncompatibleArtifactError& e) {
        say(e.what());
        return kExitIncompatible;
    } catch (const dmu::DivergenceError& e) {
        say(e.what());
        return kExitDiverged;
    } catch (const dmu::Error& e) {
        say(e.what());
        return kExitInput;
    } catch (const fs::filesystem_error& e) {
        say(e.what());
        return kExitInput;
    } catch (const json::exception& e) {
        say(std::string("malformed JSON: ") + e.what());
        return kExitInput;
    }
}
