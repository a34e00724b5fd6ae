// Acceptance gate. Prints one PASS / FAIL / SKIP line per criterion.
//
//   dmu_acceptance            run every criterion
//   dmu_acceptance 3 5        run the listed criteria
//
// Exit status: 1 if anything failed, 77 if everything requested was skipped,
// 0 otherwise.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "dmu/dmu.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

namespace {

using dmu::ModelConfig;
using dmu::ModelParams;
using Clock = std::chrono::steady_clock;

enum class Status { Pass, Fail, Skip };

struct Outcome {
    Status status;
    std::string detail;
};

Outcome verdict(bool ok, std::string detail) { return {ok ? Status::Pass : Status::Fail, std::move(detail)}; }

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double x, int precision = 3) {
    std::ostringstream os;
    os << std::setprecision(precision) << x;
    return os.str();
}

std::string fixed(double x, int digits = 4) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(digits) << x;
    return os.str();
}

// ---- synthetic runs ----

struct SynthRun {
    double train_accuracy = 0;  // 3-class slot accuracy on the training set
    double test_f1 = 0;         // aspect macro-F1 on the evaluated set
    double seconds = 0;
};

/// Generates the corpus, trains from init_params and scores the selected
/// model. With `overfit`, training, validation and test are all the full corpus.
SynthRun run_synth(const dmu::SynthSpec& spec, const ModelConfig& config, const dmu::TrainConfig& cfg,
                   bool overfit) {
    const auto t0 = Clock::now();
    std::mt19937_64 rng(spec.seed);
    auto records = dmu::synth_generate(spec, rng);
    auto table = dmu::synth_embeddings(spec, rng);
    auto split = dmu::split_corpus(records, spec.seed);
    auto enc = [&](const std::vector<dmu::SentenceRecord>& r) {
        return dmu::encode_corpus<double>(dmu::expand_instances(r, spec.aspects), table, spec.aspects);
    };
    auto train_set = overfit ? enc(records) : enc(split.train);
    auto val_set = overfit ? enc(records) : enc(split.validation);
    auto test_set = overfit ? enc(records) : enc(split.test);
    std::mt19937_64 init_rng(spec.seed);
    auto params = dmu::init_params<double>(config, table, init_rng);
    auto result = dmu::train(train_set, val_set, params, config, cfg, spec.aspects);

    SynthRun out;
    auto train_preds = dmu::predict_corpus(result.best, config, train_set);
    std::size_t ok = 0;
    for (const auto& p : train_preds) ok += p.predicted == p.gold;
    out.train_accuracy = static_cast<double>(ok) / static_cast<double>(train_preds.size());
    auto report = dmu::evaluate_records(dmu::predict_corpus(result.best, config, test_set), spec.aspects);
    out.test_f1 = report.aspect.macro_f1.value_or(0.0);
    out.seconds = seconds_since(t0);
    return out;
}

double mean(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); }

// ---- criteria ----

Outcome gradient_fidelity() {
    const auto t0 = Clock::now();
    std::mt19937_64 rng(101);
    double worst = 0;
    for (int rep = 0; rep < 20; ++rep) {
        auto config = ModelConfig::with(8, 3, 1);
        auto table = fixtures::random_table(8, 10, rng);
        auto params = fixtures::random_params(config, table, rng);
        auto in = fixtures::random_input(8, 6, rng);
        worst = std::max(worst, fixtures::model_gradient_error(params, config, in, 0.001, false));
    }
    const double secs = seconds_since(t0);
    return verdict(worst <= 1e-4 && secs < 120,
                   "max relative error " + fmt(worst) + " (limit 1e-4), " + fmt(secs) + " s (limit 120)");
}

Outcome unit_norm() {
    std::mt19937_64 rng(102);
    std::normal_distribution<double> n(0, 1);
    std::uniform_real_distribution<double> g(0.001, 0.999);
    double worst64 = 0, worst32 = 0;
    for (int rep = 0; rep < 1000; ++rep) {
        dmu::Vector<double> h(16), c(16);
        for (auto& x : h) x = n(rng);
        for (auto& x : c) x = 3 * n(rng);
        h.normalize();
        const double gate = g(rng);
        dmu::Tape<double> t64(false);
        auto o64 = t64.vec(dmu::memory_step(t64, t64.constant(h), t64.scalar_constant(gate), t64.constant(c)));
        worst64 = std::max(worst64, std::fabs(o64.norm() - 1));
        dmu::Tape<float> t32(false);
        dmu::Vector<float> hf = h.cast<float>(), cf = c.cast<float>();
        auto o32 = t32.vec(dmu::memory_step(t32, t32.constant(hf), t32.scalar_constant(static_cast<float>(gate)),
                                            t32.constant(cf)));
        worst32 = std::max(worst32, std::fabs(o32.cast<double>().norm() - 1));
    }
    return verdict(worst64 <= 1e-12 && worst32 <= 1e-6,
                   "64-bit " + fmt(worst64) + " (limit 1e-12), 32-bit " + fmt(worst32) + " (limit 1e-6)");
}

Outcome ablation_equivalence() {
    std::mt19937_64 rng(103);
    double worst = 0;
    for (int rep = 0; rep < 100; ++rep) {
        auto config = ModelConfig::with(8, 4, 2);
        config.delay_input = rep % 2 ? dmu::DelayInput::Previous : dmu::DelayInput::Current;
        auto table = fixtures::random_table(8, 10, rng);
        auto params = fixtures::random_params(config, table, rng);
        for (auto* d : {&params.fwd, &params.bwd}) std::fill(d->v.values().begin(), d->v.values().end(), 0.0);
        auto in = fixtures::random_input(8, 7, rng);
        auto delayed = dmu::forward(params, config, in);
        config.gate_mode = dmu::GateMode::EntNet;
        auto entnet = dmu::forward(params, config, in);
        worst = std::max(worst, (delayed.probabilities - entnet.probabilities).cwiseAbs().maxCoeff());
    }
    return verdict(worst <= 1e-12, "max |delta y| " + fmt(worst) + " over 100 instances (limit 1e-12)");
}

Outcome permutation_invariance() {
    std::mt19937_64 rng(104);
    double worst = 0;
    for (int rep = 0; rep < 100; ++rep) {
        auto config = ModelConfig::with(8, 6, 2);
        auto table = fixtures::random_table(8, 10, rng);
        auto params = fixtures::random_params(config, table, rng);
        auto in = fixtures::random_input(8, 7, rng);
        auto base = dmu::forward(params, config, in);
        std::vector<std::size_t> perm(config.n_chains);
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);
        auto shuffled = params;
        for (std::size_t j = 0; j < perm.size(); ++j) shuffled.keys[j] = params.keys[perm[j]];
        auto moved = dmu::forward(shuffled, config, in);
        worst = std::max(worst, (base.probabilities - moved.probabilities).cwiseAbs().maxCoeff());
    }
    return verdict(worst <= 1e-12, "max |delta y| " + fmt(worst) + " over 100 permutations (limit 1e-12)");
}

Outcome metric_oracles() {
    std::mt19937_64 rng(105);
    double worst = 0;
    for (int rep = 0; rep < 200; ++rep) {
        const std::size_t n = std::uniform_int_distribution<std::size_t>(2, 60)(rng);
        std::vector<double> s(n);
        std::vector<int> y(n);
        std::uniform_int_distribution<int> coarse(0, 8);
        std::uniform_real_distribution<double> fine(0, 1);
        for (std::size_t i = 0; i < n; ++i) {
            s[i] = rep % 2 ? coarse(rng) / 8.0 : fine(rng);
            y[i] = static_cast<int>(rng() & 1);
        }
        y[0] = 1;
        y[1] = 0;
        worst = std::max(worst, std::fabs(dmu::roc_auc(s, y) - oracle::auc_pairwise(s, y)));
    }
    const double constructed = dmu::roc_auc(std::vector<double>{0.8, 0.6, 0.4, 0.2}, std::vector<int>{1, 0, 1, 0});

    std::size_t violations = 0;
    std::uniform_int_distribution<int> cls(0, 2);
    const auto& aspects = dmu::default_aspects();
    for (int rep = 0; rep < 200; ++rep) {
        std::vector<dmu::PredictionRecord> records;
        const int sentences = std::uniform_int_distribution<int>(1, 12)(rng);
        for (int s = 0; s < sentences; ++s) {
            for (const char* target : {"loc1", "loc2"}) {
                if (target[3] == '2' && rng() % 2) continue;
                for (const auto& a : aspects) {
                    dmu::PredictionRecord r;
                    r.sentence_id = s;
                    r.target = target;
                    r.aspect = a;
                    r.gold = static_cast<dmu::Polarity>(cls(rng));
                    r.predicted = rng() % 3 ? r.gold : static_cast<dmu::Polarity>(cls(rng));
                    r.probabilities = {0.2, 0.2, 0.2};
                    r.probabilities[static_cast<std::size_t>(r.predicted)] = 0.6;
                    records.push_back(r);
                }
            }
        }
        auto m = dmu::aspect_metrics(records);
        if (m.strict_accuracy > m.slot_accuracy) ++violations;
    }
    return verdict(worst <= 1e-9 && constructed == 0.75 && violations == 0,
                   "oracle gap " + fmt(worst) + " (limit 1e-9), constructed case " + fmt(constructed, 17) +
                       ", strict > slot on " + std::to_string(violations) + "/200 corpora");
}

Outcome ftrl_correctness() {
    auto scalar = [] {
        auto params = dmu::zero_params<double>(ModelConfig::with(1, 1, 0));
        return std::tuple{params, ModelParams<double>::shaped_like(params), dmu::FtrlState<double>::zeros_like(params)};
    };
    auto [params, grads, state] = scalar();
    grads.R[0] = 1.0;
    dmu::TrainConfig cfg;
    cfg.learning_rate = 0.5;
    cfg.ftrl_beta = 1.0;
    dmu::ftrl_step(params, grads, state, cfg);
    const double hand = std::fabs(params.R[0] - (-0.25));

    std::mt19937_64 rng(106);
    std::uniform_real_distribution<double> g(-3, 3), w0(-1, 1), alpha(0.01, 1), beta(0, 2), l1(0, 0.5);
    double worst = 0;
    for (int rep = 0; rep < 100; ++rep) {
        auto [p, gr, st] = scalar();
        dmu::TrainConfig c;
        c.learning_rate = alpha(rng);
        c.ftrl_beta = beta(rng);
        c.ftrl_l1 = rep % 2 ? l1(rng) : 0.0;
        p.R[0] = w0(rng);
        oracle::FtrlCoordinate ref(p.R[0], c.learning_rate, c.ftrl_beta, c.ftrl_l1);
        const int steps = std::uniform_int_distribution<int>(2, 30)(rng);
        for (int s = 0; s < steps; ++s) {
            const double gi = rng() % 7 == 0 ? 0.0 : g(rng);
            gr.R[0] = gi;
            dmu::ftrl_step(p, gr, st, c);
            ref.step(gi);
            worst = std::max({worst, std::fabs(p.R[0] - static_cast<double>(ref.w)),
                              std::fabs(st.z.R[0] - static_cast<double>(ref.z)),
                              std::fabs(st.n.R[0] - static_cast<double>(ref.n))});
        }
    }
    return verdict(hand <= 1e-12 && worst <= 1e-12,
                   "hand step error " + fmt(hand) + ", trajectory max error " + fmt(worst) + " (limit 1e-12)");
}

Outcome overfit_check() {
    dmu::SynthSpec spec;
    spec.sentences = 20;
    spec.embed_dim = 32;
    spec.seed = 1;
    auto config = ModelConfig::with(32, 4, 2);
    dmu::TrainConfig cfg;
    cfg.epochs = 300;
    cfg.batch_size = 32;
    cfg.learning_rate = 0.5;
    cfg.dropout_rate = 0.0;
    cfg.seed = spec.seed;
    const auto run = run_synth(spec, config, cfg, true);
    return verdict(run.train_accuracy >= 0.99 && run.seconds < 300,
                   "training slot accuracy " + fixed(run.train_accuracy) + " (need 0.99), " + fmt(run.seconds) +
                       " s (limit 300)");
}

// Cue words sit 5-10 tokens after their target.
dmu::SynthSpec delayed_trigger_spec(std::uint64_t seed) {
    dmu::SynthSpec spec;
    spec.sentences = 500;
    spec.embed_dim = 16;
    spec.min_distance = 4;
    spec.max_distance = 9;
    spec.filler_vocab = 20;
    spec.mention_prob = 0.5;
    spec.seed = seed;
    return spec;
}

Outcome delay_benefit() {
    const auto t0 = Clock::now();
    dmu::TrainConfig cfg;
    cfg.epochs = 60;
    cfg.batch_size = 16;
    cfg.learning_rate = 0.5;
    cfg.dropout_rate = 0.0;
    std::vector<double> delayed, entnet;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const auto spec = delayed_trigger_spec(seed);
        cfg.seed = seed;
        delayed.push_back(run_synth(spec, ModelConfig::with(16, 4, 2, dmu::GateMode::Delayed), cfg, false).test_f1);
        entnet.push_back(run_synth(spec, ModelConfig::with(16, 4, 2, dmu::GateMode::EntNet), cfg, false).test_f1);
        std::cerr << "  seed " << seed << ": delayed " << fixed(delayed.back()) << ", entnet "
                  << fixed(entnet.back()) << "\n";
    }
    const double gap = 100 * (mean(delayed) - mean(entnet));
    const double secs = seconds_since(t0);
    return verdict(gap >= 2.0 && secs < 1800,
                   "mean F1 delayed " + fixed(mean(delayed)) + " vs entnet " + fixed(mean(entnet)) + ", gap " +
                       fmt(gap) + " points (need 2), " + fmt(secs) + " s (limit 1800)");
}

// One target with most aspects mentioned close by. A single unit-norm memory
// holds several aspect sentiments poorly, so free chains add capacity.
dmu::SynthSpec multi_aspect_spec(std::uint64_t seed) {
    dmu::SynthSpec spec;
    spec.sentences = 300;
    spec.targets = 1;
    spec.embed_dim = 16;
    spec.mention_prob = 0.75;
    spec.max_distance = 2;
    spec.filler_vocab = 10;
    spec.seed = seed;
    return spec;
}

Outcome chain_sensitivity() {
    const auto t0 = Clock::now();
    dmu::TrainConfig cfg;
    cfg.epochs = 100;
    cfg.batch_size = 16;
    cfg.learning_rate = 0.5;
    cfg.dropout_rate = 0.0;
    std::vector<double> by_n(11, 0.0);
    for (std::size_t n : {2, 5, 6, 7, 8, 9, 10}) {
        std::vector<double> f1;
        for (std::uint64_t seed = 1; seed <= 5; ++seed) {
            const auto spec = multi_aspect_spec(seed);
            cfg.seed = seed;
            f1.push_back(run_synth(spec, ModelConfig::with(spec.embed_dim, n, 2), cfg, false).test_f1);
        }
        by_n[n] = mean(f1);
        std::cerr << "  n=" << n << ": mean F1 " << fixed(by_n[n]) << "\n";
    }
    const auto [lo, hi] = std::minmax_element(by_n.begin() + 5, by_n.end());
    const double spread = 100 * (*hi - *lo);
    std::ostringstream detail;
    detail << "F1 n=2 " << fixed(by_n[2]) << ", n=6 " << fixed(by_n[6]) << ", spread over n=5..10 " << fmt(spread)
           << " points (limit 1), " << fmt(seconds_since(t0)) << " s";
    return verdict(by_n[6] > by_n[2] && spread <= 1.0, detail.str());
}

Outcome sentihood_reproduction() {
    namespace fs = std::filesystem;
    const char* dir = std::getenv("DMU_DATA_DIR");
    if (dir == nullptr || !fs::is_directory(dir) || !fs::exists(fs::path(dir) / "embeddings.txt")) {
        return {Status::Skip, "set DMU_DATA_DIR to a Sentihood directory with embeddings.txt (multi-hour run)"};
    }
    const auto t0 = Clock::now();
    const dmu::TrainConfig cfg;  // defaults
    ModelConfig config;
    auto split = dmu::load_split(dir, cfg.seed);
    auto table = dmu::load_embeddings((fs::path(dir) / "embeddings.txt").string(), config.embed_dim);
    auto enc = [&](const std::vector<dmu::SentenceRecord>& r) {
        return dmu::encode_corpus<double>(dmu::expand_instances(r, dmu::default_aspects()), table);
    };
    auto train_set = enc(split.train);
    auto val_set = enc(split.validation);
    auto test_set = enc(split.test);
    std::mt19937_64 rng(cfg.seed);
    auto params = dmu::init_params<double>(config, table, rng);
    auto result = dmu::train(train_set, val_set, params, config, cfg);
    auto report = dmu::evaluate_model(result.best, config, test_set);
    const double f1 = 100 * report.aspect.macro_f1.value_or(0.0);
    const double acc = 100 * report.sentiment_acc().value_or(0.0);
    return verdict(std::fabs(f1 - 78.5) <= 2.0 && std::fabs(acc - 91.0) <= 2.0,
                   "aspect macro-F1 " + fmt(f1) + " (78.5 +- 2), sentiment accuracy " + fmt(acc) + " (91.0 +- 2), " +
                       fmt(seconds_since(t0) / 3600) + " h");
}

struct Criterion {
    int id;
    const char* name;
    std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
    const std::vector<Criterion> all{
        {1, "gradient fidelity", gradient_fidelity},
        {2, "unit-norm invariant", unit_norm},
        {3, "ablation equivalence", ablation_equivalence},
        {4, "chain permutation invariance", permutation_invariance},
        {5, "metric oracles", metric_oracles},
        {6, "FTRL correctness", ftrl_correctness},
        {7, "overfit check", overfit_check},
        {8, "delay benefit", delay_benefit},
        {9, "chain-count sensitivity", chain_sensitivity},
        {10, "Sentihood reproduction", sentihood_reproduction},
    };
    std::vector<int> wanted;
    for (int i = 1; i < argc; ++i) wanted.push_back(std::atoi(argv[i]));

    int failed = 0, skipped = 0, ran = 0;
    for (const auto& c : all) {
        if (!wanted.empty() && std::find(wanted.begin(), wanted.end(), c.id) == wanted.end()) continue;
        ++ran;
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {Status::Fail, std::string("exception: ") + e.what()};
        }
        const char* tag = o.status == Status::Pass ? "PASS" : o.status == Status::Fail ? "FAIL" : "SKIP";
        failed += o.status == Status::Fail;
        skipped += o.status == Status::Skip;
        std::cout << "criterion " << c.id << " " << tag << "  " << c.name << ": " << o.detail << std::endl;
    }
    if (ran == 0) {
        std::cerr << "no such criterion\n";
        return 2;
    }
    if (failed > 0) return 1;
    return skipped == ran ? 77 : 0;
}
