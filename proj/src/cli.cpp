#include "lmforge/cli.hpp"

#include <CLI11.hpp>
#include <fstream>
#include <iostream>
#include <sstream>

#include "lmforge/config.hpp"
#include "lmforge/corpus.hpp"
#include "lmforge/eval_gen.hpp"
#include "lmforge/lstm_lm.hpp"
#include "lmforge/ngram_lm.hpp"
#include "lmforge/trainer.hpp"

namespace lmforge {

namespace {

struct CliState {
    RunConfig cfg;
    std::string preset;
    std::string config_path;
    bool seed_set = false;
    std::uint64_t seed = 0;
};

// Precedence: defaults < preset < config file < explicit flags. The flag
// values are applied by the subcommand callbacks after this resolves.
RunConfig resolve_base_config(const CliState& state) {
    RunConfig cfg = state.preset.empty() ? RunConfig{} : make_preset(state.preset);
    if (!state.config_path.empty()) apply_config_file(cfg, state.config_path);
    if (state.seed_set) cfg.seed = state.seed;
    return cfg;
}

TokenStream load_split_stream(const std::string& dir, const Vocabulary& vocab) {
    return build_stream(read_documents(dir), vocab);
}

Vocabulary require_vocab(const RunConfig& cfg) {
    if (cfg.vocab_file.empty()) throw ConfigError("vocab_file: required");
    return Vocabulary::load(cfg.vocab_file);
}

int cmd_build_vocab(const RunConfig& cfg, std::ostream& out) {
    if (cfg.train_dir.empty()) throw ConfigError("train_dir: required");
    if (cfg.vocab_file.empty()) throw ConfigError("vocab_file: required");
    const auto docs = read_documents(cfg.train_dir);
    std::vector<std::string> tokens;
    for (const auto& d : docs) tokens.insert(tokens.end(), d.begin(), d.end());
    const Vocabulary vocab = Vocabulary::build(tokens, cfg.min_freq, cfg.max_vocab);
    vocab.save(cfg.vocab_file);
    std::int64_t covered = 0;
    for (const auto& t : tokens)
        if (vocab.contains(t)) ++covered;
    const double coverage =
        tokens.empty() ? 100.0 : 100.0 * static_cast<double>(covered) / tokens.size();
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.2f", coverage);
    out << "vocab_size=" << vocab.size() << " coverage=" << buf << "%\n";
    return 0;
}

int cmd_train(const RunConfig& cfg, const std::string& model_kind, std::ostream& out) {
    if (cfg.train_dir.empty()) throw ConfigError("train_dir: required");
    const Vocabulary vocab = require_vocab(cfg);
    const TokenStream train = load_split_stream(cfg.train_dir, vocab);

    if (model_kind == "ngram") {
        const NGramModel model = train_ngram_model(train, vocab.size());
        if (cfg.ngram_counts_file.empty() || cfg.ngram_weights_file.empty())
            throw ConfigError("ngram_counts_file/ngram_weights_file: required for ngram model");
        save_counts(model.counts, vocab, cfg.ngram_counts_file);
        model.weights.save(cfg.ngram_weights_file);
        if (!cfg.valid_dir.empty()) {
            const TokenStream valid = load_split_stream(cfg.valid_dir, vocab);
            NGramScorer scorer(model.counts, model.weights, vocab.size());
            out << "ngram " << perplexity(scorer, valid).line() << "\n";
        }
        return 0;
    }
    if (model_kind != "neural") throw ConfigError("model: expected neural|ngram");

    if (cfg.valid_dir.empty()) throw ConfigError("valid_dir: required");
    if (cfg.checkpoint_file.empty()) throw ConfigError("checkpoint_file: required");
    const TokenStream valid = load_split_stream(cfg.valid_dir, vocab);
    Trainer trainer(cfg, vocab, train, valid);
    const TrainSummary summary =
        trainer.run([&](const EpochLog& log) { out << log.line() << "\n"; });
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", summary.best_valid_ppl);
    out << "best_valid_ppl=" << buf << "\n";
    return 0;
}

int cmd_lr_find(const RunConfig& cfg, const std::string& out_path, std::ostream& out) {
    if (cfg.train_dir.empty()) throw ConfigError("train_dir: required");
    if (cfg.valid_dir.empty()) throw ConfigError("valid_dir: required");
    const Vocabulary vocab = require_vocab(cfg);
    const TokenStream train = load_split_stream(cfg.train_dir, vocab);
    const TokenStream valid = load_split_stream(cfg.valid_dir, vocab);
    Trainer trainer(cfg, vocab, train, valid);
    const LrFinderTrace trace = trainer.lr_find();
    if (out_path.empty()) {
        trace.write_csv(out);
    } else {
        std::ofstream file(out_path);
        if (!file) throw IoError("cannot write lr trace " + out_path);
        trace.write_csv(file);
    }
    out << "suggested_lr=" << trace.suggested_lr
        << " max_descending_lr=" << trace.max_descending_lr << "\n";
    return 0;
}

int cmd_eval(const RunConfig& cfg, const std::string& model_kind, std::ostream& out) {
    if (cfg.test_dir.empty()) throw ConfigError("test_dir: required");
    const Vocabulary vocab = require_vocab(cfg);
    const TokenStream test = load_split_stream(cfg.test_dir, vocab);

    EvalReport report;
    if (model_kind == "uniform") {
        UniformScorer scorer(vocab.size());
        report = perplexity(scorer, test);
    } else if (model_kind == "ngram") {
        if (cfg.ngram_counts_file.empty() || cfg.ngram_weights_file.empty())
            throw ConfigError("ngram_counts_file/ngram_weights_file: required for ngram model");
        const NGramCounts counts = load_counts(vocab, cfg.ngram_counts_file);
        const MixtureWeights weights = MixtureWeights::load(cfg.ngram_weights_file);
        NGramScorer scorer(counts, weights, vocab.size());
        report = perplexity(scorer, test);
    } else if (model_kind == "neural") {
        if (cfg.checkpoint_file.empty()) throw ConfigError("checkpoint_file: required");
        const LstmLmParams params = load_checkpoint(cfg.checkpoint_file);
        NeuralScorer scorer(params);
        report = perplexity(scorer, test);
    } else {
        throw ConfigError("model: expected neural|ngram|uniform");
    }
    out << report.line() << "\n";
    return 0;
}

int cmd_generate(const RunConfig& cfg, const std::string& prompt, int max_len,
                 double temperature, const std::string& mode, std::ostream& out) {
    if (cfg.checkpoint_file.empty()) throw ConfigError("checkpoint_file: required");
    const Vocabulary vocab = require_vocab(cfg);
    const LstmLmParams params = load_checkpoint(cfg.checkpoint_file);
    const auto prompt_tokens = tokenize(prompt);
    if (prompt_tokens.empty()) throw EmptyPrompt("generate: empty prompt");

    GenerateOptions opts;
    opts.max_len = max_len;
    opts.temperature = temperature;
    opts.seed = cfg.seed;
    if (mode == "greedy") opts.mode = GenMode::greedy;
    else if (mode == "sample") opts.mode = GenMode::sample;
    else throw ConfigError("mode: expected greedy|sample");

    const auto continuation = generate(params, numericalize(prompt_tokens, vocab), opts);
    std::ostringstream text;
    for (const auto& t : prompt_tokens) text << t << ' ';
    for (size_t i = 0; i < continuation.size(); ++i) {
        if (continuation[i] == Vocabulary::kEos) break;
        if (i) text << ' ';
        text << vocab.token(continuation[i]);
    }
    out << text.str() << "\n";
    return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"language modeling toolkit: AWD-LSTM and interpolated bi-gram baselines"};
    app.require_subcommand(1);
    app.fallthrough();  // shared flags may follow the subcommand name

    CliState state;
    app.add_option("--config", state.config_path, "key = value configuration file")
        ->group("shared");
    app.add_option("--preset", state.preset, "paper | desk | simple-lstm")->group("shared");
    auto* seed_opt = app.add_option("--seed", state.seed, "RNG seed")->group("shared");

    // Flag storage; only applied when the user actually passed the flag.
    std::string train_dir, valid_dir, test_dir, vocab_file, checkpoint_file;
    std::string counts_file, weights_file;
    int min_freq = 0, max_vocab = 0, batch_size = 0, bptt = 0;
    int phase1_epochs = -1, phase2_epochs = -1;
    double phase1_lr = 0, dropout_multiplier = -1, weight_decay = -1;
    std::string optimizer_name, phase2_lrs_csv;

    auto add_shared = [&](CLI::App* cmd) {
        cmd->add_option("--train", train_dir, "training corpus directory");
        cmd->add_option("--valid", valid_dir, "validation corpus directory");
        cmd->add_option("--test", test_dir, "test corpus directory");
        cmd->add_option("--vocab", vocab_file, "vocabulary file");
        cmd->add_option("--checkpoint", checkpoint_file, "model checkpoint file");
        cmd->add_option("--counts", counts_file, "n-gram counts file");
        cmd->add_option("--weights", weights_file, "mixture weights file");
        cmd->add_option("--min-freq", min_freq, "vocabulary frequency floor");
        cmd->add_option("--max-vocab", max_vocab, "vocabulary size cap");
        cmd->add_option("--batch-size", batch_size, "training batch size");
        cmd->add_option("--bptt", bptt, "BPTT window");
        cmd->add_option("--phase1-epochs", phase1_epochs, "epochs with lower groups frozen");
        cmd->add_option("--phase2-epochs", phase2_epochs, "epochs after unfreezing");
        cmd->add_option("--phase1-lr", phase1_lr, "phase-1 learning rate");
        cmd->add_option("--phase2-lrs", phase2_lrs_csv, "comma-separated per-group rates");
        cmd->add_option("--dropout-multiplier", dropout_multiplier, "scales all dropouts");
        cmd->add_option("--weight-decay", weight_decay, "decoupled weight decay");
        cmd->add_option("--optimizer", optimizer_name, "adam | sgd | asgd");
    };
    auto apply_flags = [&](const CLI::App* cmd, RunConfig& cfg) {
        auto passed = [&](const std::string& name) { return cmd->count(name) > 0; };
        if (passed("--train")) cfg.train_dir = train_dir;
        if (passed("--valid")) cfg.valid_dir = valid_dir;
        if (passed("--test")) cfg.test_dir = test_dir;
        if (passed("--vocab")) cfg.vocab_file = vocab_file;
        if (passed("--checkpoint")) cfg.checkpoint_file = checkpoint_file;
        if (passed("--counts")) cfg.ngram_counts_file = counts_file;
        if (passed("--weights")) cfg.ngram_weights_file = weights_file;
        if (passed("--min-freq")) cfg.min_freq = min_freq;
        if (passed("--max-vocab")) cfg.max_vocab = max_vocab;
        if (passed("--batch-size")) cfg.batch_size = batch_size;
        if (passed("--bptt")) cfg.bptt = bptt;
        if (passed("--phase1-epochs")) cfg.phase1_epochs = phase1_epochs;
        if (passed("--phase2-epochs")) cfg.phase2_epochs = phase2_epochs;
        if (passed("--phase1-lr")) cfg.phase1_lr = phase1_lr;
        if (passed("--phase2-lrs"))
            apply_key_value(cfg, "phase2_lrs", phase2_lrs_csv);
        if (passed("--dropout-multiplier")) cfg.dropout_multiplier = dropout_multiplier;
        if (passed("--weight-decay")) cfg.weight_decay = weight_decay;
        if (passed("--optimizer")) cfg.optimizer = optimizer_name;
    };

    std::string model_kind = "neural";
    std::string gen_prompt, gen_mode = "greedy";
    int gen_max_len = 100;
    double gen_temperature = 1.0;
    std::string lr_out_path;

    auto* build = app.add_subcommand("build-vocab", "build and write the vocabulary");
    add_shared(build);
    auto* train = app.add_subcommand("train", "train a language model");
    add_shared(train);
    train->add_option("--model", model_kind, "neural | ngram");
    auto* lrfind = app.add_subcommand("lr-find", "exponential learning-rate range test");
    add_shared(lrfind);
    lrfind->add_option("--out", lr_out_path, "trace CSV path (stdout when omitted)");
    auto* eval = app.add_subcommand("eval", "held-out perplexity");
    add_shared(eval);
    eval->add_option("--model", model_kind, "neural | ngram | uniform");
    auto* gen = app.add_subcommand("generate", "continue a prompt");
    add_shared(gen);
    gen->add_option("--prompt", gen_prompt, "prompt text")->required();
    gen->add_option("--max-len", gen_max_len, "maximum tokens to emit");
    gen->add_option("--temperature", gen_temperature, "sampling temperature");
    gen->add_option("--mode", gen_mode, "greedy | sample");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {  // --help
            out << app.help();
            return 0;
        }
        err << "error: " << e.what() << "\n";
        return 2;
    }

    try {
        state.seed_set = seed_opt->count() > 0;
        RunConfig cfg = resolve_base_config(state);
        CLI::App* cmd = app.get_subcommands().front();
        apply_flags(cmd, cfg);
        validate_or_throw(cfg);

        if (cmd == build) return cmd_build_vocab(cfg, out);
        if (cmd == train) return cmd_train(cfg, model_kind, out);
        if (cmd == lrfind) return cmd_lr_find(cfg, lr_out_path, out);
        if (cmd == eval) return cmd_eval(cfg, model_kind, out);
        if (cmd == gen)
            return cmd_generate(cfg, gen_prompt, gen_max_len, gen_temperature, gen_mode, out);
        err << "error: no subcommand\n";
        return 2;
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace lmforge
