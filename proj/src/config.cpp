#include "lmforge/config.hpp"

#include <fstream>
#include <sstream>

#include "lmforge/lstm_lm.hpp"
#include "lmforge/optim.hpp"

namespace lmforge {

RunConfig make_preset(const std::string& name) {
    RunConfig cfg;
    cfg.preset = name;
    if (name == "paper") {
        return cfg;  // the defaults are the full-scale recipe
    }
    if (name == "desk") {
        cfg.emb_size = 32;
        cfg.hidden_size = 64;
        cfg.max_vocab = 2000;
        cfg.min_freq = 1;
        cfg.batch_size = 8;
        cfg.bptt = 16;
        cfg.dropout_multiplier = 0.0;
        cfg.weight_decay = 0.0;
        cfg.phase1_epochs = 1;
        cfg.phase2_epochs = 3;
        cfg.phase1_lr = 3e-3;
        cfg.phase2_lrs = {3e-3, 3e-3, 3e-3};
        cfg.clip_norm = 0.25;
        return cfg;
    }
    if (name == "simple-lstm") {
        const SimpleLstmConfig base = simple_lstm_config();
        cfg.layers = base.layers;
        cfg.emb_size = base.emb;
        cfg.hidden_size = base.hidden;
        cfg.dropout_multiplier = base.dropout_multiplier;
        cfg.weight_decay = 0.0;
        cfg.optimizer = base.optimizer;
        cfg.phase1_epochs = 0;
        cfg.phase2_epochs = base.epochs;
        cfg.phase2_lrs = std::vector<double>(base.layers, base.lr);
        cfg.sgdr = false;
        cfg.var_bptt = false;
        return cfg;
    }
    throw ConfigError("preset: unknown value '" + name + "' (expected paper|desk|simple-lstm)");
}

namespace {

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1" || value == "on") return true;
    if (value == "false" || value == "0" || value == "off") return false;
    throw ConfigError(key + ": expected a boolean, got '" + value + "'");
}

int parse_int(const std::string& key, const std::string& value) {
    try {
        size_t pos = 0;
        const int v = std::stoi(value, &pos);
        if (pos != value.size()) throw std::invalid_argument("");
        return v;
    } catch (const std::exception&) {
        throw ConfigError(key + ": expected an integer, got '" + value + "'");
    }
}

double parse_double(const std::string& key, const std::string& value) {
    try {
        size_t pos = 0;
        const double v = std::stod(value, &pos);
        if (pos != value.size()) throw std::invalid_argument("");
        return v;
    } catch (const std::exception&) {
        throw ConfigError(key + ": expected a number, got '" + value + "'");
    }
}

std::vector<double> parse_double_list(const std::string& key, const std::string& value) {
    std::vector<double> out;
    std::string item;
    std::istringstream ss(value);
    while (std::getline(ss, item, ',')) out.push_back(parse_double(key, item));
    if (out.empty()) throw ConfigError(key + ": expected a comma-separated list of numbers");
    return out;
}

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

}  // namespace

void apply_key_value(RunConfig& cfg, const std::string& key, const std::string& value) {
    if (key == "train_dir") cfg.train_dir = value;
    else if (key == "valid_dir") cfg.valid_dir = value;
    else if (key == "test_dir") cfg.test_dir = value;
    else if (key == "vocab_file") cfg.vocab_file = value;
    else if (key == "checkpoint_file") cfg.checkpoint_file = value;
    else if (key == "ngram_counts_file") cfg.ngram_counts_file = value;
    else if (key == "ngram_weights_file") cfg.ngram_weights_file = value;
    else if (key == "layers") cfg.layers = parse_int(key, value);
    else if (key == "emb_size") cfg.emb_size = parse_int(key, value);
    else if (key == "hidden_size") cfg.hidden_size = parse_int(key, value);
    else if (key == "tie_weights") cfg.tie_weights = parse_bool(key, value);
    else if (key == "drop_weight") cfg.drop_weight = parse_double(key, value);
    else if (key == "drop_var_in") cfg.drop_var_in = parse_double(key, value);
    else if (key == "drop_var_out") cfg.drop_var_out = parse_double(key, value);
    else if (key == "drop_embed") cfg.drop_embed = parse_double(key, value);
    else if (key == "dropout_multiplier") cfg.dropout_multiplier = parse_double(key, value);
    else if (key == "batch_size") cfg.batch_size = parse_int(key, value);
    else if (key == "bptt") cfg.bptt = parse_int(key, value);
    else if (key == "var_bptt") cfg.var_bptt = parse_bool(key, value);
    else if (key == "phase1_epochs") cfg.phase1_epochs = parse_int(key, value);
    else if (key == "phase2_epochs") cfg.phase2_epochs = parse_int(key, value);
    else if (key == "phase1_lr") cfg.phase1_lr = parse_double(key, value);
    else if (key == "phase2_lrs") cfg.phase2_lrs = parse_double_list(key, value);
    else if (key == "weight_decay") cfg.weight_decay = parse_double(key, value);
    else if (key == "optimizer") cfg.optimizer = value;
    else if (key == "sgdr") cfg.sgdr = parse_bool(key, value);
    else if (key == "sgdr_min_ratio") cfg.sgdr_min_ratio = parse_double(key, value);
    else if (key == "gradual_unfreeze") cfg.gradual_unfreeze = parse_bool(key, value);
    else if (key == "clip_norm") cfg.clip_norm = parse_double(key, value);
    else if (key == "nt_asgd_patience") cfg.nt_asgd_patience = parse_int(key, value);
    else if (key == "min_freq") cfg.min_freq = parse_int(key, value);
    else if (key == "max_vocab") cfg.max_vocab = parse_int(key, value);
    else if (key == "seed") cfg.seed = static_cast<std::uint64_t>(std::stoull(value));
    else if (key == "lr_find_start") cfg.lr_find_start = parse_double(key, value);
    else if (key == "lr_find_end") cfg.lr_find_end = parse_double(key, value);
    else if (key == "lr_find_steps") cfg.lr_find_steps = parse_int(key, value);
    else throw ConfigError("unknown config key '" + key + "'");
}

void apply_config_file(RunConfig& cfg, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file " + path);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key = value");
        apply_key_value(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
}

std::vector<std::string> validate(const RunConfig& cfg) {
    std::vector<std::string> errors;
    auto require = [&](bool ok, const std::string& msg) {
        if (!ok) errors.push_back(msg);
    };
    require(cfg.layers >= 1, "layers: must be >= 1");
    require(cfg.emb_size >= 1, "emb_size: must be >= 1");
    require(cfg.hidden_size >= 1, "hidden_size: must be >= 1");
    require(cfg.batch_size >= 1, "batch_size: must be >= 1");
    require(cfg.bptt >= 2, "bptt: must be >= 2");
    require(cfg.phase1_epochs >= 0, "phase1_epochs: must be >= 0");
    require(cfg.phase2_epochs >= 0, "phase2_epochs: must be >= 0");
    require(cfg.phase1_lr > 0, "phase1_lr: must be positive");
    require(cfg.weight_decay >= 0, "weight_decay: must be >= 0");
    require(cfg.clip_norm >= 0, "clip_norm: must be >= 0");
    require(cfg.nt_asgd_patience >= 1, "nt_asgd_patience: must be >= 1");
    require(cfg.min_freq >= 1, "min_freq: must be >= 1");
    require(cfg.max_vocab >= 4, "max_vocab: must be >= 4");
    require(cfg.sgdr_min_ratio > 0 && cfg.sgdr_min_ratio <= 1,
            "sgdr_min_ratio: must be in (0, 1]");
    require(cfg.dropout_multiplier >= 0, "dropout_multiplier: must be >= 0");
    for (double p : {cfg.p_weight(), cfg.p_var_in(), cfg.p_var_out(), cfg.p_embed()})
        require(p >= 0 && p < 1, "dropout: effective probabilities must be in [0, 1)");
    if (static_cast<int>(cfg.phase2_lrs.size()) != cfg.layers)
        errors.push_back("phase2_lrs: expected " + std::to_string(cfg.layers) +
                         " entries (one per layer group), got " +
                         std::to_string(cfg.phase2_lrs.size()));
    for (double lr : cfg.phase2_lrs)
        require(lr > 0, "phase2_lrs: entries must be positive");
    require(cfg.lr_find_start > 0 && cfg.lr_find_end > cfg.lr_find_start,
            "lr_find: require 0 < lr_find_start < lr_find_end");
    require(cfg.lr_find_steps >= 10, "lr_find_steps: must be >= 10");
    try {
        optimizer_kind_from(cfg.optimizer);
    } catch (const ConfigError& e) {
        errors.push_back(e.what());
    }
    return errors;
}

void validate_or_throw(const RunConfig& cfg) {
    const auto errors = validate(cfg);
    if (errors.empty()) return;
    std::string joined;
    for (const auto& e : errors) {
        if (!joined.empty()) joined += "; ";
        joined += e;
    }
    throw ConfigError(joined);
}

}  // namespace lmforge
