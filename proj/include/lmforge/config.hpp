#pragma once

// Run configuration shared by the CLI and the trainer. Defaults reproduce the
// full-scale recipe; the "desk" preset is the scaled-down configuration used
// by the fast tests, and "simple-lstm" is the plain 2x200 SGD baseline.

#include <cstdint>
#include <string>
#include <vector>

#include "lmforge/errors.hpp"

namespace lmforge {

struct RunConfig {
    // paths
    std::string train_dir, valid_dir, test_dir;
    std::string vocab_file, checkpoint_file;
    std::string ngram_counts_file, ngram_weights_file;

    // model
    int layers = 3;
    int emb_size = 400;
    int hidden_size = 1150;
    bool tie_weights = false;

    // Base dropout rates, each multiplied by dropout_multiplier to get the
    // effective probability: weight 1.0, variational in/out 0.5, embedding
    // 0.2, so the default multiplier 0.5 yields (0.5, 0.25, 0.25, 0.1).
    double drop_weight = 1.0;
    double drop_var_in = 0.5;
    double drop_var_out = 0.5;
    double drop_embed = 0.2;
    double dropout_multiplier = 0.5;

    // training recipe
    int batch_size = 32;
    int bptt = 70;
    bool var_bptt = true;
    int phase1_epochs = 4;
    int phase2_epochs = 4;
    double phase1_lr = 1e-1;
    std::vector<double> phase2_lrs = {1e-2, 1e-2, 1e-4};
    double weight_decay = 0.1;
    std::string optimizer = "adam";  // adam | sgd | asgd
    bool sgdr = true;
    double sgdr_min_ratio = 0.01;  // lr_min = lr_max * ratio
    bool gradual_unfreeze = false;
    double clip_norm = 0.0;  // 0 disables clipping
    int nt_asgd_patience = 5;

    // vocabulary
    int min_freq = 2;
    int max_vocab = 60000;

    std::uint64_t seed = 42;

    // lr finder
    double lr_find_start = 1e-7;
    double lr_find_end = 10.0;
    int lr_find_steps = 100;

    std::string preset;  // record of the applied preset, if any

    double p_weight() const { return drop_weight * dropout_multiplier; }
    double p_var_in() const { return drop_var_in * dropout_multiplier; }
    double p_var_out() const { return drop_var_out * dropout_multiplier; }
    double p_embed() const { return drop_embed * dropout_multiplier; }
};

// Named presets: "paper" (the defaults above), "desk" (emb 32 / hidden 64,
// vocab cap 2000, no dropout, short Adam schedule), "simple-lstm" (2x200,
// SGD lr 1.0, 10 epochs, no regularization).
RunConfig make_preset(const std::string& name);

// "key = value" lines, '#' comments. Unknown keys and unparsable values are
// ConfigErrors naming the key.
void apply_config_file(RunConfig& cfg, const std::string& path);
void apply_key_value(RunConfig& cfg, const std::string& key, const std::string& value);

// Field-named validation messages; empty means the config is usable.
std::vector<std::string> validate(const RunConfig& cfg);

// Throws ConfigError with all messages joined if validation fails.
void validate_or_throw(const RunConfig& cfg);

}  // namespace lmforge
