#include "lmforge/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace lmforge {

namespace {

bool is_unicode_space(char32_t cp) {
    switch (cp) {
        case 0x09: case 0x0A: case 0x0B: case 0x0C: case 0x0D:
        case 0x20: case 0x85: case 0xA0: case 0x1680:
        case 0x2028: case 0x2029: case 0x202F: case 0x205F: case 0x3000:
            return true;
        default:
            return cp >= 0x2000 && cp <= 0x200A;
    }
}

// Decodes one UTF-8 codepoint at s[i]; advances i past it. Bytes that do not
// form valid UTF-8 are passed through as single opaque (non-space) units.
char32_t next_codepoint(const std::string& s, size_t& i) {
    const unsigned char b0 = static_cast<unsigned char>(s[i]);
    int len = 1;
    char32_t cp = b0;
    if (b0 >= 0xF0) {
        len = 4;
        cp = b0 & 0x07;
    } else if (b0 >= 0xE0) {
        len = 3;
        cp = b0 & 0x0F;
    } else if (b0 >= 0xC0) {
        len = 2;
        cp = b0 & 0x1F;
    }
    if (i + len > s.size()) {
        ++i;
        return b0;
    }
    for (int k = 1; k < len; ++k) {
        const unsigned char bk = static_cast<unsigned char>(s[i + k]);
        if ((bk & 0xC0) != 0x80) {
            ++i;
            return b0;
        }
        cp = (cp << 6) | (bk & 0x3F);
    }
    i += len;
    return cp;
}

}  // namespace

std::vector<std::string> tokenize(const std::string& text) {
    std::vector<std::string> tokens;
    std::string current;
    size_t i = 0;
    while (i < text.size()) {
        const size_t start = i;
        const char32_t cp = next_codepoint(text, i);
        if (is_unicode_space(cp)) {
            if (!current.empty()) {
                tokens.push_back(std::move(current));
                current.clear();
            }
        } else {
            current.append(text, start, i - start);
        }
    }
    if (!current.empty()) tokens.push_back(std::move(current));
    return tokens;
}

// ---- Vocabulary --------------------------------------------------------------

void Vocabulary::add(const std::string& token, std::int64_t count) {
    token_to_id_.emplace(token, static_cast<int>(id_to_token_.size()));
    id_to_token_.push_back(token);
    counts_.push_back(count);
}

Vocabulary Vocabulary::build(const std::vector<std::string>& tokens, int min_freq,
                             int max_vocab) {
    if (min_freq < 1) throw ConfigError("build_vocab: min_freq must be >= 1");
    if (max_vocab < kNumSpecials)
        throw ConfigError("build_vocab: max_vocab must be >= " + std::to_string(kNumSpecials));

    Vocabulary v;
    v.add(unk_token(), 0);
    v.add(pad_token(), 0);
    v.add(bos_token(), 0);
    v.add(eos_token(), 0);

    // Count with first-occurrence order so ties are deterministic.
    std::unordered_map<std::string, std::int64_t> counts;
    std::vector<const std::string*> order;
    counts.reserve(tokens.size() / 2 + 16);
    for (const auto& t : tokens) {
        auto [it, inserted] = counts.emplace(t, 0);
        if (inserted) order.push_back(&it->first);
        ++it->second;
    }
    std::vector<std::pair<const std::string*, std::int64_t>> ranked;
    ranked.reserve(order.size());
    for (const auto* t : order) {
        const std::int64_t c = counts[*t];
        if (c >= min_freq && v.token_to_id_.find(*t) == v.token_to_id_.end())
            ranked.emplace_back(t, c);
    }
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    const size_t cap = static_cast<size_t>(max_vocab) - kNumSpecials;
    if (ranked.size() > cap) ranked.resize(cap);
    for (const auto& [t, c] : ranked) v.add(*t, c);
    return v;
}

int Vocabulary::id(const std::string& token) const {
    auto it = token_to_id_.find(token);
    return it == token_to_id_.end() ? kUnk : it->second;
}

bool Vocabulary::contains(const std::string& token) const {
    return token_to_id_.find(token) != token_to_id_.end();
}

const std::string& Vocabulary::token(int id) const {
    if (id < 0 || id >= size())
        throw InvalidTokenId("Vocabulary::token: id " + std::to_string(id) + " out of range");
    return id_to_token_[id];
}

std::int64_t Vocabulary::count(const std::string& token) const {
    auto it = token_to_id_.find(token);
    return it == token_to_id_.end() ? 0 : counts_[it->second];
}

void Vocabulary::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write vocabulary file " + path);
    for (int i = 0; i < size(); ++i) out << id_to_token_[i] << '\t' << counts_[i] << '\n';
}

Vocabulary Vocabulary::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read vocabulary file " + path);
    Vocabulary v;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const size_t tab = line.find('\t');
        if (tab == std::string::npos) throw IoError("malformed vocabulary line: " + line);
        v.add(line.substr(0, tab), std::stoll(line.substr(tab + 1)));
    }
    if (v.size() < kNumSpecials || v.id_to_token_[kUnk] != unk_token() ||
        v.id_to_token_[kPad] != pad_token() || v.id_to_token_[kBos] != bos_token() ||
        v.id_to_token_[kEos] != eos_token())
        throw IoError("vocabulary file " + path + " is missing the special tokens");
    return v;
}

// ---- streams -----------------------------------------------------------------

TokenStream numericalize(const std::vector<std::string>& tokens, const Vocabulary& vocab) {
    TokenStream ids;
    ids.reserve(tokens.size());
    for (const auto& t : tokens) ids.push_back(vocab.id(t));
    return ids;
}

TokenStream build_stream(const std::vector<std::vector<std::string>>& documents,
                         const Vocabulary& vocab) {
    TokenStream stream;
    for (const auto& doc : documents) {
        stream.push_back(Vocabulary::kBos);
        for (const auto& t : doc) stream.push_back(vocab.id(t));
        stream.push_back(Vocabulary::kEos);
    }
    return stream;
}

std::vector<std::vector<std::string>> read_documents(const std::string& dir) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir);
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.is_regular_file()) files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    std::vector<std::vector<std::string>> docs;
    for (const auto& f : files) {
        std::ifstream in(f, std::ios::binary);
        if (!in) throw IoError("cannot read " + f.string());
        std::ostringstream ss;
        ss << in.rdbuf();
        auto tokens = tokenize(ss.str());
        if (!tokens.empty()) docs.push_back(std::move(tokens));
    }
    if (docs.empty()) throw EmptyCorpus("no non-empty documents under " + dir);
    return docs;
}

std::vector<int> BatchPlan::column(std::int64_t t) const {
    std::vector<int> col(batch_size);
    for (int s = 0; s < batch_size; ++s) col[s] = id(s, t);
    return col;
}

BatchPlan batchify(const TokenStream& stream, int batch_size, int base_bptt) {
    const std::int64_t n = static_cast<std::int64_t>(stream.size());
    if (n < batch_size)
        throw StreamTooShort("batchify: " + std::to_string(n) + " ids for batch_size " +
                             std::to_string(batch_size));
    BatchPlan plan;
    plan.batch_size = batch_size;
    plan.base_bptt = base_bptt;
    plan.seg_len = n / batch_size;
    plan.ids.assign(stream.begin(), stream.begin() + plan.seg_len * batch_size);
    return plan;
}

int sample_bptt_len(int base, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    const double mean = coin(rng) < 0.95 ? base : base / 2.0;
    std::normal_distribution<double> normal(mean, 5.0);
    const int drawn = static_cast<int>(std::lround(normal(rng)));
    return std::clamp(drawn, 5, base + 20);
}

// ---- synthetic corpus ---------------------------------------------------------

std::vector<double> MarkovChain::stationary() const {
    std::vector<double> pi(n_states, 1.0 / n_states), next(n_states);
    for (int iter = 0; iter < 2000; ++iter) {
        std::fill(next.begin(), next.end(), 0.0);
        for (int s = 0; s < n_states; ++s) {
            const double w = pi[s];
            const double* row = transitions.data() + static_cast<size_t>(s) * n_states;
            for (int t = 0; t < n_states; ++t) next[t] += w * row[t];
        }
        double diff = 0;
        for (int t = 0; t < n_states; ++t) diff += std::abs(next[t] - pi[t]);
        pi.swap(next);
        if (diff < 1e-13) break;
    }
    return pi;
}

double MarkovChain::conditional_entropy() const {
    const auto pi = stationary();
    double h = 0;
    for (int s = 0; s < n_states; ++s) {
        const double* row = transitions.data() + static_cast<size_t>(s) * n_states;
        double hs = 0;
        for (int t = 0; t < n_states; ++t)
            if (row[t] > 0) hs -= row[t] * std::log(row[t]);
        h += pi[s] * hs;
    }
    return h;
}

std::vector<int> sample_chain(const MarkovChain& chain, std::int64_t length,
                              std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    auto step = [&](int state) {
        double u = unit(rng);
        const double* row = chain.transitions.data() +
                            static_cast<size_t>(state) * chain.n_states;
        for (int t = 0; t < chain.n_states; ++t) {
            u -= row[t];
            if (u <= 0) return t;
        }
        return chain.n_states - 1;
    };
    int state = 0;
    for (int i = 0; i < 1000; ++i) state = step(state);  // burn-in toward stationarity
    std::vector<int> out;
    out.reserve(length);
    for (std::int64_t i = 0; i < length; ++i) {
        out.push_back(state);
        state = step(state);
    }
    return out;
}

SyntheticCorpus generate_synthetic_corpus(int vocab_size, std::int64_t length,
                                          std::uint64_t seed) {
    if (vocab_size < 2) throw ConfigError("generate_synthetic_corpus: vocab_size must be >= 2");
    if (length < 1) throw ConfigError("generate_synthetic_corpus: length must be >= 1");

    // Row logits u_i . v_j on rank-16 random factors, scaled so the rows are
    // clearly non-uniform but still have full support.
    constexpr int kRank = 16;
    constexpr double kLogitScale = 1.9;
    std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<double> u(static_cast<size_t>(vocab_size) * kRank);
    std::vector<double> v(static_cast<size_t>(vocab_size) * kRank);
    for (auto& x : u) x = gauss(rng);
    for (auto& x : v) x = gauss(rng);

    MarkovChain chain;
    chain.n_states = vocab_size;
    chain.transitions.assign(static_cast<size_t>(vocab_size) * vocab_size, 0.0);
    const double norm = kLogitScale / std::sqrt(static_cast<double>(kRank));
    for (int i = 0; i < vocab_size; ++i) {
        double* row = chain.transitions.data() + static_cast<size_t>(i) * vocab_size;
        double mx = -1e300;
        for (int j = 0; j < vocab_size; ++j) {
            double dot = 0;
            for (int r = 0; r < kRank; ++r)
                dot += u[static_cast<size_t>(i) * kRank + r] * v[static_cast<size_t>(j) * kRank + r];
            row[j] = dot * norm;
            mx = std::max(mx, row[j]);
        }
        double z = 0;
        for (int j = 0; j < vocab_size; ++j) {
            row[j] = std::exp(row[j] - mx);
            z += row[j];
        }
        for (int j = 0; j < vocab_size; ++j) row[j] /= z;
    }

    const auto states = sample_chain(chain, length, seed);
    SyntheticCorpus corpus;
    corpus.chain = std::move(chain);
    corpus.tokens.reserve(states.size());
    char buf[16];
    for (int s : states) {
        std::snprintf(buf, sizeof(buf), "w%03d", s);
        corpus.tokens.emplace_back(buf);
    }
    return corpus;
}

}  // namespace lmforge
