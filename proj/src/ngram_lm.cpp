#include "lmforge/ngram_lm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace lmforge {

namespace {

std::int64_t lookup(const std::unordered_map<std::int64_t, std::int64_t>& m,
                    std::int64_t key) {
    auto it = m.find(key);
    return it == m.end() ? 0 : it->second;
}

}  // namespace

std::int64_t NGramCounts::uni(int w) const { return lookup(unigram, w); }
std::int64_t NGramCounts::bi(int a, int b) const { return lookup(bigram, pack2(a, b)); }
std::int64_t NGramCounts::tri(int a, int b, int c) const {
    return lookup(trigram, pack3(a, b, c));
}
std::int64_t NGramCounts::continuations(int a) const { return lookup(bigram_prefix, a); }

NGramCounts count_ngrams(const TokenStream& stream, int max_order, int eos_id) {
    if (stream.empty()) throw EmptyStream("count_ngrams: empty stream");
    NGramCounts c;
    c.total_tokens = static_cast<std::int64_t>(stream.size());
    const std::int64_t n = c.total_tokens;
    for (std::int64_t i = 0; i < n; ++i) {
        ++c.unigram[stream[i]];
        if (max_order >= 2 && i + 1 < n && stream[i] != eos_id) {
            ++c.bigram[NGramCounts::pack2(stream[i], stream[i + 1])];
            ++c.bigram_prefix[stream[i]];
            if (max_order >= 3 && i + 2 < n && stream[i + 1] != eos_id)
                ++c.trigram[NGramCounts::pack3(stream[i], stream[i + 1], stream[i + 2])];
        }
    }
    return c;
}

double mle_prob(const NGramCounts& counts, const std::vector<int>& context, int w) {
    std::int64_t num = 0, den = 0;
    switch (context.size()) {
        case 0:
            num = counts.uni(w);
            den = counts.total_tokens;
            break;
        case 1:
            num = counts.bi(context[0], w);
            den = counts.uni(context[0]);
            break;
        case 2:
            num = counts.tri(context[0], context[1], w);
            den = counts.bi(context[0], context[1]);
            break;
        default:
            throw UnseenContext("mle_prob: context longer than 2");
    }
    if (den == 0) throw UnseenContext("mle_prob: context never observed");
    return static_cast<double>(num) / static_cast<double>(den);
}

int bucket_of(const NGramCounts& counts, int context_id) {
    const std::int64_t f = counts.uni(context_id);
    if (f < 1) return 0;
    if (f < 5) return 1;
    if (f < 25) return 2;
    if (f < 125) return 3;
    if (f < 625) return 4;
    return 5;
}

namespace {

// The three mixture components for a (prev, w) pair. p2 falls back to the
// unigram when prev has no observed continuation, which keeps the mixture a
// proper distribution for every context of a bos/eos-wrapped stream.
struct Components {
    double p0, p1, p2;
};

Components components(const NGramCounts& counts, int w_prev, int w, int vocab_size) {
    Components comp{};
    comp.p0 = 1.0 / vocab_size;
    comp.p1 = static_cast<double>(counts.uni(w)) / static_cast<double>(counts.total_tokens);
    if (counts.continuations(w_prev) > 0) {
        comp.p2 = static_cast<double>(counts.bi(w_prev, w)) /
                  static_cast<double>(counts.uni(w_prev));
    } else {
        comp.p2 = comp.p1;
    }
    return comp;
}

constexpr double kAlpha0Floor = 1e-6;

void floor_and_normalize(std::array<double, 3>& a) {
    const double s = a[0] + a[1] + a[2];
    for (auto& v : a) v /= s;
    if (a[0] < kAlpha0Floor) {
        // Keep a0 at the floor exactly; the other two share the remainder.
        const double rest = a[1] + a[2];
        const double fill = (1.0 - kAlpha0Floor) / rest;
        a[0] = kAlpha0Floor;
        a[1] *= fill;
        a[2] *= fill;
    }
}

// Held-out bigram pairs: every position scored against its predecessor,
// except that bos is never scored (it is conditioning context only) and pairs
// never span the eos -> bos seam.
template <typename Fn>
void for_each_pair(const TokenStream& heldout, Fn&& fn) {
    for (size_t i = 1; i < heldout.size(); ++i) {
        if (heldout[i] == Vocabulary::kBos || heldout[i - 1] == Vocabulary::kEos) continue;
        fn(heldout[i - 1], heldout[i]);
    }
}

}  // namespace

double mixture_prob(const NGramCounts& counts, const MixtureWeights& weights, int w_prev,
                    int w, int vocab_size) {
    const auto& a = weights.alpha[bucket_of(counts, w_prev)];
    const Components c = components(counts, w_prev, w, vocab_size);
    return a[0] * c.p0 + a[1] * c.p1 + a[2] * c.p2;
}

MixtureWeights fit_mixture_weights(const NGramCounts& counts, const TokenStream& heldout,
                                   int vocab_size) {
    if (heldout.empty()) throw EmptyStream("fit_mixture_weights: empty held-out stream");
    MixtureWeights w;
    constexpr int kMaxIters = 200;
    constexpr double kTol = 1e-6;

    for (int iter = 0; iter < kMaxIters; ++iter) {
        std::vector<std::array<double, 3>> resp(kNumBuckets, {0, 0, 0});
        std::vector<std::int64_t> pairs(kNumBuckets, 0);
        for_each_pair(heldout, [&](int prev, int cur) {
            const int q = bucket_of(counts, prev);
            const auto& a = w.alpha[q];
            const Components c = components(counts, prev, cur, vocab_size);
            const double r0 = a[0] * c.p0;
            const double r1 = a[1] * c.p1;
            const double r2 = a[2] * c.p2;
            const double z = r0 + r1 + r2;
            if (z <= 0) return;
            resp[q][0] += r0 / z;
            resp[q][1] += r1 / z;
            resp[q][2] += r2 / z;
            ++pairs[q];
        });
        double max_change = 0;
        for (int q = 0; q < kNumBuckets; ++q) {
            if (pairs[q] == 0) continue;
            std::array<double, 3> next = {resp[q][0] / pairs[q], resp[q][1] / pairs[q],
                                          resp[q][2] / pairs[q]};
            floor_and_normalize(next);
            for (int i = 0; i < 3; ++i)
                max_change = std::max(max_change, std::abs(next[i] - w.alpha[q][i]));
            w.alpha[q] = next;
        }
        if (max_change < kTol) break;
    }
    for (auto& a : w.alpha) floor_and_normalize(a);
    return w;
}

double mixture_log_likelihood(const NGramCounts& counts, const MixtureWeights& weights,
                              const TokenStream& heldout, int vocab_size) {
    double ll = 0;
    for_each_pair(heldout, [&](int prev, int cur) {
        ll += std::log(mixture_prob(counts, weights, prev, cur, vocab_size));
    });
    return ll;
}

void MixtureWeights::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write mixture weights " + path);
    out.precision(17);
    for (size_t q = 0; q < alpha.size(); ++q)
        out << q << ' ' << alpha[q][0] << ' ' << alpha[q][1] << ' ' << alpha[q][2] << '\n';
}

MixtureWeights MixtureWeights::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read mixture weights " + path);
    MixtureWeights w;
    int q = 0;
    std::array<double, 3> a{};
    while (in >> q >> a[0] >> a[1] >> a[2]) {
        if (q < 0 || q >= kNumBuckets) throw IoError("bad bucket index in " + path);
        w.alpha[q] = a;
    }
    return w;
}

void save_counts(const NGramCounts& counts, const Vocabulary& vocab,
                 const std::string& path) {
    std::vector<std::string> lines;
    lines.reserve(counts.unigram.size() + counts.bigram.size() + counts.trigram.size());
    auto emit = [&](const std::string& key, std::int64_t count) {
        lines.push_back(key + '\t' + std::to_string(count));
    };
    for (const auto& [w, c] : counts.unigram) emit(vocab.token(static_cast<int>(w)), c);
    for (const auto& [key, c] : counts.bigram) {
        const int a = static_cast<int>(key >> 21), b = static_cast<int>(key & 0x1FFFFF);
        emit(vocab.token(a) + ' ' + vocab.token(b), c);
    }
    for (const auto& [key, c] : counts.trigram) {
        const int a = static_cast<int>(key >> 42);
        const int b = static_cast<int>((key >> 21) & 0x1FFFFF);
        const int d = static_cast<int>(key & 0x1FFFFF);
        emit(vocab.token(a) + ' ' + vocab.token(b) + ' ' + vocab.token(d), c);
    }
    std::sort(lines.begin(), lines.end());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write counts file " + path);
    for (const auto& l : lines) out << l << '\n';
}

NGramCounts load_counts(const Vocabulary& vocab, const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read counts file " + path);
    NGramCounts counts;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const size_t tab = line.find('\t');
        if (tab == std::string::npos) throw IoError("malformed counts line: " + line);
        const std::int64_t c = std::stoll(line.substr(tab + 1));
        std::istringstream words(line.substr(0, tab));
        std::vector<int> ids;
        std::string word;
        while (words >> word) ids.push_back(vocab.id(word));
        switch (ids.size()) {
            case 1:
                counts.unigram[ids[0]] = c;
                counts.total_tokens += c;
                break;
            case 2:
                counts.bigram[NGramCounts::pack2(ids[0], ids[1])] = c;
                counts.bigram_prefix[ids[0]] += c;
                break;
            case 3:
                counts.trigram[NGramCounts::pack3(ids[0], ids[1], ids[2])] = c;
                break;
            default:
                throw IoError("malformed counts line: " + line);
        }
    }
    if (counts.total_tokens == 0) throw EmptyStream("counts file " + path + " has no unigrams");
    return counts;
}

}  // namespace lmforge
