#include "sparsing/data.hpp"

#include <array>
#include <cmath>
#include <random>
#include <string>

#include "sparsing/io.hpp"

namespace sparsing {

TokenStream load_tokens(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw DataError("corpus not found: " + path.string());
  auto bytes = io::read_bytes(path);
  return TokenStream(bytes.begin(), bytes.end());
}

CorpusSplit split_corpus(std::span<const TokenId> corpus, double valid_fraction) {
  if (!(valid_fraction > 0.0 && valid_fraction <= 0.5)) {
    throw ConfigError("valid_fraction must lie in (0, 0.5]");
  }
  if (corpus.size() < 4) throw DataError("corpus too small to split");
  auto n_valid = static_cast<std::size_t>(std::floor(valid_fraction * corpus.size()));
  n_valid = std::max<std::size_t>(n_valid, 2);
  CorpusSplit s;
  s.valid_begin = corpus.size() - n_valid;
  s.train.assign(corpus.begin(), corpus.begin() + static_cast<std::ptrdiff_t>(s.valid_begin));
  s.valid.assign(corpus.begin() + static_cast<std::ptrdiff_t>(s.valid_begin), corpus.end());
  return s;
}

std::vector<std::span<const TokenId>> eval_windows(std::span<const TokenId> stream, int window) {
  if (window < 2) throw ConfigError("evaluation window must hold at least two tokens");
  std::vector<std::span<const TokenId>> out;
  const auto w = static_cast<std::size_t>(window);
  for (std::size_t pos = 0; pos < stream.size(); pos += w) {
    const std::size_t len = std::min(w, stream.size() - pos);
    if (len >= 2) out.push_back(stream.subspan(pos, len));
  }
  return out;
}

namespace {

constexpr int kTopics = 4;

struct Lexicon {
  std::vector<std::string> nouns, verbs, adjectives, adverbs;
};

std::string make_word(std::mt19937_64& rng, int syllables) {
  static constexpr std::array<const char*, 20> onsets = {
      "b", "d", "f", "g", "h", "k", "l", "m", "n", "p",
      "r", "s", "t", "v", "w", "br", "st", "tr", "pl", "ch"};
  static constexpr std::array<const char*, 8> vowels = {"a", "e", "i", "o", "u", "ea", "ou", "ai"};
  static constexpr std::array<const char*, 8> codas = {"", "", "", "n", "r", "l", "st", "m"};
  std::string w;
  for (int i = 0; i < syllables; ++i) {
    w += onsets[rng() % onsets.size()];
    w += vowels[rng() % vowels.size()];
    if (i + 1 == syllables) w += codas[rng() % codas.size()];
  }
  return w;
}

const Lexicon& lexicon() {
  static const Lexicon lex = [] {
    std::mt19937_64 rng(0x5eed5eedULL);
    Lexicon l;
    auto fill = [&](std::vector<std::string>& v, int n, int min_syl, int max_syl) {
      while (static_cast<int>(v.size()) < n) {
        const int syl = min_syl + static_cast<int>(rng() % (max_syl - min_syl + 1));
        v.push_back(make_word(rng, syl));
      }
    };
    fill(l.nouns, 240, 1, 3);
    fill(l.verbs, 120, 1, 2);
    fill(l.adjectives, 80, 2, 3);
    fill(l.adverbs, 30, 2, 3);
    for (auto& a : l.adverbs) a += "ly";
    return l;
  }();
  return lex;
}

class Generator {
 public:
  Generator(const SyntheticCorpusOptions& opts) : opts_(opts), rng_(opts.seed) {}

  TokenStream run() {
    TokenStream out;
    out.reserve(opts_.bytes);
    int sentences_in_paragraph = 0;
    int topic = pick_topic();
    while (out.size() < opts_.bytes) {
      std::string s = sentence(topic);
      if (++sentences_in_paragraph >= 4 + static_cast<int>(rng_() % 4)) {
        s += "\n\n";
        sentences_in_paragraph = 0;
        topic = pick_topic();
      } else {
        s += ' ';
      }
      for (char c : s) {
        if (out.size() == opts_.bytes) break;
        out.push_back(static_cast<TokenId>(c));
      }
    }
    return out;
  }

 private:
  int pick_topic() {
    return opts_.topic >= 0 ? opts_.topic % kTopics : static_cast<int>(rng_() % kTopics);
  }

  // Zipf-distributed index into a list of n words; topical draws prefer the topic's slice.
  std::size_t zipf(std::size_t n, int topic) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double r = u(rng_);
    // inverse CDF of a continuous 1/x law over [1, n]
    auto idx = static_cast<std::size_t>(std::exp(r * std::log(static_cast<double>(n)))) - 1;
    idx = std::min(idx, n - 1);
    if (topic >= 0 && u(rng_) < opts_.topic_bias) {
      const std::size_t slice = n / kTopics;
      idx = static_cast<std::size_t>(topic) * slice + idx % slice;
    }
    return idx;
  }

  bool chance(double p) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng_) < p; }

  std::string noun_phrase(int topic, bool& plural) {
    const auto& lex = lexicon();
    plural = chance(0.3);
    static constexpr std::array<const char*, 4> singular_det = {"the", "a", "this", "every"};
    static constexpr std::array<const char*, 4> plural_det = {"the", "some", "these", "many"};
    std::string np = plural ? plural_det[rng_() % 4] : singular_det[rng_() % 4];
    if (chance(0.4)) np += " " + lex.adjectives[zipf(lex.adjectives.size(), topic)];
    np += " " + lex.nouns[zipf(lex.nouns.size(), topic)];
    if (plural) np += "s";
    return np;
  }

  std::string sentence(int topic) {
    const auto& lex = lexicon();
    static constexpr std::array<const char*, 6> preps = {"in", "on", "with", "under", "near", "of"};
    bool plural = false;
    std::string s = noun_phrase(topic, plural);
    if (chance(0.2)) s += " " + lex.adverbs[zipf(lex.adverbs.size(), -1)];
    s += " " + lex.verbs[zipf(lex.verbs.size(), topic)];
    if (!plural) s += "s";
    bool obj_plural = false;
    if (chance(0.8)) s += " " + noun_phrase(topic, obj_plural);
    if (chance(0.4)) {
      s += " ";
      s += preps[rng_() % preps.size()];
      s += " " + noun_phrase(topic, obj_plural);
    }
    if (chance(0.25)) {
      s += ", and " + noun_phrase(topic, plural);
      s += " " + lex.verbs[zipf(lex.verbs.size(), topic)];
      if (!plural) s += "s";
    }
    s += chance(0.1) ? "?" : ".";
    s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
    return s;
  }

  SyntheticCorpusOptions opts_;
  std::mt19937_64 rng_;
};

}  // namespace

TokenStream generate_synthetic_corpus(const SyntheticCorpusOptions& opts) {
  return Generator(opts).run();
}

}  // namespace sparsing
