#include "absa/synthetic.hpp"

#include <array>
#include <random>
#include <string>
#include <string_view>

namespace absa {
namespace {

constexpr std::array<std::string_view, 16> kAspects = {
    "screen",     "keyboard", "battery life", "price",       "hard drive", "touchpad",
    "speakers",   "service",  "pasta",        "wine list",   "waiter",     "dessert",
    "atmosphere", "sushi",    "delivery",     "customer support"};

constexpr std::array<std::string_view, 5> kPositiveWords = {"great", "excellent", "fantastic", "superb", "lovely"};
constexpr std::array<std::string_view, 5> kNegativeWords = {"terrible", "awful", "poor", "horrible", "disappointing"};
constexpr std::array<std::string_view, 3> kNeutralWords = {"average", "acceptable", "ordinary"};

constexpr std::array<std::string_view, 4> kFiller = {
    "i bought it last week .", "we went there on a sunday .", "nothing else to report .",
    "my friend recommended this place ."};

// Modulo keeps the stream identical across standard libraries, unlike
// std::uniform_int_distribution.
std::size_t pick(std::mt19937_64& rng, std::size_t n) { return static_cast<std::size_t>(rng() % n); }

std::string_view opinion(std::mt19937_64& rng, int polarity) {
  switch (polarity) {
    case kPositive: return kPositiveWords[pick(rng, kPositiveWords.size())];
    case kNegative: return kNegativeWords[pick(rng, kNegativeWords.size())];
    default: return kNeutralWords[pick(rng, kNeutralWords.size())];
  }
}

struct Builder {
  std::string text;
  std::vector<CharSpan> spans;
  std::vector<std::pair<std::string, int>> opinions;  // aspect, polarity

  void word(std::string_view w) {
    if (!text.empty()) text += ' ';
    text += w;
  }
  void aspect(std::string_view a, int polarity) {
    if (!text.empty()) text += ' ';
    const std::size_t begin = text.size();
    text += a;
    spans.push_back({begin, text.size()});
    opinions.emplace_back(std::string(a), polarity);
  }
};

// Draws one sentence with zero, one or two distinct aspects.
Builder draw_sentence(std::mt19937_64& rng) {
  Builder b;
  const std::size_t a1 = pick(rng, kAspects.size());
  std::size_t a2 = pick(rng, kAspects.size() - 1);
  if (a2 >= a1) ++a2;
  const int p1 = static_cast<int>(pick(rng, 3));
  const int p2 = static_cast<int>(pick(rng, 3));
  switch (pick(rng, 5)) {
    case 0:
      b.word("the");
      b.aspect(kAspects[a1], p1);
      b.word("is");
      b.word(opinion(rng, p1));
      b.word(".");
      break;
    case 1:
      b.word("i");
      b.word("found");
      b.word("the");
      b.aspect(kAspects[a1], p1);
      b.word(opinion(rng, p1));
      b.word(".");
      break;
    case 2:
      b.word("the");
      b.aspect(kAspects[a1], p1);
      b.word("was");
      b.word(opinion(rng, p1));
      b.word("but");
      b.word("the");
      b.aspect(kAspects[a2], p2);
      b.word("was");
      b.word(opinion(rng, p2));
      b.word(".");
      break;
    case 3:
      b.word(opinion(rng, p1));
      b.aspect(kAspects[a1], p1);
      b.word("and");
      b.word(opinion(rng, p2));
      b.aspect(kAspects[a2], p2);
      b.word("!");
      break;
    default:
      b.text = std::string(kFiller[pick(rng, kFiller.size())]);
      break;
  }
  return b;
}

}  // namespace

std::vector<AeExample> synthesize_ae(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<AeExample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Builder b = draw_sentence(rng);
    out.push_back(make_ae_example("synth-ae-" + std::to_string(i), std::move(b.text), std::move(b.spans)));
  }
  return out;
}

std::vector<AscExample> synthesize_asc(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<AscExample> out;
  out.reserve(n);
  std::size_t sentence = 0;
  while (out.size() < n) {
    Builder b = draw_sentence(rng);
    if (b.opinions.empty()) continue;
    const AeExample base = make_ae_example("", b.text, {});
    for (std::size_t k = 0; k < b.opinions.size() && out.size() < n; ++k) {
      AscExample ex;
      ex.id = "synth-asc-" + std::to_string(sentence) + "-" + std::to_string(k);
      ex.text = b.text;
      ex.sentence_tokens = base.words();
      ex.aspect = b.opinions[k].first;
      for (const auto& t : tokenize(ex.aspect)) ex.aspect_tokens.push_back(t.text);
      ex.polarity = b.opinions[k].second;
      out.push_back(std::move(ex));
    }
    ++sentence;
  }
  return out;
}

}  // namespace absa
