#include "absa/data.hpp"

#include <fstream>
#include <memory>
#include <type_traits>
#include <sstream>

#include <expat.h>
#include <nlohmann/json.hpp>

#include "absa/log.hpp"

namespace absa {

using json = nlohmann::json;

std::string_view polarity_name(int polarity) {
  switch (polarity) {
    case kPositive: return "positive";
    case kNegative: return "negative";
    case kNeutral: return "neutral";
  }
  throw LabelError("polarity index " + std::to_string(polarity) + " outside {0,1,2}");
}

int parse_polarity(std::string_view s) {
  if (s == "positive") return kPositive;
  if (s == "negative") return kNegative;
  if (s == "neutral") return kNeutral;
  throw DataError("unknown polarity '" + std::string(s) + "'");
}

std::vector<std::string> AeExample::words() const {
  std::vector<std::string> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(t.text);
  return out;
}

// ---------------------------------------------------------------------------

std::vector<int> bio_encode(std::span<const Token> tokens, std::span<const CharSpan> aspects) {
  std::vector<CharSpan> sorted(aspects.begin(), aspects.end());
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 1; i < sorted.size(); ++i) {
    if (sorted[i].begin < sorted[i - 1].end) {
      throw DataError("overlapping aspect spans [" + std::to_string(sorted[i - 1].begin) + "," +
                      std::to_string(sorted[i - 1].end) + ") and [" + std::to_string(sorted[i].begin) +
                      "," + std::to_string(sorted[i].end) + ")");
    }
  }
  std::vector<int> tags(tokens.size(), kTagO);
  for (const auto& span : sorted) {
    if (span.begin >= span.end) {
      throw AlignmentError("empty aspect span [" + std::to_string(span.begin) + "," +
                           std::to_string(span.end) + ")");
    }
    bool first = true;
    bool snapped = false;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      if (tokens[i].begin < span.end && tokens[i].end > span.begin) {
        if (tags[i] != kTagO) {
          throw DataError("aspect spans share token '" + tokens[i].text + "'");
        }
        if (tokens[i].begin < span.begin || tokens[i].end > span.end) snapped = true;
        tags[i] = first ? kTagB : kTagI;
        first = false;
      }
    }
    if (first) {
      throw AlignmentError("aspect span [" + std::to_string(span.begin) + "," +
                           std::to_string(span.end) + ") covers no token");
    }
    if (snapped) {
      log_warning("aspect span [" + std::to_string(span.begin) + "," + std::to_string(span.end) +
                  ") cuts through a token; widened to token boundaries");
    }
  }
  return tags;
}

std::vector<TokenSpan> bio_token_spans(std::span<const int> tags) {
  std::vector<TokenSpan> out;
  bool open = false;
  for (std::size_t i = 0; i < tags.size(); ++i) {
    const int t = tags[i];
    if (t == kTagB || (t == kTagI && !open)) {
      out.push_back({i, i});
      open = true;
    } else if (t == kTagI) {
      out.back().last = i;
    } else {
      open = false;
    }
  }
  return out;
}

std::vector<CharSpan> bio_decode(std::span<const int> tags, std::span<const Token> tokens) {
  if (tags.size() != tokens.size()) {
    throw DimensionError("bio_decode: " + std::to_string(tags.size()) + " tags for " +
                         std::to_string(tokens.size()) + " tokens");
  }
  std::vector<CharSpan> out;
  for (const auto& s : bio_token_spans(tags)) out.push_back({tokens[s.first].begin, tokens[s.last].end});
  return out;
}

AeExample make_ae_example(std::string id, std::string text, std::vector<CharSpan> aspects) {
  AeExample ex;
  ex.id = std::move(id);
  ex.text = std::move(text);
  ex.tokens = tokenize(ex.text);
  std::sort(aspects.begin(), aspects.end());
  ex.aspects = std::move(aspects);
  ex.tags = bio_encode(ex.tokens, ex.aspects);
  return ex;
}

// ---------------------------------------------------------------------------
// XML

namespace {

struct RawAspect {
  std::string term;
  std::string polarity;
  std::size_t from = 0;
  std::size_t to = 0;
  bool null_target = false;
};

struct RawSentence {
  std::string id;
  std::string text;
  std::vector<RawAspect> aspects;
};

// Byte offset of code point `index` in UTF-8 `text`; text.size() past the end.
std::size_t utf8_offset(std::string_view text, std::size_t index) {
  std::size_t cp = 0;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if ((static_cast<unsigned char>(text[i]) & 0xC0) == 0x80) continue;
    if (cp == index) return i;
    ++cp;
  }
  if (cp == index) return text.size();
  return std::string::npos;
}

std::size_t to_size(const std::string& s, const std::string& what, const std::string& sentence_id) {
  try {
    std::size_t pos = 0;
    const long long v = std::stoll(s, &pos);
    if (pos != s.size() || v < 0) throw std::invalid_argument(s);
    return static_cast<std::size_t>(v);
  } catch (const std::exception&) {
    throw IngestionError("sentence " + sentence_id + ": bad " + what + " offset '" + s + "'");
  }
}

// SAX state for both schemas: <sentence id> holds <text> and either
// <aspectTerm term ...> or <Opinion target ...> elements at any depth.
struct SaxState {
  XML_Parser parser = nullptr;
  std::vector<RawSentence> sentences;
  bool in_sentence = false;
  bool in_text = false;
  bool has_text = false;
  std::string error;
};

std::string attribute(const XML_Char** attrs, std::string_view name, std::string fallback = "") {
  for (std::size_t i = 0; attrs[i]; i += 2) {
    if (name == attrs[i]) return attrs[i + 1];
  }
  return fallback;
}

void on_start(void* data, const XML_Char* name, const XML_Char** attrs) {
  auto& st = *static_cast<SaxState*>(data);
  if (!st.error.empty()) return;
  const std::string_view tag = name;
  if (tag == "sentence") {
    st.sentences.push_back({attribute(attrs, "id"), "", {}});
    st.in_sentence = true;
    st.has_text = false;
  } else if (!st.in_sentence) {
    return;
  } else if (tag == "text") {
    st.in_text = true;
    st.has_text = true;
  } else if (tag == "aspectTerm" || tag == "Opinion") {
    auto& s = st.sentences.back();
    RawAspect a;
    a.term = attribute(attrs, tag == "aspectTerm" ? "term" : "target");
    a.polarity = attribute(attrs, "polarity");
    a.null_target = a.term == "NULL" || a.term.empty();
    try {
      a.from = to_size(attribute(attrs, "from", "0"), "from", s.id);
      a.to = to_size(attribute(attrs, "to", "0"), "to", s.id);
    } catch (const IngestionError& e) {
      st.error = e.what();
      XML_StopParser(st.parser, XML_FALSE);
      return;
    }
    s.aspects.push_back(std::move(a));
  }
}

void on_end(void* data, const XML_Char* name) {
  auto& st = *static_cast<SaxState*>(data);
  if (!st.error.empty()) return;
  const std::string_view tag = name;
  if (tag == "text") {
    st.in_text = false;
  } else if (tag == "sentence" && st.in_sentence) {
    st.in_sentence = false;
    if (!st.has_text) {
      st.error = "sentence " + st.sentences.back().id + " has no <text>";
      XML_StopParser(st.parser, XML_FALSE);
    }
  }
}

void on_chars(void* data, const XML_Char* s, int len) {
  auto& st = *static_cast<SaxState*>(data);
  if (st.in_sentence && st.in_text) st.sentences.back().text.append(s, static_cast<std::size_t>(len));
}

std::vector<RawSentence> read_sentences(std::string_view xml, std::string_view source) {
  std::unique_ptr<std::remove_pointer_t<XML_Parser>, decltype(&XML_ParserFree)> parser(
      XML_ParserCreate("UTF-8"), &XML_ParserFree);
  if (!parser) throw std::bad_alloc();
  SaxState st;
  st.parser = parser.get();
  XML_SetUserData(parser.get(), &st);
  XML_SetElementHandler(parser.get(), on_start, on_end);
  XML_SetCharacterDataHandler(parser.get(), on_chars);
  const auto status = XML_Parse(parser.get(), xml.data(), static_cast<int>(xml.size()), XML_TRUE);
  if (!st.error.empty()) throw IngestionError(std::string(source) + ": " + st.error);
  if (status != XML_STATUS_OK) {
    throw IngestionError(std::string(source) + ": malformed XML: " +
                             XML_ErrorString(XML_GetErrorCode(parser.get())),
                         XML_GetCurrentLineNumber(parser.get()));
  }
  return std::move(st.sentences);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

CharSpan to_byte_span(const RawSentence& s, const RawAspect& a) {
  const std::size_t b = utf8_offset(s.text, a.from);
  const std::size_t e = utf8_offset(s.text, a.to);
  if (b == std::string::npos || e == std::string::npos || b >= e) {
    throw AlignmentError("sentence " + s.id + ": aspect '" + a.term + "' span [" +
                         std::to_string(a.from) + "," + std::to_string(a.to) +
                         ") lies outside the sentence");
  }
  return {b, e};
}

}  // namespace

std::vector<AeExample> parse_semeval_ae_xml(std::string_view xml, std::string_view source) {
  std::vector<AeExample> out;
  for (const auto& s : read_sentences(xml, source)) {
    std::vector<CharSpan> spans;
    for (const auto& a : s.aspects) {
      if (a.null_target) continue;
      const CharSpan span = to_byte_span(s, a);
      if (std::find(spans.begin(), spans.end(), span) == spans.end()) spans.push_back(span);
    }
    std::sort(spans.begin(), spans.end());
    // Tagging needs disjoint spans; keep the earliest of any overlapping group.
    std::vector<CharSpan> taggable;
    for (const auto& sp : spans) {
      if (!taggable.empty() && sp.begin < taggable.back().end) {
        log_warning("sentence " + s.id + ": overlapping aspect span [" + std::to_string(sp.begin) +
                    "," + std::to_string(sp.end) + ") not tagged");
        continue;
      }
      taggable.push_back(sp);
    }
    AeExample ex;
    ex.id = s.id;
    ex.text = s.text;
    ex.tokens = tokenize(ex.text);
    ex.tags = bio_encode(ex.tokens, taggable);
    ex.aspects = std::move(spans);
    out.push_back(std::move(ex));
  }
  return out;
}

std::vector<AeExample> parse_semeval_ae(const std::filesystem::path& path) {
  return parse_semeval_ae_xml(read_file(path), path.string());
}

std::vector<AscExample> parse_semeval_asc_xml(std::string_view xml, std::string_view source) {
  std::vector<AscExample> out;
  for (const auto& s : read_sentences(xml, source)) {
    std::vector<std::string> words;
    for (const auto& t : tokenize(s.text)) words.push_back(t.text);
    for (const auto& a : s.aspects) {
      if (a.null_target) continue;
      if (a.polarity == "conflict") continue;
      int polarity = 0;
      try {
        polarity = parse_polarity(a.polarity);
      } catch (const DataError&) {
        throw IngestionError(std::string(source) + ": sentence " + s.id + ": unknown polarity '" +
                             a.polarity + "'");
      }
      AscExample ex;
      ex.id = s.id;
      ex.text = s.text;
      ex.sentence_tokens = words;
      ex.aspect = a.term;
      for (const auto& t : tokenize(a.term)) ex.aspect_tokens.push_back(t.text);
      ex.polarity = polarity;
      out.push_back(std::move(ex));
    }
  }
  return out;
}

std::vector<AscExample> parse_semeval_asc(const std::filesystem::path& path) {
  return parse_semeval_asc_xml(read_file(path), path.string());
}

// ---------------------------------------------------------------------------

EncodedExample encode_ae(const AeExample& ex, const Vocabulary& vocab, const EncoderConfig& config) {
  EncodedExample out;
  out.seq = encode_sequence(std::span<const Token>(ex.tokens), vocab, config);
  out.target.tags.assign(ex.tags.begin(), ex.tags.begin() + static_cast<std::ptrdiff_t>(out.seq.tokens.size()));
  if (out.seq.truncated) {
    log_warning("sentence " + ex.id + " truncated to " + std::to_string(out.seq.tokens.size()) + " tokens");
  }
  return out;
}

EncodedExample encode_asc(const AscExample& ex, const Vocabulary& vocab, const EncoderConfig& config,
                          bool single_segment) {
  EncodedExample out;
  if (single_segment) {
    std::vector<std::string> joined = ex.sentence_tokens;
    joined.insert(joined.end(), ex.aspect_tokens.begin(), ex.aspect_tokens.end());
    out.seq = encode_sequence(std::span<const std::string>(joined), vocab, config);
  } else {
    out.seq = encode_pair(ex.sentence_tokens, ex.aspect_tokens, vocab, config);
  }
  if (out.seq.truncated) log_warning("sentence " + ex.id + " truncated");
  out.target.label = ex.polarity;
  return out;
}

BatchIterator::BatchIterator(std::span<const EncodedExample> examples, std::size_t batch_size,
                             std::uint64_t seed, std::uint64_t epoch, int pad_id)
    : examples_(examples), batch_size_(batch_size), pad_id_(pad_id), order_(examples.size()) {
  if (batch_size == 0) throw ConfigError("batch_size must be at least 1");
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch), static_cast<std::uint32_t>(epoch >> 32)};
  std::mt19937_64 rng(seq);
  std::shuffle(order_.begin(), order_.end(), rng);
}

std::size_t BatchIterator::num_batches() const {
  return (order_.size() + batch_size_ - 1) / batch_size_;
}

Batch BatchIterator::next() {
  if (!has_next()) throw ContractError("BatchIterator exhausted");
  Batch batch;
  const std::size_t end = std::min(order_.size(), cursor_ + batch_size_);
  for (std::size_t i = cursor_; i < end; ++i) {
    batch.indices.push_back(order_[i]);
    batch.max_length = std::max(batch.max_length, examples_[order_[i]].seq.length());
  }
  for (std::size_t idx : batch.indices) {
    batch.sequences.push_back(pad_sequence(examples_[idx].seq, batch.max_length, pad_id_));
    batch.targets.push_back(examples_[idx].target);
  }
  cursor_ = end;
  return batch;
}

std::vector<Batch> make_batches(std::span<const EncodedExample> examples, std::size_t batch_size,
                                std::uint64_t seed, std::uint64_t epoch, int pad_id) {
  BatchIterator it(examples, batch_size, seed, epoch, pad_id);
  std::vector<Batch> out;
  while (it.has_next()) out.push_back(it.next());
  return out;
}

// ---------------------------------------------------------------------------

namespace {

std::vector<json> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<json> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(json::parse(line));
    } catch (const json::exception& e) {
      throw IngestionError(path.string() + ": " + e.what(), lineno);
    }
  }
  return out;
}

void write_lines(const std::vector<json>& rows, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& r : rows) out << r.dump() << '\n';
}

}  // namespace

void save_ae_jsonl(std::span<const AeExample> examples, const std::filesystem::path& path) {
  std::vector<json> rows;
  for (const auto& ex : examples) {
    json spans = json::array();
    for (const auto& s : ex.aspects) spans.push_back({s.begin, s.end});
    json tags = json::array();
    for (int t : ex.tags) tags.push_back(std::string(1, "BIO"[t]));
    rows.push_back({{"id", ex.id}, {"text", ex.text}, {"spans", spans}, {"tags", tags}});
  }
  write_lines(rows, path);
}

std::vector<AeExample> load_ae_jsonl(const std::filesystem::path& path) {
  std::vector<AeExample> out;
  for (const auto& row : read_jsonl(path)) {
    try {
      std::vector<CharSpan> spans;
      for (const auto& s : row.at("spans")) spans.push_back({s.at(0).get<std::size_t>(), s.at(1).get<std::size_t>()});
      for (const auto& s : spans) {
        if (s.end > row.at("text").get<std::string>().size()) {
          throw AlignmentError("record " + row.value("id", "?") + ": span [" + std::to_string(s.begin) +
                               "," + std::to_string(s.end) + ") outside text");
        }
      }
      out.push_back(make_ae_example(row.value("id", ""), row.at("text").get<std::string>(), spans));
    } catch (const json::exception& e) {
      throw IngestionError(path.string() + ": bad AE record: " + e.what());
    }
  }
  return out;
}

void save_asc_jsonl(std::span<const AscExample> examples, const std::filesystem::path& path) {
  std::vector<json> rows;
  for (const auto& ex : examples) {
    rows.push_back({{"id", ex.id},
                    {"text", ex.text},
                    {"aspect", ex.aspect},
                    {"polarity", std::string(polarity_name(ex.polarity))}});
  }
  write_lines(rows, path);
}

std::vector<AscExample> load_asc_jsonl(const std::filesystem::path& path) {
  std::vector<AscExample> out;
  for (const auto& row : read_jsonl(path)) {
    try {
      AscExample ex;
      ex.id = row.value("id", "");
      ex.text = row.at("text").get<std::string>();
      ex.aspect = row.at("aspect").get<std::string>();
      ex.polarity = parse_polarity(row.at("polarity").get<std::string>());
      for (const auto& t : tokenize(ex.text)) ex.sentence_tokens.push_back(t.text);
      for (const auto& t : tokenize(ex.aspect)) ex.aspect_tokens.push_back(t.text);
      out.push_back(std::move(ex));
    } catch (const json::exception& e) {
      throw IngestionError(path.string() + ": bad ASC record: " + e.what());
    }
  }
  return out;
}

}  // namespace absa
