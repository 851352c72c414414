#include "dlfccm/corpus.hpp"

#include "dlfccm/core.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

namespace dlfccm::corpus {

namespace {

std::vector<std::string> split_lower(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    const auto uc = static_cast<unsigned char>(ch);
    if (std::isspace(uc)) {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(static_cast<char>(uc < 128 ? std::tolower(uc) : uc));
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

std::string join(const std::vector<std::string>& words) {
  std::string out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i > 0) out.push_back(' ');
    out += words[i];
  }
  return out;
}

}  // namespace

Vocab::Vocab() {
  add("[PAD]");
  add("[CLS]");
  add("[UNK]");
}

Vocab Vocab::from_tokens(std::vector<std::string> tokens) {
  if (tokens.size() < kNumReserved || tokens[kPad] != "[PAD]" || tokens[kCls] != "[CLS]" ||
      tokens[kUnk] != "[UNK]")
    throw std::invalid_argument("vocab: reserved tokens missing or remapped");
  Vocab v;
  for (std::size_t i = kNumReserved; i < tokens.size(); ++i) v.add(std::move(tokens[i]));
  return v;
}

void Vocab::add(std::string token) {
  if (ids_.contains(token)) throw std::invalid_argument("vocab: duplicate token '" + token + "'");
  ids_.emplace(token, static_cast<int>(tokens_.size()));
  tokens_.push_back(std::move(token));
}

int Vocab::lookup(std::string_view token) const {
  auto it = ids_.find(std::string(token));
  return it == ids_.end() ? kUnk : it->second;
}

Vocab build_vocab(std::span<const std::string> texts, std::size_t max_size) {
  if (max_size < kNumReserved) throw std::invalid_argument("build_vocab: max_size must be >= 3");
  if (texts.empty()) throw std::invalid_argument("empty corpus");
  std::map<std::string, std::size_t> counts;
  for (const auto& t : texts)
    for (auto& w : split_lower(t)) ++counts[w];
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> tokens{"[PAD]", "[CLS]", "[UNK]"};
  for (auto& [w, c] : ranked) {
    if (tokens.size() >= max_size) break;
    if (w == "[PAD]" || w == "[CLS]" || w == "[UNK]") continue;
    tokens.push_back(w);
  }
  return Vocab::from_tokens(std::move(tokens));
}

std::vector<int> tokenize(std::string_view text, const Vocab& vocab, std::size_t max_len) {
  if (max_len < 2) throw std::invalid_argument("tokenize: max_len must be >= 2");
  std::vector<int> ids{kCls};
  for (const auto& w : split_lower(text)) {
    if (ids.size() >= max_len) break;
    ids.push_back(vocab.lookup(w));
  }
  return ids;
}

void GenSpec::validate() const {
  if (n_cases < 1) throw std::invalid_argument("GenSpec: n_cases must be >= 1");
  if (n_articles < 2 || n_charges < 2 || n_terms < 2)
    throw std::invalid_argument("GenSpec: class counts must be >= 2");
  if (seq_len < 3) throw std::invalid_argument("GenSpec: seq_len must be >= 3");
  if (!(overlap_rate >= 0.0 && overlap_rate <= 1.0))
    throw std::invalid_argument("GenSpec: overlap_rate must be in [0,1]");
  if (!(label_correlation >= 0.0 && label_correlation <= 1.0))
    throw std::invalid_argument("GenSpec: label_correlation must be in [0,1]");
  const int pooled = (n_articles + n_charges + n_terms) * kPoolSize;
  if (vocab_size < pooled + seq_len)
    throw std::invalid_argument("GenSpec: vocab_size " + std::to_string(vocab_size) +
                                " too small for disjoint keyword pools (need >= " +
                                std::to_string(pooled + seq_len) + ")");
}

KeywordPools make_pools(const GenSpec& spec) {
  spec.validate();
  std::vector<std::string> words(static_cast<std::size_t>(spec.vocab_size));
  for (int i = 0; i < spec.vocab_size; ++i) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "w%04d", i);
    words[static_cast<std::size_t>(i)] = buf;
  }
  Rng rng(derive_seed(spec.seed, "corpus.pools"));
  rng.shuffle(words);
  KeywordPools pools;
  std::size_t next = 0;
  const ClassCounts classes = spec.classes();
  for (int k = 0; k < 3; ++k) {
    pools.keywords[k].resize(static_cast<std::size_t>(classes[k]));
    for (auto& pool : pools.keywords[k])
      for (int j = 0; j < kPoolSize; ++j) pool.push_back(words[next++]);
  }
  pools.filler.assign(words.begin() + static_cast<std::ptrdiff_t>(next), words.end());
  return pools;
}

std::string render_case(const GenSpec& spec, const KeywordPools& pools, const Judgment& labels,
                        std::uint64_t case_seed) {
  Rng rng(case_seed);
  std::vector<std::string> words;
  words.reserve(static_cast<std::size_t>(spec.seq_len));
  const int base = spec.seq_len / 3;
  for (int s = 0; s < 3; ++s) {
    const int len = s < 2 ? base : spec.seq_len - 2 * base;
    // The tail of a segment is shared with the next factor's keywords.
    const int n_overlap = s < 2 ? static_cast<int>(std::lround(spec.overlap_rate * len)) : 0;
    const auto& own = pools.keywords[s][static_cast<std::size_t>(labels[s])];
    for (int i = 0; i < len; ++i) {
      if (i >= len - n_overlap) {
        const auto& next = pools.keywords[s + 1][static_cast<std::size_t>(labels[s + 1])];
        words.push_back(next[rng.index(next.size())]);
      } else if (rng.bernoulli(kKeywordDensity)) {
        words.push_back(own[rng.index(own.size())]);
      } else {
        words.push_back(pools.filler[rng.index(pools.filler.size())]);
      }
    }
  }
  return join(words);
}

namespace {

Judgment sample_judgment(const GenSpec& spec, Rng& rng) {
  Judgment j{};
  j[0] = static_cast<int>(rng.index(static_cast<std::size_t>(spec.n_articles)));
  j[1] = rng.bernoulli(spec.label_correlation)
             ? j[0] % spec.n_charges
             : static_cast<int>(rng.index(static_cast<std::size_t>(spec.n_charges)));
  j[2] = rng.bernoulli(spec.label_correlation)
             ? j[1] % spec.n_terms
             : static_cast<int>(rng.index(static_cast<std::size_t>(spec.n_terms)));
  return j;
}

std::vector<LjpRecord> gen_cases(const GenSpec& spec, const KeywordPools& pools, std::string_view stream,
                                 const std::string& prefix) {
  Rng label_rng(derive_seed(spec.seed, std::string(stream) + ".labels"));
  const std::uint64_t text_root = derive_seed(spec.seed, std::string(stream) + ".text");
  std::vector<LjpRecord> out;
  out.reserve(static_cast<std::size_t>(spec.n_cases));
  for (int i = 0; i < spec.n_cases; ++i) {
    LjpRecord r;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%s%05d", prefix.c_str(), i);
    r.id = buf;
    r.labels = sample_judgment(spec, label_rng);
    r.text = render_case(spec, pools, r.labels, mix64(text_root + static_cast<std::uint64_t>(i)));
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace

std::vector<LjpRecord> gen_ljp_dataset(const GenSpec& spec) {
  const KeywordPools pools = make_pools(spec);
  return gen_cases(spec, pools, "corpus.ljp", "c");
}

int agreements(const Judgment& a, const Judgment& b) {
  return (a[0] == b[0]) + (a[1] == b[1]) + (a[2] == b[2]);
}

std::vector<MatchRecord> gen_match_dataset(const GenSpec& spec, int n_pairs) {
  if (n_pairs < kNumRelevance) throw std::invalid_argument("gen_match_dataset: n_pairs must be >= 4");
  const KeywordPools pools = make_pools(spec);
  const auto cases = gen_cases(spec, pools, "corpus.match", "m");
  if (cases.size() < 2) throw std::invalid_argument("gen_match_dataset: need at least 2 cases");
  Rng rng(derive_seed(spec.seed, "corpus.match.pairs"));

  std::vector<int> wanted;
  for (int i = 0; i < n_pairs; ++i) wanted.push_back(i % kNumRelevance);
  rng.shuffle(wanted);

  constexpr int kMaxAttempts = 1'000'000;
  std::vector<MatchRecord> out;
  out.reserve(wanted.size());
  for (std::size_t p = 0; p < wanted.size(); ++p) {
    const int label = wanted[p];
    int attempts = 0;
    while (true) {
      if (++attempts > kMaxAttempts)
        throw std::runtime_error("gen_match_dataset: cannot find a pair with label " + std::to_string(label));
      const std::size_t i = rng.index(cases.size());
      const std::size_t j = rng.index(cases.size());
      if (i == j || agreements(cases[i].labels, cases[j].labels) != label) continue;
      MatchRecord r;
      char buf[32];
      std::snprintf(buf, sizeof(buf), "p%05zu", p);
      r.id = buf;
      r.source_id = cases[i].id;
      r.target_id = cases[j].id;
      r.source_text = cases[i].text;
      r.target_text = cases[j].text;
      r.label = label;
      r.source_labels = cases[i].labels;
      r.target_labels = cases[j].labels;
      out.push_back(std::move(r));
      break;
    }
  }
  return out;
}

DataError::DataError(const std::string& file, std::size_t line, const std::string& what)
    : std::runtime_error(file + ": line " + std::to_string(line) + ": " + what), line_(line) {}

namespace {

using nlohmann::json;

Judgment judgment_from(const json& j) {
  if (!j.is_array() || j.size() != 3) throw std::invalid_argument("expected 3 latent labels");
  return {j[0].get<int>(), j[1].get<int>(), j[2].get<int>()};
}

template <typename Record, typename Parse>
std::vector<Record> load_lines(const std::filesystem::path& path, Parse parse) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(path.string() + ": cannot open");
  std::vector<Record> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(parse(json::parse(line)));
    } catch (const std::exception& e) {
      throw DataError(path.string(), lineno, std::string("malformed record: ") + e.what());
    }
  }
  return out;
}

template <typename Record, typename Dump>
void save_lines(const std::filesystem::path& path, std::span<const Record> records, Dump dump) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error(path.string() + ": cannot open for writing");
  for (const auto& r : records) out << dump(r).dump() << '\n';
  if (!out) throw std::runtime_error(path.string() + ": write failed");
}

}  // namespace

void save_ljp(const std::filesystem::path& path, std::span<const LjpRecord> records) {
  save_lines<LjpRecord>(path, records, [](const LjpRecord& r) {
    return json{{"id", r.id}, {"text", r.text}, {"article", r.labels[0]}, {"charge", r.labels[1]},
                {"term", r.labels[2]}};
  });
}

std::vector<LjpRecord> load_ljp(const std::filesystem::path& path) {
  return load_lines<LjpRecord>(path, [](const json& j) {
    LjpRecord r;
    r.id = j.at("id").get<std::string>();
    r.text = j.at("text").get<std::string>();
    r.labels = {j.at("article").get<int>(), j.at("charge").get<int>(), j.at("term").get<int>()};
    return r;
  });
}

void save_match(const std::filesystem::path& path, std::span<const MatchRecord> records) {
  save_lines<MatchRecord>(path, records, [](const MatchRecord& r) {
    return json{{"id", r.id},
                {"source_id", r.source_id},
                {"target_id", r.target_id},
                {"source_text", r.source_text},
                {"target_text", r.target_text},
                {"label", r.label},
                {"source_labels", r.source_labels},
                {"target_labels", r.target_labels}};
  });
}

std::vector<MatchRecord> load_match(const std::filesystem::path& path) {
  return load_lines<MatchRecord>(path, [](const json& j) {
    MatchRecord r;
    r.id = j.value("id", std::string());
    r.source_id = j.at("source_id").get<std::string>();
    r.target_id = j.at("target_id").get<std::string>();
    r.source_text = j.at("source_text").get<std::string>();
    r.target_text = j.at("target_text").get<std::string>();
    r.label = j.at("label").get<int>();
    if (r.label < 0 || r.label >= kNumRelevance) throw std::invalid_argument("label out of range");
    if (j.contains("source_labels")) r.source_labels = judgment_from(j.at("source_labels"));
    if (j.contains("target_labels")) r.target_labels = judgment_from(j.at("target_labels"));
    return r;
  });
}

std::vector<LjpExample> to_examples(std::span<const LjpRecord> records, const Vocab& vocab,
                                    std::size_t max_len) {
  std::vector<LjpExample> out;
  out.reserve(records.size());
  for (const auto& r : records)
    out.push_back({Case{r.id, tokenize(r.text, vocab, max_len), r.text}, r.labels});
  return out;
}

std::vector<MatchExample> to_examples(std::span<const MatchRecord> records, const Vocab& vocab,
                                      std::size_t max_len) {
  std::vector<MatchExample> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    out.push_back({r.id, Case{r.source_id, tokenize(r.source_text, vocab, max_len), r.source_text},
                   Case{r.target_id, tokenize(r.target_text, vocab, max_len), r.target_text}, r.label});
  }
  return out;
}

void validate_labels(std::span<const LjpRecord> records, const ClassCounts& classes) {
  static constexpr const char* kNames[] = {"article", "charge", "term"};
  for (const auto& r : records)
    for (int k = 0; k < 3; ++k)
      if (r.labels[k] < 0 || r.labels[k] >= classes[k])
        throw std::invalid_argument("case " + r.id + ": " + kNames[k] + " label " + std::to_string(r.labels[k]) +
                                    " out of range [0, " + std::to_string(classes[k]) + ")");
}

Split split_indices(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  Rng rng(seed);
  rng.shuffle(idx);
  const auto n_train = static_cast<std::size_t>(std::llround(0.8 * static_cast<double>(n)));
  const auto n_valid = static_cast<std::size_t>(std::llround(0.1 * static_cast<double>(n)));
  Split s;
  s.train.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.valid.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_train),
                 idx.begin() + static_cast<std::ptrdiff_t>(std::min(n, n_train + n_valid)));
  s.test.assign(idx.begin() + static_cast<std::ptrdiff_t>(std::min(n, n_train + n_valid)), idx.end());
  return s;
}

}  // namespace dlfccm::corpus
