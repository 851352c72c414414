#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace dlfccm::corpus {

inline constexpr int kPad = 0;
inline constexpr int kCls = 1;
inline constexpr int kUnk = 2;
inline constexpr int kNumReserved = 3;

/// Token <-> id map. Ids are contiguous from 0 with PAD/CLS/UNK reserved.
class Vocab {
 public:
  Vocab();

  /// Rebuilds from an ordered token list whose first three entries are the reserved tokens.
  static Vocab from_tokens(std::vector<std::string> tokens);

  int lookup(std::string_view token) const;
  const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  friend bool operator==(const Vocab& a, const Vocab& b) { return a.tokens_ == b.tokens_; }

 private:
  void add(std::string token);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
};

/// Keeps the most frequent lowercase whitespace tokens; frequency ties break lexicographically.
Vocab build_vocab(std::span<const std::string> texts, std::size_t max_size);

/// Lowercase, whitespace split, CLS prepended, truncated to max_len.
std::vector<int> tokenize(std::string_view text, const Vocab& vocab, std::size_t max_len);

struct Case {
  std::string id;
  std::vector<int> tokens;
  std::string raw_text;
};

/// Labels are (article, charge, term) class indices.
using Judgment = std::array<int, 3>;

struct LjpRecord {
  std::string id;
  std::string text;
  Judgment labels{};

  friend bool operator==(const LjpRecord&, const LjpRecord&) = default;
};

/// A matching pair as stored on disk. The latent judgments of both cases are kept
/// so the label can be recomputed.
struct MatchRecord {
  std::string id;
  std::string source_id;
  std::string target_id;
  std::string source_text;
  std::string target_text;
  int label = 0;
  Judgment source_labels{};
  Judgment target_labels{};

  friend bool operator==(const MatchRecord&, const MatchRecord&) = default;
};

struct LjpExample {
  Case case_;
  Judgment labels{};
};

struct MatchExample {
  std::string id;
  Case source;
  Case target;
  int label = 0;
};

struct ClassCounts {
  int articles = 8;
  int charges = 6;
  int terms = 4;

  int operator[](int k) const { return k == 0 ? articles : (k == 1 ? charges : terms); }
  friend bool operator==(const ClassCounts&, const ClassCounts&) = default;
};

struct GenSpec {
  int n_cases = 2000;
  int n_articles = 8;
  int n_charges = 6;
  int n_terms = 4;
  int vocab_size = 600;
  int seq_len = 30;
  double overlap_rate = 0.2;
  double label_correlation = 0.7;
  std::uint64_t seed = 7;

  ClassCounts classes() const { return {n_articles, n_charges, n_terms}; }
  void validate() const;
};

/// Keyword tokens drawn for each (factor type, class).
inline constexpr int kPoolSize = 6;
/// Probability that a non-overlap segment position carries a keyword rather than filler.
inline constexpr double kKeywordDensity = 0.5;

/// Word pools shared by every dataset generated from the same spec seed.
struct KeywordPools {
  std::array<std::vector<std::vector<std::string>>, 3> keywords;  // [factor][class] -> words
  std::vector<std::string> filler;
};

KeywordPools make_pools(const GenSpec& spec);

/// Text for one case with the given latent judgment.
std::string render_case(const GenSpec& spec, const KeywordPools& pools, const Judgment& labels,
                        std::uint64_t case_seed);

std::vector<LjpRecord> gen_ljp_dataset(const GenSpec& spec);
std::vector<MatchRecord> gen_match_dataset(const GenSpec& spec, int n_pairs);

/// Number of agreeing latent judgments, which is the matching label.
int agreements(const Judgment& a, const Judgment& b);

void save_ljp(const std::filesystem::path& path, std::span<const LjpRecord> records);
std::vector<LjpRecord> load_ljp(const std::filesystem::path& path);
void save_match(const std::filesystem::path& path, std::span<const MatchRecord> records);
std::vector<MatchRecord> load_match(const std::filesystem::path& path);

/// Raised for malformed dataset files; `line()` is 1-based.
class DataError : public std::runtime_error {
 public:
  DataError(const std::string& file, std::size_t line, const std::string& what);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

std::vector<LjpExample> to_examples(std::span<const LjpRecord> records, const Vocab& vocab,
                                    std::size_t max_len);
std::vector<MatchExample> to_examples(std::span<const MatchRecord> records, const Vocab& vocab,
                                      std::size_t max_len);

/// Throws if any label is outside its class count.
void validate_labels(std::span<const LjpRecord> records, const ClassCounts& classes);

/// Seeded 0.8/0.1/0.1 partition of [0, n).
struct Split {
  std::vector<std::size_t> train, valid, test;
};
Split split_indices(std::size_t n, std::uint64_t seed);

template <typename T>
std::vector<T> select(std::span<const T> items, std::span<const std::size_t> idx) {
  std::vector<T> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(items[i]);
  return out;
}

}  // namespace dlfccm::corpus
