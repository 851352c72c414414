#include "dlfccm/pipeline.hpp"

#include <sstream>

namespace dlfccm {

std::vector<EmbeddingRow> read_factor_embeddings(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(path.string() + ": cannot open");
  std::vector<EmbeddingRow> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream fields(line);
    EmbeddingRow r;
    std::string label, values;
    if (!std::getline(fields, r.pair_id, '\t') || !std::getline(fields, r.case_id, '\t') ||
        !std::getline(fields, r.role, '\t') || !std::getline(fields, label, '\t') ||
        !std::getline(fields, r.factor, '\t') || !std::getline(fields, values))
      throw corpus::DataError(path.string(), lineno, "expected 6 tab-separated fields");
    r.label = std::stoi(label);
    std::istringstream vs(values);
    std::string tok;
    while (vs >> tok) r.values.push_back(std::strtof(tok.c_str(), nullptr));
    rows.push_back(std::move(r));
  }
  return rows;
}

void write_fusion_weights(const WeightSummary& s, const std::filesystem::path& records_path,
                          const std::filesystem::path& summary_path) {
  std::ofstream rec(records_path, std::ios::binary | std::ios::trunc);
  if (!rec) throw std::runtime_error(records_path.string() + ": cannot open for writing");
  rec << "# pair_id\tH_0\tH_1\tH_2\tH_3\tw_0\tw_1\tw_2\tw_3\targmax\tlabel\n";
  char buf[32];
  for (const auto& r : s.records) {
    rec << r.pair_id;
    for (double h : r.entropy) {
      std::snprintf(buf, sizeof(buf), "%.9g", h);
      rec << '\t' << buf;
    }
    for (double w : r.weight) {
      std::snprintf(buf, sizeof(buf), "%.9g", w);
      rec << '\t' << buf;
    }
    rec << '\t' << r.prediction << '\t' << r.label << '\n';
  }
  if (!rec) throw std::runtime_error(records_path.string() + ": write failed");

  std::ofstream sum(summary_path, std::ios::binary | std::ios::trunc);
  if (!sum) throw std::runtime_error(summary_path.string() + ": cannot open for writing");
  sum << "# head\tmin\tq1\tmedian\tq3\tmax\n";
  for (int k = 0; k < kNumHeads; ++k) {
    const auto& f = s.per_head[static_cast<std::size_t>(k)];
    sum << kFactorNames[k];
    for (double v : {f.min, f.q1, f.median, f.q3, f.max}) {
      std::snprintf(buf, sizeof(buf), "%.9g", v);
      sum << '\t' << buf;
    }
    sum << '\n';
  }
  if (!sum) throw std::runtime_error(summary_path.string() + ": write failed");
}

std::vector<corpus::MatchExample> select_analysis_pairs(std::span<const corpus::MatchExample> pairs,
                                                        std::size_t per_class, std::uint64_t seed) {
  std::vector<std::size_t> matched, mismatched;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (pairs[i].label == kNumRelevance - 1) matched.push_back(i);
    if (pairs[i].label == 0) mismatched.push_back(i);
  }
  Rng rng(seed);
  rng.shuffle(matched);
  rng.shuffle(mismatched);
  std::vector<corpus::MatchExample> out;
  for (std::size_t i = 0; i < std::min(per_class, matched.size()); ++i) out.push_back(pairs[matched[i]]);
  for (std::size_t i = 0; i < std::min(per_class, mismatched.size()); ++i) out.push_back(pairs[mismatched[i]]);
  return out;
}

}  // namespace dlfccm
