#include "dlfccm/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <fstream>
#include <functional>
#include <map>

namespace dlfccm {

namespace pt = boost::property_tree;

void RunConfig::reseed(std::uint64_t root) {
  seed = root;
  corpus.seed = derive_seed(root, "corpus");
  encoder.seed = derive_seed(root, "encoder");
  pretrain.seed = derive_seed(root, "pretrain");
  stage2.seed = derive_seed(root, "stage2");
}

void RunConfig::validate() const {
  corpus.validate();
  encoder.validate();
  pretrain.validate();
  stage2.validate();
  if (n_pairs < kNumRelevance) throw ConfigError("corpus.n_pairs must be >= 4");
  if (corpus.seq_len + 1 > encoder.max_len)
    throw ConfigError("encoder.max_len " + std::to_string(encoder.max_len) + " is shorter than corpus.seq_len + 1");
}

Stage2Config RunConfig::stage2_config() const {
  Stage2Config c = stage2;
  c.flags = AblationFlags::from(ablation);
  return c;
}

namespace {

template <typename T>
T convert(const std::string& section, const std::string& key, const std::string& raw) {
  try {
    std::size_t used = 0;
    T v{};
    if constexpr (std::is_same_v<T, double>) v = std::stod(raw, &used);
    else if constexpr (std::is_same_v<T, int>) v = std::stoi(raw, &used);
    else v = static_cast<T>(std::stoull(raw, &used));
    if (used != raw.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("[" + section + "] " + key + ": cannot parse '" + raw + "'");
  }
}

}  // namespace

RunConfig parse_config(std::istream& in, RunConfig base) {
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError("config line " + std::to_string(e.line()) + ": " + e.message());
  }

  using Table = std::map<std::string, std::function<void(RunConfig&, const std::string&)>>;
  auto num = [](auto getter, const char* section, const char* key) {
    return [getter, section, key](RunConfig& c, const std::string& raw) {
      auto& ref = getter(c);
      ref = convert<std::remove_reference_t<decltype(ref)>>(section, key, raw);
    };
  };
  const std::map<std::string, Table> sections{
      {"run",
       {{"seed", [](RunConfig& c, const std::string& raw) { c.reseed(convert<std::uint64_t>("run", "seed", raw)); }}}},
      {"corpus",
       {{"n_cases", num([](RunConfig& c) -> int& { return c.corpus.n_cases; }, "corpus", "n_cases")},
        {"n_articles", num([](RunConfig& c) -> int& { return c.corpus.n_articles; }, "corpus", "n_articles")},
        {"n_charges", num([](RunConfig& c) -> int& { return c.corpus.n_charges; }, "corpus", "n_charges")},
        {"n_terms", num([](RunConfig& c) -> int& { return c.corpus.n_terms; }, "corpus", "n_terms")},
        {"vocab_size", num([](RunConfig& c) -> int& { return c.corpus.vocab_size; }, "corpus", "vocab_size")},
        {"seq_len", num([](RunConfig& c) -> int& { return c.corpus.seq_len; }, "corpus", "seq_len")},
        {"overlap_rate", num([](RunConfig& c) -> double& { return c.corpus.overlap_rate; }, "corpus", "overlap_rate")},
        {"label_correlation",
         num([](RunConfig& c) -> double& { return c.corpus.label_correlation; }, "corpus", "label_correlation")},
        {"n_pairs", num([](RunConfig& c) -> int& { return c.n_pairs; }, "corpus", "n_pairs")}}},
      {"encoder",
       {{"vocab_size", num([](RunConfig& c) -> int& { return c.encoder.vocab_size; }, "encoder", "vocab_size")},
        {"d_model", num([](RunConfig& c) -> int& { return c.encoder.d_model; }, "encoder", "d_model")},
        {"n_shared_layers",
         num([](RunConfig& c) -> int& { return c.encoder.n_shared_layers; }, "encoder", "n_shared_layers")},
        {"n_heads", num([](RunConfig& c) -> int& { return c.encoder.n_heads; }, "encoder", "n_heads")},
        {"ffn_dim", num([](RunConfig& c) -> int& { return c.encoder.ffn_dim; }, "encoder", "ffn_dim")},
        {"max_len", num([](RunConfig& c) -> int& { return c.encoder.max_len; }, "encoder", "max_len")},
        {"dropout_rate", num([](RunConfig& c) -> double& { return c.encoder.dropout_rate; }, "encoder", "dropout_rate")}}},
      {"pretrain",
       {{"epochs", num([](RunConfig& c) -> int& { return c.pretrain.epochs; }, "pretrain", "epochs")},
        {"batch_size", num([](RunConfig& c) -> int& { return c.pretrain.batch_size; }, "pretrain", "batch_size")},
        {"learning_rate",
         num([](RunConfig& c) -> double& { return c.pretrain.learning_rate; }, "pretrain", "learning_rate")}}},
      {"stage2",
       {{"epochs", num([](RunConfig& c) -> int& { return c.stage2.epochs; }, "stage2", "epochs")},
        {"batch_size", num([](RunConfig& c) -> int& { return c.stage2.batch_size; }, "stage2", "batch_size")},
        {"learning_rate", num([](RunConfig& c) -> double& { return c.stage2.learning_rate; }, "stage2", "learning_rate")},
        {"lambda1", num([](RunConfig& c) -> double& { return c.stage2.lambda1; }, "stage2", "lambda1")},
        {"lambda2", num([](RunConfig& c) -> double& { return c.stage2.lambda2; }, "stage2", "lambda2")},
        {"ablation",
         [](RunConfig& c, const std::string& raw) {
           try {
             c.ablation = parse_ablation(raw);
           } catch (const std::invalid_argument& e) {
             throw ConfigError(std::string("[stage2] ablation: ") + e.what());
           }
         }}}},
      {"paths",
       {{"data_dir", [](RunConfig& c, const std::string& raw) { c.paths.data_dir = raw; }},
        {"checkpoint_dir", [](RunConfig& c, const std::string& raw) { c.paths.checkpoint_dir = raw; }},
        {"export_dir", [](RunConfig& c, const std::string& raw) { c.paths.export_dir = raw; }}}},
  };

  // The root seed goes first so it cannot clobber anything set later.
  if (auto run = tree.get_child_optional("run"))
    if (auto s = run->get_optional<std::string>("seed")) sections.at("run").at("seed")(base, *s);

  for (const auto& [name, section] : tree) {
    auto table = sections.find(name);
    if (table == sections.end()) {
      if (section.empty()) throw ConfigError("unexpected top-level key '" + name + "'");
      throw ConfigError("unknown config section [" + name + "]");
    }
    for (const auto& [key, value] : section) {
      auto setter = table->second.find(key);
      if (setter == table->second.end()) throw ConfigError("unknown key '" + key + "' in [" + name + "]");
      if (name == "run") continue;
      setter->second(base, value.get_value<std::string>());
    }
  }
  return base;
}

RunConfig load_config(const std::filesystem::path& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path.string() + ": cannot open config file");
  try {
    return parse_config(in, std::move(base));
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

nlohmann::json to_json(const corpus::GenSpec& s) {
  return {{"n_cases", s.n_cases},       {"n_articles", s.n_articles},
          {"n_charges", s.n_charges},   {"n_terms", s.n_terms},
          {"vocab_size", s.vocab_size}, {"seq_len", s.seq_len},
          {"overlap_rate", s.overlap_rate}, {"label_correlation", s.label_correlation},
          {"seed", s.seed}};
}

nlohmann::json to_json(const EncoderConfig& c) {
  return {{"vocab_size", c.vocab_size}, {"d_model", c.d_model}, {"n_shared_layers", c.n_shared_layers},
          {"n_heads", c.n_heads},       {"ffn_dim", c.ffn_dim}, {"max_len", c.max_len},
          {"dropout_rate", c.dropout_rate}, {"seed", c.seed}};
}

EncoderConfig encoder_config_from_json(const nlohmann::json& j) {
  EncoderConfig c;
  c.vocab_size = j.at("vocab_size").get<int>();
  c.d_model = j.at("d_model").get<int>();
  c.n_shared_layers = j.at("n_shared_layers").get<int>();
  c.n_heads = j.at("n_heads").get<int>();
  c.ffn_dim = j.at("ffn_dim").get<int>();
  c.max_len = j.at("max_len").get<int>();
  c.dropout_rate = j.at("dropout_rate").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

nlohmann::json to_json(const PretrainConfig& c) {
  return {{"epochs", c.epochs}, {"batch_size", c.batch_size}, {"learning_rate", c.learning_rate}, {"seed", c.seed}};
}

nlohmann::json to_json(const Stage2Config& c) {
  return {{"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"learning_rate", c.learning_rate},
          {"lambda1", c.lambda1},
          {"lambda2", c.lambda2},
          {"no_ex", c.flags.no_ex},
          {"no_sh", c.flags.no_sh},
          {"no_fusion", c.flags.no_fusion},
          {"no_pretrain", c.flags.no_pretrain},
          {"seed", c.seed}};
}

nlohmann::json to_json(const RunConfig& c) {
  return {{"seed", c.seed},
          {"corpus", to_json(c.corpus)},
          {"n_pairs", c.n_pairs},
          {"encoder", to_json(c.encoder)},
          {"pretrain", to_json(c.pretrain)},
          {"stage2", to_json(c.stage2_config())},
          {"ablation", ablation_name(c.ablation)},
          {"paths",
           {{"data_dir", c.paths.data_dir.string()},
            {"checkpoint_dir", c.paths.checkpoint_dir.string()},
            {"export_dir", c.paths.export_dir.string()}}}};
}

}  // namespace dlfccm
