#include "lgb/model.hpp"

#include <fstream>
#include <map>
#include <sstream>

#include "lgb/hashing.hpp"

namespace lgb {

using nlohmann::json;

json ModelConfig::to_json() const {
  return {
      {"text_dim", text_dim},
      {"text_mixing_layers", text_mixing_layers},
      {"text_attention", text_attention},
      {"max_len", max_len},
      {"limit_profile", limits.profile},
      {"limit_description", limits.description},
      {"limit_tweets", limits.tweets},
      {"gnn_variant", to_string(gnn_variant)},
      {"gnn_hidden", gnn_hidden},
      {"gnn_output", gnn_output},
      {"gnn_layers", gnn_layers},
      {"gin_epsilon", gin_epsilon},
      {"gat_negative_slope", gat_negative_slope},
      {"lm_head_hidden", lm_head_hidden},
      {"fusion_head_hidden", fusion_head_hidden},
      {"fusion", to_string(fusion)},
  };
}

ModelConfig ModelConfig::from_json(const json& j) {
  ModelConfig c;
  auto get = [&](const char* key, auto& dst) {
    if (auto it = j.find(key); it != j.end()) it->get_to(dst);
  };
  get("text_dim", c.text_dim);
  get("text_mixing_layers", c.text_mixing_layers);
  get("text_attention", c.text_attention);
  get("max_len", c.max_len);
  get("limit_profile", c.limits.profile);
  get("limit_description", c.limits.description);
  get("limit_tweets", c.limits.tweets);
  if (auto it = j.find("gnn_variant"); it != j.end()) c.gnn_variant = parse_gnn_variant(it->get<std::string>());
  get("gnn_hidden", c.gnn_hidden);
  get("gnn_output", c.gnn_output);
  get("gnn_layers", c.gnn_layers);
  get("gin_epsilon", c.gin_epsilon);
  get("gat_negative_slope", c.gat_negative_slope);
  get("lm_head_hidden", c.lm_head_hidden);
  get("fusion_head_hidden", c.fusion_head_hidden);
  if (auto it = j.find("fusion"); it != j.end()) c.fusion = parse_fusion_mode(it->get<std::string>());
  return c;
}

std::string ModelConfig::hash() const { return fnv1a_hex(to_json().dump()); }

ModelBundle ModelBundle::init(const ModelConfig& cfg, Vocabulary vocab, std::uint64_t seed) {
  ModelBundle b;
  b.config = cfg;
  b.vocab = std::move(vocab);
  Rng text_rng(derive_seed(seed, 11));
  Rng lm_rng(derive_seed(seed, 12));
  Rng gnn_rng(derive_seed(seed, 13));
  Rng fusion_rng(derive_seed(seed, 14));
  b.text = TextEncoderParams::init({static_cast<std::int64_t>(b.vocab.size()), cfg.text_dim,
                                    cfg.text_mixing_layers, cfg.text_attention},
                                   text_rng);
  b.lm_head = HeadParams::init(cfg.text_dim, cfg.lm_head_hidden, lm_rng);
  GraphEncoderConfig g;
  g.variant = cfg.gnn_variant;
  g.input_dim = cfg.text_dim;
  g.hidden_dim = cfg.gnn_hidden;
  g.output_dim = cfg.gnn_output;
  g.layers = cfg.gnn_layers;
  g.gin_epsilon = cfg.gin_epsilon;
  g.gat_negative_slope = cfg.gat_negative_slope;
  b.graph = GraphEncoderParams::init(g, gnn_rng);
  b.fusion_head = HeadParams::init(fused_dim(cfg.fusion, cfg.text_dim, cfg.gnn_output),
                                   cfg.fusion_head_hidden, fusion_rng);
  return b;
}

namespace {

template <class P>
void hash_tensors(Fnv1a& h, const P& p) {
  P::visit(p, [&](const std::string& name, const Matrix& m) {
    h.update(name);
    h.update(std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
    for (Eigen::Index i = 0; i < m.size(); ++i) h.update(m.data()[i]);
  });
}

}  // namespace

std::string ModelBundle::version() const {
  Fnv1a h;
  h.update(config.hash());
  for (const auto& t : vocab.tokens()) {
    h.update(t);
    h.update(std::string_view("\0", 1));
  }
  hash_tensors(h, text);
  hash_tensors(h, lm_head);
  hash_tensors(h, graph);
  hash_tensors(h, fusion_head);
  return h.hex();
}

std::vector<std::int32_t> ModelBundle::encode_ids(const UserRecord& user) const {
  return encode_ids(build_sequence(user, config.limits));
}

std::vector<std::int32_t> ModelBundle::encode_ids(const TextSequence& seq) const {
  return to_ids(seq, vocab, config.max_len);
}

std::string parameter_hash(const TextEncoderParams& p) {
  Fnv1a h;
  hash_tensors(h, p);
  return h.hex();
}

std::string parameter_hash(const GraphEncoderParams& p) {
  Fnv1a h;
  hash_tensors(h, p);
  return h.hex();
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

template <class P>
void dump_tensors(json& out, const std::string& prefix, const P& p) {
  P::visit(p, [&](const std::string& name, const Matrix& m) {
    std::vector<double> data(m.data(), m.data() + m.size());
    out.push_back({{"name", prefix + "." + name}, {"shape", {m.rows(), m.cols()}}, {"data", data}});
  });
}

template <class P>
void load_tensors(const std::map<std::string, const json*>& by_name, const std::string& prefix,
                  P& p, std::size_t& consumed) {
  P::visit(p, [&](const std::string& name, Matrix& m) {
    const std::string full = prefix + "." + name;
    auto it = by_name.find(full);
    if (it == by_name.end()) throw ValidationError("checkpoint missing tensor '" + full + "'");
    const json& t = *it->second;
    const auto rows = t.at("shape").at(0).get<Eigen::Index>();
    const auto cols = t.at("shape").at(1).get<Eigen::Index>();
    if (rows != m.rows() || cols != m.cols()) {
      throw ValidationError("checkpoint tensor '" + full + "' has shape " + std::to_string(rows) +
                            "x" + std::to_string(cols) + ", expected " + std::to_string(m.rows()) +
                            "x" + std::to_string(m.cols()));
    }
    const auto& data = t.at("data");
    if (static_cast<Eigen::Index>(data.size()) != m.size()) {
      throw ValidationError("checkpoint tensor '" + full + "' has wrong element count");
    }
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = data[static_cast<std::size_t>(i)].get<double>();
    ++consumed;
  });
}

}  // namespace

json bundle_to_json(const ModelBundle& b) {
  json tensors = json::array();
  dump_tensors(tensors, "text", b.text);
  dump_tensors(tensors, "lm_head", b.lm_head);
  dump_tensors(tensors, "graph", b.graph);
  dump_tensors(tensors, "fusion_head", b.fusion_head);
  json prov = json::array();
  for (const auto& s : b.provenance) {
    prov.push_back({{"stage", s.stage},
                    {"config_hash", s.config_hash},
                    {"epochs_run", s.epochs_run},
                    {"best_epoch", s.best_epoch}});
  }
  return {{"format", "lgb-checkpoint"},
          {"version", kCheckpointVersion},
          {"config", b.config.to_json()},
          {"config_hash", b.config.hash()},
          {"variant", to_string(b.config.gnn_variant)},
          {"vocabulary", b.vocab.tokens()},
          {"tensors", tensors},
          {"provenance", prov}};
}

ModelBundle bundle_from_json(const json& j, const std::string& expected_config_hash) {
  if (j.value("format", "") != "lgb-checkpoint") throw ValidationError("not an lgb checkpoint");
  if (j.value("version", 0) != kCheckpointVersion) {
    throw ValidationError("unsupported checkpoint version " + std::to_string(j.value("version", 0)));
  }
  const ModelConfig cfg = ModelConfig::from_json(j.at("config"));
  const std::string stored_hash = j.at("config_hash").get<std::string>();
  if (cfg.hash() != stored_hash) {
    throw ValidationError("checkpoint config hash mismatch: stored " + stored_hash + ", computed " +
                          cfg.hash());
  }
  if (!expected_config_hash.empty() && expected_config_hash != stored_hash) {
    throw ValidationError("checkpoint config hash " + stored_hash + " does not match expected " +
                          expected_config_hash);
  }
  Vocabulary vocab = Vocabulary::from_tokens(j.at("vocabulary").get<std::vector<std::string>>());
  ModelBundle b = ModelBundle::init(cfg, std::move(vocab), 0);

  std::map<std::string, const json*> by_name;
  for (const auto& t : j.at("tensors")) by_name[t.at("name").get<std::string>()] = &t;
  std::size_t consumed = 0;
  load_tensors(by_name, "text", b.text, consumed);
  load_tensors(by_name, "lm_head", b.lm_head, consumed);
  load_tensors(by_name, "graph", b.graph, consumed);
  load_tensors(by_name, "fusion_head", b.fusion_head, consumed);
  if (consumed != by_name.size()) throw ValidationError("checkpoint has unexpected extra tensors");
  for (const auto& s : j.at("provenance")) {
    b.provenance.push_back({s.at("stage").get<std::string>(), s.at("config_hash").get<std::string>(),
                            s.at("epochs_run").get<int>(), s.at("best_epoch").get<int>()});
  }
  return b;
}

void save_checkpoint(const ModelBundle& bundle, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << bundle_to_json(bundle).dump() << '\n';
}

ModelBundle load_checkpoint(const std::filesystem::path& path, const std::string& expected_config_hash) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ValidationError("corrupt checkpoint " + path.string() + ": " + e.what());
  }
  return bundle_from_json(j, expected_config_hash);
}

}  // namespace lgb
