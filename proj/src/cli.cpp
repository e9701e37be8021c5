#include "lgb/cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "lgb/analytics.hpp"
#include "lgb/evaluation.hpp"
#include "lgb/hashing.hpp"
#include "lgb/random.hpp"
#include "lgb/service.hpp"
#include "lgb/training.hpp"

namespace lgb {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Manifest

std::string canonical_hash(const json& j) { return fnv1a_hex(j.dump()); }

std::string RunManifest::config_hash() const { return canonical_hash(config); }

json RunManifest::to_json() const {
  return {{"command", command},       {"argv", argv},     {"config", config},
          {"config_hash", config_hash()}, {"seed", seed},     {"inputs", inputs},
          {"outputs", outputs},       {"started_at", started_at}, {"finished_at", finished_at}};
}

RunManifest RunManifest::from_json(const json& j) {
  RunManifest m;
  m.command = j.at("command").get<std::string>();
  m.argv = j.value("argv", std::vector<std::string>{});
  m.config = j.at("config");
  m.seed = j.value("seed", std::uint64_t{0});
  m.inputs = j.value("inputs", std::map<std::string, std::string>{});
  m.outputs = j.value("outputs", std::map<std::string, std::string>{});
  m.started_at = j.value("started_at", std::string());
  m.finished_at = j.value("finished_at", std::string());
  if (j.contains("config_hash") && j.at("config_hash").get<std::string>() != m.config_hash()) {
    throw ValidationError("manifest config_hash does not match its config");
  }
  return m;
}

void RunManifest::write(const fs::path& path) const {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << to_json().dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// Configuration

json default_cli_config() {
  json j = PipelineConfig::desk_scale().to_json();
  j["split_ratios"] = {0.7, 0.2, 0.1};
  json synth = SyntheticSpec{}.to_json();
  synth.erase("seed");  // taken from --seed
  j["synth"] = synth;
  j["analytics"] = {{"neighbor_cap", 10}, {"min_support", 1}};
  j["service"] = {{"risk_threshold", 0.5}, {"confidence_floor", 0.9}, {"host", "127.0.0.1"}, {"port", 8080}};
  return j;
}

namespace {

json typed_value(const json& like, const std::string& text, const std::string& key) {
  auto bad = [&]() { return ValidationError("config key '" + key + "': cannot use '" + text + "'"); };
  try {
    std::size_t pos = 0;
    switch (like.type()) {
      case json::value_t::boolean:
        if (text == "true" || text == "1") return true;
        if (text == "false" || text == "0") return false;
        throw bad();
      case json::value_t::number_unsigned: {
        if (!text.empty() && text[0] == '-') throw bad();
        const auto v = std::stoull(text, &pos);
        if (pos != text.size()) throw bad();
        return v;
      }
      case json::value_t::number_integer: {
        const auto v = std::stoll(text, &pos);
        if (pos != text.size()) throw bad();
        return v;
      }
      case json::value_t::number_float: {
        const double v = std::stod(text, &pos);
        if (pos != text.size()) throw bad();
        return v;
      }
      case json::value_t::string:
        return text;
      case json::value_t::array: {
        std::string body = text;
        if (body.size() >= 2 && body.front() == '[' && body.back() == ']') body = body.substr(1, body.size() - 2);
        json arr = json::array();
        const json elem = like.empty() ? json("") : like.at(0);
        std::stringstream ss(body);
        std::string part;
        while (std::getline(ss, part, ',')) {
          part.erase(0, part.find_first_not_of(" \t"));
          part.erase(part.find_last_not_of(" \t") + 1);
          arr.push_back(typed_value(elem, part, key));
        }
        if (!like.empty() && arr.size() != like.size()) throw bad();
        return arr;
      }
      default:
        throw bad();
    }
  } catch (const std::logic_error&) {
    throw bad();
  }
}

void merge_known(json& dst, const json& src, const std::string& prefix) {
  for (auto it = src.begin(); it != src.end(); ++it) {
    const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (!dst.contains(it.key())) throw UsageError("unknown config key '" + key + "'");
    json& d = dst[it.key()];
    if (d.is_object()) {
      if (!it->is_object()) throw ValidationError("config key '" + key + "' must be a section");
      merge_known(d, *it, key);
    } else if (it->is_string() && !d.is_string()) {
      d = typed_value(d, it->get<std::string>(), key);
    } else {
      const bool both_numbers = d.is_number() && it->is_number();
      if (!both_numbers && d.type() != it->type()) throw ValidationError("config key '" + key + "' has the wrong type");
      d = *it;
    }
  }
}

}  // namespace

void apply_override(json& config, const std::string& dotted_key, const std::string& value) {
  json* node = &config;
  std::stringstream ss(dotted_key);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) parts.push_back(part);
  if (parts.empty()) throw UsageError("empty config key");
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (!node->is_object() || !node->contains(parts[i])) throw UsageError("unknown config key '" + dotted_key + "'");
    node = &(*node)[parts[i]];
  }
  if (node->is_object()) throw UsageError("config key '" + dotted_key + "' names a section");
  *node = typed_value(*node, value, dotted_key);
}

void apply_config_text(json& config, const std::string& ini_text) {
  std::istringstream in(ini_text);
  std::vector<CLI::ConfigItem> items;
  try {
    items = CLI::ConfigINI().from_config(in);
  } catch (const CLI::Error& e) {
    throw ValidationError(std::string("config file: ") + e.what());
  }
  for (const auto& item : items) {
    if (item.name == "++" || item.name == "--") continue;
    std::string value;
    for (std::size_t i = 0; i < item.inputs.size(); ++i) value += (i ? "," : "") + item.inputs[i];
    apply_override(config, item.fullname(), value);
  }
}

// ---------------------------------------------------------------------------
// Commands

namespace {

struct Options {
  std::string config_path;
  std::uint64_t seed = 0;
  std::string out;
  std::string dataset;
  std::string users, edges;
  std::string checkpoint;
  std::string mode;
  std::string analysis;
  std::string filter = "all";
  std::string manifest;
  std::vector<std::string> variants;
  std::vector<double> levels;
  std::vector<std::size_t> ks;
  std::vector<std::uint64_t> seeds;
};

class Command {
 public:
  Command(std::string name, std::vector<std::string> argv, const Options& o, std::ostream& out)
      : o_(o), out_(out) {
    m_.command = std::move(name);
    m_.argv = std::move(argv);
    m_.seed = o.seed;
    m_.started_at = utc_now();
    config_ = default_cli_config();
  }

  void load_config(const std::vector<std::string>& extras) {
    if (!o_.config_path.empty()) {
      std::ifstream in(o_.config_path);
      if (!in) throw ValidationError("cannot read config file '" + o_.config_path + "'");
      std::stringstream buf;
      buf << in.rdbuf();
      const std::string text = buf.str();
      const auto first = text.find_first_not_of(" \t\r\n");
      if (first != std::string::npos && text[first] == '{') {
        json j;
        try {
          j = json::parse(text);
        } catch (const json::exception& e) {
          throw ValidationError("config file '" + o_.config_path + "': " + e.what());
        }
        // A manifest carries its resolved config.
        if (j.contains("config") && j.contains("command")) j = RunManifest::from_json(j).config;
        merge_known(config_, j, "");
      } else {
        apply_config_text(config_, text);
      }
      m_.inputs["config"] = o_.config_path;
    }
    for (std::size_t i = 0; i < extras.size(); ++i) {
      const std::string& a = extras[i];
      if (a.rfind("--", 0) != 0) throw UsageError("unexpected argument '" + a + "'");
      std::string key = a.substr(2), value;
      if (auto eq = key.find('='); eq != std::string::npos) {
        value = key.substr(eq + 1);
        key = key.substr(0, eq);
      } else {
        if (i + 1 >= extras.size()) throw UsageError("option --" + key + " needs a value");
        value = extras[++i];
      }
      apply_override(config_, key, value);
    }
    m_.config = config_;
  }

  PipelineConfig pipeline() const {
    PipelineConfig pc = PipelineConfig::from_json(config_);
    pc.sft.validate();
    pc.pretrain.validate();
    pc.finetune.validate();
    return pc;
  }

  const json& config() const { return config_; }

  fs::path out_dir() {
    if (o_.out.empty()) throw UsageError("--out is required for " + m_.command);
    fs::create_directories(o_.out);
    return o_.out;
  }

  fs::path output(const std::string& name) {
    const fs::path p = out_dir() / name;
    m_.outputs[name] = p.string();
    return p;
  }

  fs::path dataset_dir(const std::string& given, const std::string& role = "dataset") {
    const char* env = std::getenv("LGB_DATA_DIR");
    fs::path p = given;
    if (given.empty()) {
      if (!env || !*env) throw UsageError("--dataset is required (or set LGB_DATA_DIR)");
      p = env;
    } else if (p.is_relative() && !fs::exists(p) && env && *env) {
      p = fs::path(env) / p;
    }
    if (!fs::exists(p / "users.jsonl") || !fs::exists(p / "edges.jsonl")) {
      throw ValidationError("dataset directory '" + p.string() + "' needs users.jsonl and edges.jsonl");
    }
    m_.inputs[role] = p.string();
    return p;
  }

  SocialGraph dataset(const std::string& given, const std::string& role = "dataset") {
    const fs::path p = dataset_dir(given, role);
    return ingest_dataset(p / "users.jsonl", p / "edges.jsonl");
  }

  ModelBundle checkpoint(bool required) {
    if (o_.checkpoint.empty()) {
      if (required) throw UsageError("--checkpoint is required for " + m_.command);
      return {};
    }
    m_.inputs["checkpoint"] = o_.checkpoint;
    return load_checkpoint(o_.checkpoint);
  }

  DatasetSplit split(const SocialGraph& g) const {
    DatasetSplit s = g.recorded_split();
    if (!s.train.empty()) return s;
    return make_split(g, config_.at("split_ratios").get<std::array<double, 3>>(), derive_seed(o_.seed, 5));
  }

  void write_json(const std::string& name, const json& j) {
    std::ofstream f(output(name));
    f << j.dump(2) << '\n';
  }

  void write_text(const std::string& name, const std::string& text) {
    std::ofstream f(output(name));
    f << text;
  }

  void finish() {
    m_.finished_at = utc_now();
    m_.write(out_dir() / "manifest.json");
  }

  void write_manifest_now(const fs::path& dir) { m_.write(dir / "manifest.json"); }

  RunManifest& manifest() { return m_; }
  std::ostream& out() { return out_; }
  const Options& opt() const { return o_; }

 private:
  const Options& o_;
  std::ostream& out_;
  RunManifest m_;
  json config_;
};

json graph_summary(const SocialGraph& g) {
  std::size_t bots = 0;
  const auto labeled = g.labeled();
  for (const auto& [id, l] : labeled) bots += l == Label::bot;
  return {{"nodes", g.num_nodes()},
          {"edges", g.num_edges()},
          {"labeled", labeled.size()},
          {"bots", bots},
          {"humans", labeled.size() - bots}};
}

std::vector<LabeledSequence> labeled_sequences(const std::vector<std::vector<std::int32_t>>& ids,
                                               const LabeledNodes& nodes) {
  std::vector<LabeledSequence> out;
  for (std::size_t k = 0; k < nodes.size(); ++k) out.push_back({ids[nodes.rows[k]], nodes.labels[k]});
  return out;
}

json history_json(const std::vector<EpochRecord>& h) {
  json arr = json::array();
  for (const auto& e : h) {
    json r = {{"epoch", e.epoch}, {"train_loss", e.train.loss}, {"train", e.train.metrics.to_json()}};
    if (e.val) {
      r["val_loss"] = e.val->loss;
      r["val"] = e.val->metrics.to_json();
    }
    arr.push_back(r);
  }
  return arr;
}

json split_metrics(const SocialGraph& g, const DatasetSplit& s, std::span<const double> p) {
  json j = json::object();
  if (!s.train.empty()) j["train"] = metrics_on(g, s.train, p).to_json();
  if (!s.val.empty()) j["val"] = metrics_on(g, s.val, p).to_json();
  if (!s.test.empty()) j["test"] = metrics_on(g, s.test, p).to_json();
  return j;
}

std::string bucket_csv(const std::vector<NeighborBucketAccuracy>& rows) {
  std::ostringstream out;
  out.precision(17);
  out << "neighbors,support,correct,accuracy\n";
  for (const auto& r : rows) out << r.label() << ',' << r.support << ',' << r.correct << ',' << r.accuracy << '\n';
  return out.str();
}

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(4);
  s << std::fixed << v;
  return s.str();
}

void cmd_ingest(Command& c) {
  const Options& o = c.opt();
  SocialGraph g;
  if (!o.users.empty() || !o.edges.empty()) {
    if (o.users.empty() || o.edges.empty()) throw UsageError("--users and --edges go together");
    c.manifest().inputs["users"] = o.users;
    c.manifest().inputs["edges"] = o.edges;
    g = ingest_dataset(o.users, o.edges);
  } else {
    g = c.dataset(o.dataset);
  }
  write_dataset(g, c.output("users.jsonl"), c.output("edges.jsonl"));
  const json s = graph_summary(g);
  c.write_json("summary.json", s);
  c.out() << "ingested " << s["nodes"] << " accounts, " << s["edges"] << " relations, " << s["labeled"]
          << " labeled\n";
}

void cmd_synth(Command& c) {
  SyntheticSpec spec = SyntheticSpec::from_json(c.config().at("synth"));
  spec.seed = c.opt().seed;
  const SocialGraph g = generate_synthetic(spec);
  write_dataset(g, c.output("users.jsonl"), c.output("edges.jsonl"));
  const json s = graph_summary(g);
  c.write_json("summary.json", s);
  c.out() << "generated " << s["nodes"] << " accounts with " << s["edges"] << " relations\n";
}

void cmd_train_sft(Command& c) {
  const PipelineConfig pc = c.pipeline();
  const SocialGraph g = c.dataset(c.opt().dataset);
  const DatasetSplit split = c.split(g);
  ModelBundle b = c.opt().checkpoint.empty() ? ModelBundle::init(pc.model, build_vocabulary(g, pc), c.opt().seed)
                                             : c.checkpoint(true);
  const auto ids = node_token_ids(b, g);
  const auto tr = labeled_sequences(ids, LabeledNodes::from_ids(g, split.train));
  const auto va = labeled_sequences(ids, LabeledNodes::from_ids(g, split.val));
  TrainConfig tc = pc.sft;
  tc.seed = derive_seed(c.opt().seed, 201);
  MetricsLog log(c.output("metrics.tsv"));
  const StageResult r = sft_language_model(std::move(b), tr, va, tc, &log);
  save_checkpoint(r.bundle, c.output("checkpoint.json"));
  c.write_json("history.json", {{"best_epoch", r.best_epoch}, {"epochs", history_json(r.history)}});
  c.out() << "sft: " << r.history.size() << " epochs, best epoch " << r.best_epoch << ", model "
          << r.bundle.version() << '\n';
}

void cmd_pretrain(Command& c) {
  const PipelineConfig pc = c.pipeline();
  const SocialGraph g = c.dataset(c.opt().dataset);
  ModelBundle b = c.checkpoint(true);
  const Matrix x = node_features(b, g);
  TrainConfig tc = pc.pretrain;
  tc.seed = derive_seed(c.opt().seed, 202);
  MetricsLog log(c.output("metrics.tsv"));
  const PretrainResult r = pretrain_gnn(std::move(b), g, x, tc, &log);
  save_checkpoint(r.bundle, c.output("checkpoint.json"));
  c.write_json("history.json", {{"loss", r.loss_history}});
  c.out() << "pretrain: " << r.loss_history.size() << " epochs, final loss "
          << (r.loss_history.empty() ? 0.0 : r.loss_history.back()) << '\n';
}

void cmd_finetune(Command& c) {
  const PipelineConfig pc = c.pipeline();
  const SocialGraph g = c.dataset(c.opt().dataset);
  const DatasetSplit split = c.split(g);
  ModelBundle b = c.checkpoint(true);
  const Matrix x = node_features(b, g);
  TrainConfig tc = pc.finetune;
  tc.seed = derive_seed(c.opt().seed, 203);
  MetricsLog log(c.output("metrics.tsv"));
  const StageResult r = finetune_fusion(std::move(b), g, x, LabeledNodes::from_ids(g, split.train),
                                        LabeledNodes::from_ids(g, split.val), tc, &log);
  save_checkpoint(r.bundle, c.output("checkpoint.json"));
  const auto p = predict_graph(r.bundle, g);
  c.write_json("history.json", {{"best_epoch", r.best_epoch},
                                {"epochs", history_json(r.history)},
                                {"metrics", split_metrics(g, split, p)}});
  c.out() << "finetune: " << r.history.size() << " epochs, best epoch " << r.best_epoch << '\n';
}

void cmd_evaluate(Command& c) {
  const SocialGraph g = c.dataset(c.opt().dataset);
  const DatasetSplit split = c.split(g);
  const ModelBundle b = c.checkpoint(true);
  const auto p = predict_graph(b, g);
  json m = split_metrics(g, split, p);
  m["model_version"] = b.version();
  c.write_json("metrics.json", m);

  std::ostringstream pred;
  pred.precision(17);
  pred << "account_id,bot_probability,predicted_label,label,split\n";
  for (std::size_t i = 0; i < g.num_nodes(); ++i) {
    const auto l = g.label(i);
    const auto s = g.split(i);
    pred << g.id_at(i) << ',' << p[i] << ',' << to_string(decide(p[i])) << ',' << (l ? to_string(*l) : "") << ','
         << (s ? to_string(*s) : "") << '\n';
  }
  c.write_text("predictions.csv", pred.str());

  const auto& nodes = split.test.empty() ? g.nodes() : split.test;
  std::vector<double> sub;
  std::vector<NodeId> labeled_nodes;
  for (const auto& id : nodes) {
    if (!g.label(id)) continue;
    labeled_nodes.push_back(id);
    sub.push_back(p[g.index_of(id)]);
  }
  const auto cap = c.config().at("analytics").at("neighbor_cap").get<std::size_t>();
  c.write_text("accuracy_by_neighbors.csv", bucket_csv(accuracy_by_neighbor_count(g, labeled_nodes, sub, cap)));
  if (m.contains("test")) c.out() << "test accuracy " << fmt(m["test"]["accuracy"].get<double>()) << '\n';
}

std::vector<std::uint64_t> seeds_or_default(const Options& o) {
  return o.seeds.empty() ? default_seeds() : o.seeds;
}

std::string report_row(const std::string& key, const MetricsReport& r) {
  std::ostringstream s;
  s.precision(17);
  s << key << ',' << r.accuracy.mean << ',' << r.accuracy.std << ',' << r.f1.mean << ',' << r.f1.std << ',';
  if (r.roc_auc) {
    s << r.roc_auc->mean << ',' << r.roc_auc->std;
  } else {
    s << ',';
  }
  s << '\n';
  return s.str();
}

void cmd_ablate(Command& c) {
  const PipelineConfig pc = c.pipeline();
  const SocialGraph g = c.dataset(c.opt().dataset);
  PipelineInputs in;
  in.graph = &g;
  in.split = c.split(g);
  std::vector<Variant> variants;
  for (const auto& v : c.opt().variants) variants.push_back(parse_variant(v));
  if (variants.empty()) variants = all_variants();

  std::map<Variant, std::vector<RunMetrics>> runs;
  json per_seed = json::array();
  for (std::uint64_t seed : seeds_or_default(c.opt())) {
    for (const auto& r : run_variants(in, pc, variants, seed)) {
      runs[r.variant].push_back(r.test);
      per_seed.push_back(run_summary(r, pc, seed));
    }
    c.out() << "seed " << seed << " done\n";
  }
  json out = json::object();
  std::string csv = "variant,accuracy_mean,accuracy_std,f1_mean,f1_std,auc_mean,auc_std\n";
  for (Variant v : variants) {
    const MetricsReport rep = MetricsReport::aggregate(runs[v]);
    out[to_string(v)] = rep.to_json();
    csv += report_row(to_string(v), rep);
    c.out() << to_string(v) << ": accuracy " << fmt(rep.accuracy.mean) << " +- " << fmt(rep.accuracy.std) << '\n';
  }
  c.write_json("ablation.json", {{"variants", out}, {"runs", per_seed}});
  c.write_text("ablation.csv", csv);
}

void cmd_robustness(Command& c) {
  const Options& o = c.opt();
  if (o.mode.empty()) throw UsageError("--mode is required (label, edge, feature)");
  const RobustnessMode mode = parse_robustness_mode(o.mode);
  std::vector<double> levels = o.levels;
  if (levels.empty()) {
    levels = mode == RobustnessMode::feature ? std::vector<double>{0.0, 0.25, 0.5, 0.75, 1.0}
                                             : std::vector<double>{0.2, 0.4, 0.6, 0.8, 1.0};
  }
  const PipelineConfig pc = c.pipeline();
  const SocialGraph g = c.dataset(o.dataset);
  PipelineInputs in;
  in.graph = &g;
  in.split = c.split(g);
  const RobustnessResult r = run_robustness(in, pc, mode, levels, seeds_or_default(o));
  json levels_json = json::array();
  std::string csv = "level,accuracy_mean,accuracy_std,f1_mean,f1_std,auc_mean,auc_std\n";
  csv += report_row("baseline", r.baseline);
  for (const auto& l : r.levels) {
    levels_json.push_back({{"level", l.level}, {"report", l.report.to_json()}});
    std::ostringstream key;
    key << l.level;
    csv += report_row(key.str(), l.report);
    c.out() << to_string(mode) << ' ' << l.level << ": accuracy " << fmt(l.report.accuracy.mean) << '\n';
  }
  c.write_json("robustness.json", {{"mode", to_string(mode)}, {"baseline", r.baseline.to_json()}, {"levels", levels_json}});
  c.write_text("robustness.csv", csv);
}

void cmd_feedback_study(Command& c) {
  const Options& o = c.opt();
  const PipelineConfig pc = c.pipeline();
  const ModelBundle a = c.checkpoint(true);
  const SocialGraph g = c.dataset(o.dataset);
  PipelineInputs in;
  in.graph = &g;
  in.split = c.split(g);
  const std::vector<std::size_t> ks = o.ks.empty() ? std::vector<std::size_t>{0, 4, 8, 16, 32} : o.ks;
  std::map<std::size_t, std::vector<RunMetrics>> by_k;
  for (std::uint64_t seed : seeds_or_default(o)) {
    for (const auto& pt : run_feedback_study(a, in, pc, ks, seed)) by_k[pt.k].push_back(pt.metrics);
  }
  json out = json::array();
  std::string csv = "k,accuracy_mean,accuracy_std,f1_mean,f1_std,auc_mean,auc_std\n";
  for (std::size_t k : ks) {
    const MetricsReport rep = MetricsReport::aggregate(by_k[k]);
    out.push_back({{"k", k}, {"report", rep.to_json()}});
    csv += report_row(std::to_string(k), rep);
    c.out() << "K=" << k << ": accuracy " << fmt(rep.accuracy.mean) << '\n';
  }
  c.write_json("feedback.json", out);
  c.write_text("feedback.csv", csv);
}

void cmd_analyze(Command& c) {
  const Options& o = c.opt();
  const SocialGraph g = c.dataset(o.dataset);
  if (o.analysis == "neighbor-distribution") {
    const NeighborHistogram h = neighbor_distribution(g);
    c.write_text("neighbor_distribution.csv", histogram_csv(h));
    c.out() << "isolated " << fmt(100 * h.isolated_fraction()) << "%, one neighbor " << fmt(100 * h.one_neighbor_fraction())
            << "%, more than ten " << fmt(100 * h.over_ten_fraction()) << "%\n";
    return;
  }
  const auto min_support = c.config().at("analytics").at("min_support").get<std::size_t>();
  std::vector<ClassFilter> filters;
  if (o.filter == "each") {
    filters = {ClassFilter::human, ClassFilter::bot, ClassFilter::all};
  } else {
    filters = {parse_class_filter(o.filter)};
  }
  std::vector<NumCcCurve> curves;
  for (ClassFilter f : filters) curves.push_back(bot_probability_by_numcc(g, f, default_numcc_buckets(), min_support));
  c.write_text("numcc_curve.csv", numcc_csv(curves));
  std::size_t rows = 0;
  for (const auto& cv : curves) rows += cv.rows.size();
  c.out() << "numcc curve: " << rows << " rows\n";
}

void cmd_serve(Command& c) {
  const json& s = c.config().at("service");
  const SocialGraph g = c.dataset(c.opt().dataset);
  ModelBundle b = c.checkpoint(true);
  ServiceConfig sc;
  sc.risk_threshold = s.at("risk_threshold").get<double>();
  sc.confidence_floor = s.at("confidence_floor").get<double>();
  DetectionService svc(std::make_shared<FixtureProvider>(g), sc);
  svc.deploy(std::move(b));
  if (!c.opt().out.empty()) c.write_manifest_now(c.out_dir());
  HttpServer server(svc);
  const auto host = s.at("host").get<std::string>();
  const int port = s.at("port").get<int>();
  c.out() << "serving model " << svc.model_version() << " on http://" << host << ':' << port << std::endl;
  if (!server.listen(host, port)) throw Error("cannot listen on " + host + ":" + std::to_string(port));
}

struct Spec {
  const char* name;
  const char* help;
  void (*run)(Command&);
  bool writes_outputs;
};

const std::vector<Spec>& specs() {
  static const std::vector<Spec> s = {
      {"ingest", "Validate a users/edges dataset and write it in canonical form", cmd_ingest, true},
      {"synth", "Generate a labeled synthetic social graph", cmd_synth, true},
      {"train-sft", "Supervised fine-tuning of the text encoder", cmd_train_sft, true},
      {"pretrain", "Contrastive pre-training of the graph encoder", cmd_pretrain, true},
      {"finetune", "Fusion fine-tuning of the graph encoder and head", cmd_finetune, true},
      {"evaluate", "Score a checkpoint on a dataset", cmd_evaluate, true},
      {"ablate", "Run pipeline variants over several seeds", cmd_ablate, true},
      {"robustness", "Label, edge, or feature robustness sweep", cmd_robustness, true},
      {"feedback-study", "Continue training on K labeled samples per class from a new dataset",
       cmd_feedback_study, true},
      {"analyze", "neighbor-distribution or numcc-curve", cmd_analyze, true},
      {"serve", "Serve the detection API over HTTP", cmd_serve, false},
  };
  return s;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"lgb: LLM and graph based social bot detection"};
  app.name("lgb");
  app.require_subcommand(1);
  Options o;
  std::map<CLI::App*, const Spec*> subs;

  for (const auto& spec : specs()) {
    CLI::App* sub = app.add_subcommand(spec.name, spec.help);
    sub->allow_extras();
    sub->add_option("--config", o.config_path, "INI config ([section] key = value) or a run manifest");
    sub->add_option("--seed", o.seed, "Run seed");
    sub->add_option("--out", o.out, "Output directory");
    sub->add_option("--dataset", o.dataset, "Dataset directory with users.jsonl and edges.jsonl (default $LGB_DATA_DIR)");
    const std::string name = spec.name;
    if (name == "ingest") {
      sub->add_option("--users", o.users, "Users file");
      sub->add_option("--edges", o.edges, "Edges file");
    }
    if (name == "train-sft" || name == "pretrain" || name == "finetune" || name == "evaluate" ||
        name == "feedback-study" || name == "serve") {
      sub->add_option("--checkpoint", o.checkpoint, "Model checkpoint");
    }
    if (name == "ablate") sub->add_option("--variants", o.variants, "Variants (comma separated)")->delimiter(',');
    if (name == "ablate" || name == "robustness" || name == "feedback-study") {
      sub->add_option("--seeds", o.seeds, "Seeds (comma separated, default 0-4)")->delimiter(',');
    }
    if (name == "robustness") {
      sub->add_option("--mode", o.mode, "label | edge | feature");
      sub->add_option("--levels", o.levels, "Levels (comma separated)")->delimiter(',');
    }
    if (name == "feedback-study") sub->add_option("--ks", o.ks, "K values (comma separated)")->delimiter(',');
    if (name == "analyze") {
      sub->add_option("analysis", o.analysis, "neighbor-distribution | numcc-curve")
          ->required()
          ->check(CLI::IsMember({"neighbor-distribution", "numcc-curve"}));
      sub->add_option("--filter", o.filter, "human | bot | all | each");
    }
    sub->footer("Any config key can be set as --section.key VALUE; the flag wins over --config.");
    subs[sub] = &spec;
  }
  CLI::App* replay = app.add_subcommand("replay", "Re-run a command from its manifest");
  replay->add_option("manifest", o.manifest, "manifest.json")->required();

  if (args.empty()) {
    err << app.help();
    return 2;
  }
  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      app.exit(e, out, err);
      return 0;
    }
    err << "usage error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  if (replay->parsed()) {
    try {
      std::ifstream in(o.manifest);
      if (!in) throw ValidationError("cannot read manifest '" + o.manifest + "'");
      const RunManifest m = RunManifest::from_json(json::parse(in));
      std::vector<std::string> again;
      for (std::size_t i = 0; i < m.argv.size(); ++i) {
        if (m.argv[i] == "--config") {
          ++i;
          continue;
        }
        if (m.argv[i].rfind("--config=", 0) == 0) continue;
        again.push_back(m.argv[i]);
      }
      if (again.empty() || again[0] != m.command) throw ValidationError("manifest argv does not start with its command");
      again.insert(again.begin() + 1, {"--config", o.manifest});
      return run_cli(again, out, err);
    } catch (const std::exception& e) {
      err << "error: " << e.what() << '\n';
      return 1;
    }
  }

  for (const auto& [sub, spec] : subs) {
    if (!sub->parsed()) continue;
    try {
      Command c(spec->name, args, o, out);
      c.load_config(sub->remaining());
      spec->run(c);
      if (spec->writes_outputs) c.finish();
      return 0;
    } catch (const UsageError& e) {
      err << "usage error: " << e.what() << "\n\n" << sub->help();
      return 2;
    } catch (const std::exception& e) {
      err << "error: " << e.what() << '\n';
      return 1;
    }
  }
  err << app.help();
  return 2;
}

}  // namespace lgb
