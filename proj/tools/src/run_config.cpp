// SPDX-License-Identifier: Apache-2.0
#include "matchkit_cli/run_config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "matchkit/checkpoint.hpp"
#include "matchkit/error.hpp"

namespace matchkit::cli {

namespace pt = boost::property_tree;

namespace {

std::string where(const std::string& section, const std::string& key) {
  return "[" + section + "] " + key;
}

std::size_t parse_size(const std::string& text, const std::string& at) {
  std::size_t v = 0;
  const auto* end = text.data() + text.size();
  const auto r = std::from_chars(text.data(), end, v);
  if (text.empty() || r.ec != std::errc{} || r.ptr != end) {
    throw ConfigError(at + ": expected a non-negative integer, got '" + text + "'");
  }
  return v;
}

std::uint64_t parse_u64(const std::string& text, const std::string& at) {
  std::uint64_t v = 0;
  const auto* end = text.data() + text.size();
  const auto r = std::from_chars(text.data(), end, v);
  if (text.empty() || r.ec != std::errc{} || r.ptr != end) {
    throw ConfigError(at + ": expected a non-negative integer, got '" + text + "'");
  }
  return v;
}

double parse_real(const std::string& text, const std::string& at) {
  char* end = nullptr;
  const double v = std::strtod(text.c_str(), &end);
  if (text.empty() || end != text.c_str() + text.size()) {
    throw ConfigError(at + ": expected a number, got '" + text + "'");
  }
  return v;
}

bool parse_bool(const std::string& text, const std::string& at) {
  if (text == "true") return true;
  if (text == "false") return false;
  throw ConfigError(at + ": expected true or false, got '" + text + "'");
}

std::vector<std::size_t> parse_list(const std::string& text, const std::string& at) {
  std::vector<std::size_t> out;
  if (text.empty()) return out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) out.push_back(parse_size(item, at));
  return out;
}

std::string real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string flag(bool v) { return v ? "true" : "false"; }

std::string list(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

using Setter = std::function<void(const std::string&, const std::string&)>;
using Section = std::map<std::string, Setter>;

std::map<std::string, Section> schema(RunConfig& c) {
  std::map<std::string, Section> s;
  auto& d = s["dataset"];
  d["path"] = [&](const std::string& v, const std::string&) { c.dataset.path = v; };
  d["image_size"] = [&](const std::string& v, const std::string& at) { c.dataset.image_size = parse_size(v, at); };
  d["rotations"] = [&](const std::string& v, const std::string& at) { c.dataset.rotations = parse_bool(v, at); };
  d["train_classes"] = [&](const std::string& v, const std::string& at) { c.dataset.train_classes = parse_size(v, at); };
  d["split_seed"] = [&](const std::string& v, const std::string& at) { c.dataset.split_seed = parse_u64(v, at); };

  auto& m = s["model"];
  m["encoder"] = [&](const std::string& v, const std::string&) { c.model.encoder = parse_encoder_kind(v); };
  m["conv_blocks"] = [&](const std::string& v, const std::string& at) { c.model.conv_blocks = parse_size(v, at); };
  m["filters"] = [&](const std::string& v, const std::string& at) { c.model.filters = parse_size(v, at); };
  m["input_dim"] = [&](const std::string& v, const std::string& at) { c.model.input_dim = parse_size(v, at); };
  m["mlp_hidden"] = [&](const std::string& v, const std::string& at) { c.model.mlp_hidden = parse_list(v, at); };
  m["embedding_dim"] = [&](const std::string& v, const std::string& at) { c.model.embedding_dim = parse_size(v, at); };
  m["fce"] = [&](const std::string& v, const std::string& at) { c.model.fce = parse_bool(v, at); };
  m["fce_steps"] = [&](const std::string& v, const std::string& at) { c.model.fce_steps = parse_size(v, at); };

  auto& t = s["train"];
  t["ways"] = [&](const std::string& v, const std::string& at) { c.train.ways = parse_size(v, at); };
  t["shots"] = [&](const std::string& v, const std::string& at) { c.train.shots = parse_size(v, at); };
  t["batch_per_class"] = [&](const std::string& v, const std::string& at) { c.train.batch_per_class = parse_size(v, at); };
  t["episodes"] = [&](const std::string& v, const std::string& at) { c.train.episodes = parse_size(v, at); };
  t["lr"] = [&](const std::string& v, const std::string& at) { c.train.lr = parse_real(v, at); };
  t["beta1"] = [&](const std::string& v, const std::string& at) { c.train.beta1 = parse_real(v, at); };
  t["beta2"] = [&](const std::string& v, const std::string& at) { c.train.beta2 = parse_real(v, at); };
  t["epsilon"] = [&](const std::string& v, const std::string& at) { c.train.epsilon = parse_real(v, at); };
  t["eval_every"] = [&](const std::string& v, const std::string& at) { c.train.eval_every = parse_size(v, at); };
  t["eval_episodes"] = [&](const std::string& v, const std::string& at) { c.train.eval_episodes = parse_size(v, at); };
  t["checkpoint_every"] = [&](const std::string& v, const std::string& at) { c.train.checkpoint_every = parse_size(v, at); };
  t["seed"] = [&](const std::string& v, const std::string& at) { c.train.seed = parse_u64(v, at); };

  auto& e = s["eval"];
  e["attention"] = [&](const std::string& v, const std::string&) { c.eval.attention = parse_attention_kind(v); };
  e["knn_drop"] = [&](const std::string& v, const std::string& at) { c.eval.knn_drop = parse_size(v, at); };
  e["kde_bandwidth"] = [&](const std::string& v, const std::string& at) { c.eval.kde_bandwidth = parse_real(v, at); };
  e["episodes"] = [&](const std::string& v, const std::string& at) { c.eval.episodes = parse_size(v, at); };
  e["seed"] = [&](const std::string& v, const std::string& at) { c.eval.seed = parse_u64(v, at); };

  auto& b = s["baseline"];
  b["epochs"] = [&](const std::string& v, const std::string& at) { c.baseline.epochs = parse_size(v, at); };
  b["batch_size"] = [&](const std::string& v, const std::string& at) { c.baseline.batch_size = parse_size(v, at); };
  b["max_steps"] = [&](const std::string& v, const std::string& at) { c.baseline.max_steps = parse_size(v, at); };
  b["fine_tune_steps"] = [&](const std::string& v, const std::string& at) { c.baseline.fine_tune_steps = parse_size(v, at); };
  b["fine_tune_lr"] = [&](const std::string& v, const std::string& at) { c.baseline.fine_tune_lr = parse_real(v, at); };
  return s;
}

}  // namespace

RunConfig RunConfig::parse(const std::string& text) {
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError("config: " + e.message() + " (line " + std::to_string(e.line()) + ")");
  }
  RunConfig config;
  auto sections = schema(config);
  for (const auto& [section_name, section] : tree) {
    if (section.empty() && !section.data().empty()) {
      throw ConfigError("config: key '" + section_name + "' outside any section");
    }
    const auto s = sections.find(section_name);
    if (s == sections.end()) throw ConfigError("config: unknown section [" + section_name + "]");
    for (const auto& [key, value] : section) {
      const auto setter = s->second.find(key);
      if (setter == s->second.end()) {
        throw ConfigError("config: unknown key " + where(section_name, key));
      }
      setter->second(value.get_value<std::string>(), where(section_name, key));
    }
  }
  config.validate();
  return config;
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

std::string RunConfig::to_text() const {
  std::ostringstream out;
  out << "[dataset]\n"
      << "path=" << dataset.path << '\n'
      << "image_size=" << dataset.image_size << '\n'
      << "rotations=" << flag(dataset.rotations) << '\n'
      << "train_classes=" << dataset.train_classes << '\n'
      << "split_seed=" << dataset.split_seed << '\n'
      << "\n[model]\n"
      << "encoder=" << to_string(model.encoder) << '\n'
      << "conv_blocks=" << model.conv_blocks << '\n'
      << "filters=" << model.filters << '\n'
      << "input_dim=" << model.input_dim << '\n'
      << "mlp_hidden=" << list(model.mlp_hidden) << '\n'
      << "embedding_dim=" << model.embedding_dim << '\n'
      << "fce=" << flag(model.fce) << '\n'
      << "fce_steps=" << model.fce_steps << '\n'
      << "\n[train]\n"
      << "ways=" << train.ways << '\n'
      << "shots=" << train.shots << '\n'
      << "batch_per_class=" << train.batch_per_class << '\n'
      << "episodes=" << train.episodes << '\n'
      << "lr=" << real(train.lr) << '\n'
      << "beta1=" << real(train.beta1) << '\n'
      << "beta2=" << real(train.beta2) << '\n'
      << "epsilon=" << real(train.epsilon) << '\n'
      << "eval_every=" << train.eval_every << '\n'
      << "eval_episodes=" << train.eval_episodes << '\n'
      << "checkpoint_every=" << train.checkpoint_every << '\n'
      << "seed=" << train.seed << '\n'
      << "\n[eval]\n"
      << "attention=" << to_string(eval.attention) << '\n'
      << "knn_drop=" << eval.knn_drop << '\n'
      << "kde_bandwidth=" << real(eval.kde_bandwidth) << '\n'
      << "episodes=" << eval.episodes << '\n'
      << "seed=" << eval.seed << '\n'
      << "\n[baseline]\n"
      << "epochs=" << baseline.epochs << '\n'
      << "batch_size=" << baseline.batch_size << '\n'
      << "max_steps=" << baseline.max_steps << '\n'
      << "fine_tune_steps=" << baseline.fine_tune_steps << '\n'
      << "fine_tune_lr=" << real(baseline.fine_tune_lr) << '\n';
  return out.str();
}

std::uint64_t RunConfig::hash() const { return config_hash(to_text()); }

void RunConfig::validate() const {
  if (dataset.image_size == 0) throw ConfigError("[dataset] image_size must be positive");
  train_config().validate();
  if (eval.episodes == 0) throw ConfigError("[eval] episodes must be positive");
  if (!(eval.kde_bandwidth > 0.0)) throw ConfigError("[eval] kde_bandwidth must be positive");
  if (baseline.batch_size < 2) throw ConfigError("[baseline] batch_size must be at least 2");
  if (!(baseline.fine_tune_lr > 0.0)) throw ConfigError("[baseline] fine_tune_lr must be positive");
}

ModelConfig RunConfig::model_config() const {
  ModelConfig m;
  m.encoder = model.encoder;
  m.conv.num_blocks = model.conv_blocks;
  m.conv.filters = model.filters;
  m.conv.input_size = dataset.image_size;
  m.conv.in_channels = 1;
  m.mlp.input_dim = model.input_dim;
  m.mlp.hidden_dims = model.mlp_hidden;
  m.mlp.output_dim = model.embedding_dim;
  m.fce = FceConfig{model.fce, model.fce_steps};
  return m;
}

TrainConfig RunConfig::train_config() const {
  TrainConfig t;
  t.model = model_config();
  t.ways = train.ways;
  t.shots = train.shots;
  t.batch_per_class = train.batch_per_class;
  t.episodes_total = train.episodes;
  t.adam = AdamConfig{train.lr, train.beta1, train.beta2, train.epsilon};
  t.eval_every = train.eval_every;
  t.eval_episodes = train.eval_episodes;
  t.seed = train.seed;
  return t;
}

AttentionSpec RunConfig::attention() const {
  AttentionSpec a;
  a.kind = eval.attention;
  a.knn_drop = eval.knn_drop;
  a.kde_bandwidth = eval.kde_bandwidth;
  return a;
}

std::size_t RunConfig::episode_image_budget() const {
  return train.episodes * train.ways * (train.shots + train.batch_per_class);
}

PreparedData prepare_data(const DatasetSection& section) {
  if (section.path.empty()) throw ConfigError("[dataset] path is not set");
  PreparedData out;
  ClassDataset raw = load_dataset(section.path, section.image_size);
  SplitSpec split = split_classes(raw, section.train_classes, section.split_seed);
  if (raw.is_image() && section.rotations) {
    out.dataset = augment_rotations(raw);
    out.split = expand_split_for_rotations(split);
  } else {
    out.dataset = std::move(raw);
    out.split = std::move(split);
  }
  return out;
}

}  // namespace matchkit::cli
