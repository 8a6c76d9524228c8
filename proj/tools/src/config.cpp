#include "config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <cdp/error.hpp>
#include <cdp/rng.hpp>

namespace cdp::pipeline {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, sep)) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <typename T>
T parse_integer(const std::string& key, const std::string& text) {
  T value{};
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end)
    throw ConfigError(key + ": expected a non-negative integer, got '" + text + "'");
  return value;
}

double parse_real(const std::string& key, const std::string& text) {
  double value = 0.0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end || !std::isfinite(value))
    throw ConfigError(key + ": expected a finite number, got '" + text + "'");
  return value;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw ConfigError(key + ": expected true or false, got '" + text + "'");
}

std::string real(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string boolean(bool v) { return v ? "true" : "false"; }

template <typename T>
std::string join(const std::vector<T>& items, const std::function<std::string(const T&)>& f,
                 const char* sep) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += sep;
    out += f(items[i]);
  }
  return out;
}

struct Field {
  std::string section;
  std::string key;
  std::function<void(PipelineConfig&, const std::string& name, const std::string& value,
                     const std::filesystem::path& base_dir)>
      set;
  std::function<std::string(const PipelineConfig&)> get;
};

#define CDP_SIZE(sec, name, member)                                                          \
  Field{sec, name,                                                                           \
        [](PipelineConfig& c, const std::string& n, const std::string& v,                    \
           const std::filesystem::path&) { c.member = parse_integer<std::size_t>(n, v); },   \
        [](const PipelineConfig& c) { return std::to_string(c.member); }}
#define CDP_REAL(sec, name, member)                                                          \
  Field{sec, name,                                                                           \
        [](PipelineConfig& c, const std::string& n, const std::string& v,                    \
           const std::filesystem::path&) { c.member = parse_real(n, v); },                   \
        [](const PipelineConfig& c) { return real(c.member); }}
#define CDP_BOOL(sec, name, member)                                                          \
  Field{sec, name,                                                                           \
        [](PipelineConfig& c, const std::string& n, const std::string& v,                    \
           const std::filesystem::path&) { c.member = parse_bool(n, v); },                   \
        [](const PipelineConfig& c) { return boolean(c.member); }}

std::filesystem::path resolve(const std::filesystem::path& base_dir, const std::string& v) {
  const std::filesystem::path p(v);
  return p.is_absolute() ? p : base_dir / p;
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      Field{"run", "seed",
            [](PipelineConfig& c, const std::string& n, const std::string& v,
               const std::filesystem::path&) { c.seed = parse_integer<std::uint64_t>(n, v); },
            [](const PipelineConfig& c) { return std::to_string(c.seed); }},
      Field{"run", "workers",
            [](PipelineConfig& c, const std::string& n, const std::string& v,
               const std::filesystem::path&) { c.workers = parse_integer<unsigned>(n, v); },
            // Worker count never changes outputs, so it is not part of any hash.
            [](const PipelineConfig&) { return std::string(); }},

      Field{"data", "source",
            [](PipelineConfig& c, const std::string& n, const std::string& v,
               const std::filesystem::path&) {
              if (v == "synthetic")
                c.data.source = DataSource::synthetic;
              else if (v == "files")
                c.data.source = DataSource::files;
              else
                throw ConfigError(n + ": expected synthetic or files, got '" + v + "'");
            },
            [](const PipelineConfig& c) {
              return std::string(c.data.source == DataSource::synthetic ? "synthetic" : "files");
            }},
      Field{"data", "base",
            [](PipelineConfig& c, const std::string&, const std::string& v,
               const std::filesystem::path& dir) { c.data.base = resolve(dir, v); },
            [](const PipelineConfig& c) { return c.data.base.string(); }},
      Field{"data", "committee",
            [](PipelineConfig& c, const std::string&, const std::string& v,
               const std::filesystem::path& dir) {
              c.data.committee.clear();
              for (const auto& item : split_list(v, ',')) c.data.committee.push_back(resolve(dir, item));
            },
            [](const PipelineConfig& c) {
              return join<std::filesystem::path>(
                  c.data.committee, [](const std::filesystem::path& p) { return p.string(); }, ",");
            }},
      Field{"data", "labels",
            [](PipelineConfig& c, const std::string&, const std::string& v,
               const std::filesystem::path& dir) { c.data.labels = resolve(dir, v); },
            [](const PipelineConfig& c) { return c.data.labels.string(); }},
      Field{"data", "split",
            [](PipelineConfig& c, const std::string&, const std::string& v,
               const std::filesystem::path& dir) { c.data.split = resolve(dir, v); },
            [](const PipelineConfig& c) { return c.data.split.string(); }},
      CDP_SIZE("data", "num_identities", data.synthetic.num_identities),
      CDP_SIZE("data", "samples_min", data.synthetic.samples_min),
      CDP_SIZE("data", "samples_max", data.synthetic.samples_max),
      CDP_SIZE("data", "dim", data.synthetic.dim),
      CDP_REAL("data", "intra_class_sigma", data.synthetic.intra_class_sigma),
      CDP_SIZE("data", "intra_class_rank", data.synthetic.intra_class_rank),
      CDP_SIZE("data", "num_committee", data.synthetic.num_committee),
      CDP_REAL("data", "view_rotation_angle", data.synthetic.view_rotation_angle),
      CDP_REAL("data", "view_noise_sigma", data.synthetic.view_noise_sigma),
      CDP_SIZE("data", "view_weak_dims", data.synthetic.view_weak_dims),
      CDP_REAL("data", "view_weak_gain", data.synthetic.view_weak_gain),
      CDP_REAL("data", "base_noise_sigma", data.synthetic.base_noise_sigma),
      CDP_BOOL("data", "heterogeneous", data.synthetic.heterogeneous),
      CDP_REAL("data", "heterogeneity_spread", data.synthetic.heterogeneity_spread),
      CDP_SIZE("data", "labeled_identities", data.synthetic.labeled_identities),

      CDP_SIZE("graph", "k", k),
      CDP_BOOL("graph", "write_csv", graph_csv),

      Field{"features", "blocks",
            [](PipelineConfig& c, const std::string& n, const std::string& v,
               const std::filesystem::path&) {
              try {
                c.blocks = parse_block_mask(v);
              } catch (const Error& e) {
                throw ConfigError(n + ": " + e.what());
              }
            },
            [](const PipelineConfig& c) { return block_mask_name(c.blocks); }},
      Field{"features", "committee",
            [](PipelineConfig& c, const std::string& n, const std::string& v,
               const std::filesystem::path&) {
              c.committee = v == "all" ? static_cast<std::size_t>(-1)
                                       : parse_integer<std::size_t>(n, v);
            },
            [](const PipelineConfig& c) {
              return c.committee == static_cast<std::size_t>(-1) ? std::string("all")
                                                                 : std::to_string(c.committee);
            }},

      CDP_REAL("train", "learning_rate", train.learning_rate),
      CDP_SIZE("train", "epochs", train.epochs),
      CDP_SIZE("train", "decay_after_epoch", train.decay_after_epoch),
      CDP_REAL("train", "lr_decay", train.lr_decay),
      CDP_SIZE("train", "batch_size", train.batch_size),
      CDP_REAL("train", "negative_keep_ratio", train.negative_keep_ratio),

      Field{"select", "method",
            [](PipelineConfig& c, const std::string& n, const std::string& v,
               const std::filesystem::path&) {
              if (v == "mediator")
                c.method = SelectMethod::mediator;
              else if (v == "voting")
                c.method = SelectMethod::voting;
              else
                throw ConfigError(n + ": expected mediator or voting, got '" + v + "'");
            },
            [](const PipelineConfig& c) {
              return std::string(c.method == SelectMethod::mediator ? "mediator" : "voting");
            }},
      CDP_REAL("select", "threshold", threshold),
      CDP_SIZE("select", "vote_quorum", vote_quorum),
      CDP_REAL("select", "vote_similarity_threshold", vote_similarity_threshold),

      CDP_SIZE("propagate", "max_size", propagation.max_size),
      CDP_REAL("propagate", "step", propagation.step),
      CDP_BOOL("propagate", "discard_singletons", propagation.discard_singletons),
      CDP_SIZE("propagate", "soft_depth", soft.depth),
      CDP_REAL("propagate", "soft_decay", soft.decay),

      Field{"evaluate", "cluster_threshold",
            [](PipelineConfig& c, const std::string& n, const std::string& v,
               const std::filesystem::path&) {
              if (v == "none")
                c.cluster_threshold.reset();
              else
                c.cluster_threshold = parse_real(n, v);
            },
            [](const PipelineConfig& c) {
              return c.cluster_threshold ? real(*c.cluster_threshold) : std::string("none");
            }},

      Field{"ablation", "committee_counts",
            [](PipelineConfig& c, const std::string& n, const std::string& v,
               const std::filesystem::path&) {
              c.ablation.committee_counts.clear();
              for (const auto& item : split_list(v, ','))
                c.ablation.committee_counts.push_back(parse_integer<std::size_t>(n, item));
            },
            [](const PipelineConfig& c) {
              return join<std::size_t>(c.ablation.committee_counts,
                                       [](const std::size_t& x) { return std::to_string(x); }, ",");
            }},
      Field{"ablation", "input_subsets",
            [](PipelineConfig& c, const std::string& n, const std::string& v,
               const std::filesystem::path&) {
              c.ablation.input_subsets.clear();
              for (const auto& item : split_list(v, ',')) {
                try {
                  c.ablation.input_subsets.push_back(parse_block_mask(item));
                } catch (const Error& e) {
                  throw ConfigError(n + ": " + e.what());
                }
              }
            },
            [](const PipelineConfig& c) {
              return join<unsigned>(c.ablation.input_subsets,
                                    [](const unsigned& b) { return block_mask_name(b); }, ",");
            }},
      Field{"ablation", "k_values",
            [](PipelineConfig& c, const std::string& n, const std::string& v,
               const std::filesystem::path&) {
              c.ablation.k_values.clear();
              for (const auto& item : split_list(v, ','))
                c.ablation.k_values.push_back(parse_integer<std::size_t>(n, item));
            },
            [](const PipelineConfig& c) {
              return join<std::size_t>(c.ablation.k_values,
                                       [](const std::size_t& x) { return std::to_string(x); }, ",");
            }},
      CDP_BOOL("ablation", "compare_heterogeneity", ablation.compare_heterogeneity),
      CDP_REAL("ablation", "cluster_threshold", ablation.cluster_threshold),
  };
  return table;
}

#undef CDP_SIZE
#undef CDP_REAL
#undef CDP_BOOL

}  // namespace

void PipelineConfig::validate() const {
  auto check = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError(what);
  };
  auto wrap = [](auto&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      throw ConfigError(e.what());
    }
  };
  check(workers >= 1, "run.workers: must be >= 1");
  if (data.source == DataSource::synthetic) {
    wrap([&] { data.synthetic.validate(); });
  } else {
    check(!data.base.empty(), "data.base: required when data.source = files");
    check(!data.labels.empty(), "data.labels: required when data.source = files");
    check(!data.split.empty(), "data.split: required when data.source = files");
  }
  check(k >= 1, "graph.k: must be >= 1");
  wrap([&] { train.validate(); });
  check(threshold >= 0.0 && threshold <= 1.0, "select.threshold: must lie in [0, 1]");
  check(vote_similarity_threshold >= -1.0 && vote_similarity_threshold <= 1.0,
        "select.vote_similarity_threshold: must lie in [-1, 1]");
  const std::size_t available = data.source == DataSource::synthetic
                                    ? data.synthetic.num_committee
                                    : data.committee.size();
  if (committee != static_cast<std::size_t>(-1))
    check(committee <= available, "features.committee: exceeds the number of committee views");
  const std::size_t used = std::min(committee, available);
  if (method == SelectMethod::voting && used > 0)
    check(vote_quorum <= used, "select.vote_quorum: exceeds the committee size");
  if (method == SelectMethod::mediator) check(used > 0 || blocks != kRelationship,
                                              "features.blocks: IR alone is empty without a committee");
  wrap([&] { propagation.validate(); });
  check(soft.decay > 0.0 && soft.decay <= 1.0, "propagate.soft_decay: must lie in (0, 1]");
  if (cluster_threshold)
    check(*cluster_threshold >= -1.0 && *cluster_threshold <= 1.0,
          "evaluate.cluster_threshold: must lie in [-1, 1]");
}

CdpParams PipelineConfig::params() const {
  CdpParams p;
  p.k = k;
  p.threshold = threshold;
  p.train = train;
  p.train.seed = derive_seed(seed, "train");
  p.propagation = propagation;
  p.blocks = blocks;
  p.committee = committee;
  p.vote_quorum = vote_quorum;
  p.vote_similarity_threshold = vote_similarity_threshold;
  p.workers = workers;
  return p;
}

SyntheticConfig PipelineConfig::synthetic() const {
  SyntheticConfig s = data.synthetic;
  s.seed = seed;
  return s;
}

AblationConfig PipelineConfig::ablation_config() const {
  AblationConfig a = ablation;
  a.data = synthetic();
  a.params = params();
  return a;
}

std::string PipelineConfig::canonical(const std::string& section) const {
  std::string out;
  for (const auto& f : fields()) {
    if (f.section != section) continue;
    const std::string value = f.get(*this);
    if (value.empty() && f.key == "workers") continue;
    out += section + "." + f.key + "=" + value + "\n";
  }
  return out;
}

PipelineConfig parse_config(const std::string& text, const std::filesystem::path& base_dir) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config syntax: ") + e.what());
  }

  PipelineConfig cfg;
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty())
      throw ConfigError("config: key '" + section + "' outside of any section");
    for (const auto& [key, node] : body) {
      const std::string name = section + "." + key;
      const Field* field = nullptr;
      for (const auto& f : fields())
        if (f.section == section && f.key == key) field = &f;
      if (!field) throw ConfigError("config: unknown key " + name);
      field->set(cfg, name, trim(node.data()), base_dir);
    }
  }
  return cfg;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file: " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), path.parent_path());
}

}  // namespace cdp::pipeline
