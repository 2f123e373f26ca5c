#include "ignn/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "ignn/error.hpp"
#include "ignn/rng.hpp"

namespace ignn {
namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream in(line);
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

std::string where(const std::filesystem::path& file, std::size_t line) {
  return file.string() + ":" + std::to_string(line);
}

std::size_t parse_index(const std::string& tok, const std::filesystem::path& file,
                        std::size_t line) {
  std::size_t v = 0;
  const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size()) {
    throw ParseError(where(file, line) + ": expected a non-negative integer, got '" + tok + "'");
  }
  return v;
}

double parse_real(const std::string& tok, const std::filesystem::path& file, std::size_t line) {
  try {
    std::size_t used = 0;
    const double v = std::stod(tok, &used);
    if (used != tok.size() || !std::isfinite(v)) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw ParseError(where(file, line) + ": expected a real number, got '" + tok + "'");
  }
}

std::ifstream open_input(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw IoError("cannot open " + p.string());
  return in;
}

std::ofstream open_output(const std::filesystem::path& p) {
  std::ofstream out(p);
  if (!out) throw IoError("cannot write " + p.string());
  out.precision(17);
  return out;
}

bool skip_line(const std::string& line) {
  const auto first = line.find_first_not_of(" \t\r");
  return first == std::string::npos || line[first] == '#';
}

/// Index into a cumulative weight table.
std::size_t sample_cumulative(const std::vector<double>& cumulative, Rng& rng) {
  const double u = rng.uniform() * cumulative.back();
  const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
  return std::min<std::size_t>(static_cast<std::size_t>(it - cumulative.begin()),
                               cumulative.size() - 1);
}

}  // namespace

std::size_t Dataset::num_edges() const {
  std::size_t self = 0;
  for (std::size_t r = 0; r < graph.n(); ++r)
    if (graph.at(r, r) != 0.0) ++self;
  return (graph.nnz() - self) / 2 + self;
}

void Dataset::validate() const {
  const std::size_t n = num_nodes();
  if (features.rows() != n) {
    throw ShapeError("dataset: " + std::to_string(features.rows()) + " feature rows for " +
                     std::to_string(n) + " nodes");
  }
  if (labels.size() != n) {
    throw ShapeError("dataset: " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(n) + " nodes");
  }
  for (std::size_t l : labels)
    if (l >= num_classes) throw DomainError("dataset: label " + std::to_string(l) + " out of range");
  std::vector<char> seen(n, 0);
  for (const auto* split : {&splits.train, &splits.val, &splits.test}) {
    for (std::size_t i : *split) {
      if (i >= n) throw DomainError("dataset: split index " + std::to_string(i) + " out of range");
      if (seen[i]) throw DomainError("dataset: node " + std::to_string(i) + " in two splits");
      seen[i] = 1;
    }
  }
}

Dataset load_dataset(const std::filesystem::path& edges_path,
                     const std::filesystem::path& features_path,
                     const std::filesystem::path& labels_path,
                     const std::filesystem::path& splits_path) {
  Dataset data;
  data.name = edges_path.parent_path().filename().string();

  // Features define the node count: line number = node id.
  std::vector<double> feats;
  std::size_t n = 0, d = 0;
  {
    auto in = open_input(features_path);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (skip_line(line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
          throw ParseError(where(features_path, lineno) + ": empty feature row");
        }
        continue;
      }
      const auto fields = split_fields(line);
      if (n == 0) d = fields.size();
      if (fields.size() != d) {
        throw ParseError(where(features_path, lineno) + ": ragged feature row (" +
                         std::to_string(fields.size()) + " values, expected " +
                         std::to_string(d) + ")");
      }
      for (const auto& f : fields) feats.push_back(parse_real(f, features_path, lineno));
      ++n;
    }
  }
  data.features = Matrix(n, d, std::move(feats));

  std::vector<Edge> edges;
  {
    auto in = open_input(edges_path);
    std::map<std::pair<std::size_t, std::size_t>, double> seen;
    std::set<std::pair<std::size_t, std::size_t>> lines_seen;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (skip_line(line)) continue;
      const auto fields = split_fields(line);
      if (fields.size() < 2 || fields.size() > 3) {
        throw ParseError(where(edges_path, lineno) + ": expected 'src dst [weight]'");
      }
      const std::size_t u = parse_index(fields[0], edges_path, lineno);
      const std::size_t v = parse_index(fields[1], edges_path, lineno);
      const double w = fields.size() == 3 ? parse_real(fields[2], edges_path, lineno) : 1.0;
      if (u >= n || v >= n) {
        throw ParseError(where(edges_path, lineno) + ": node index out of range (n = " +
                         std::to_string(n) + ")");
      }
      if (!lines_seen.insert({u, v}).second) {
        throw ParseError(where(edges_path, lineno) + ": duplicate edge " + std::to_string(u) +
                         " " + std::to_string(v));
      }
      const auto key = std::minmax(u, v);
      const auto it = seen.find(key);
      if (it != seen.end()) {
        // Reverse direction of an edge already listed.
        if (it->second != w) {
          throw ParseError(where(edges_path, lineno) + ": edge listed twice with different weights");
        }
        continue;
      }
      seen.emplace(key, w);
      edges.push_back(Edge{u, v, w});
    }
  }
  data.graph = SparseGraph::undirected(n, edges);

  {
    auto in = open_input(labels_path);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (skip_line(line)) continue;
      const auto fields = split_fields(line);
      if (fields.size() != 1) throw ParseError(where(labels_path, lineno) + ": expected one label");
      std::size_t label = 0;
      try {
        label = parse_index(fields[0], labels_path, lineno);
      } catch (const ParseError&) {
        throw ParseError(where(labels_path, lineno) + ": unknown label '" + fields[0] + "'");
      }
      data.labels.push_back(label);
    }
    if (data.labels.size() != n) {
      throw ParseError(labels_path.string() + ": " + std::to_string(data.labels.size()) +
                       " labels for " + std::to_string(n) + " nodes");
    }
    for (std::size_t l : data.labels) data.num_classes = std::max(data.num_classes, l + 1);
  }

  {
    auto in = open_input(splits_path);
    std::string line;
    std::size_t lineno = 0;
    std::set<std::string> found;
    while (std::getline(in, line)) {
      ++lineno;
      if (skip_line(line)) continue;
      const auto colon = line.find(':');
      if (colon == std::string::npos) {
        throw ParseError(where(splits_path, lineno) + ": expected 'train:', 'val:' or 'test:'");
      }
      const auto fields = split_fields(line.substr(0, colon));
      const std::string key = fields.empty() ? "" : fields[0];
      std::vector<std::size_t>* target = key == "train" ? &data.splits.train
                                         : key == "val" ? &data.splits.val
                                         : key == "test" ? &data.splits.test
                                                         : nullptr;
      if (!target || fields.size() != 1) {
        throw ParseError(where(splits_path, lineno) + ": unknown split '" + key + "'");
      }
      if (!found.insert(key).second) {
        throw ParseError(where(splits_path, lineno) + ": split '" + key + "' repeated");
      }
      for (const auto& tok : split_fields(line.substr(colon + 1))) {
        const std::size_t idx = parse_index(tok, splits_path, lineno);
        if (idx >= n) {
          throw ParseError(where(splits_path, lineno) + ": node index " + tok + " out of range");
        }
        target->push_back(idx);
      }
    }
    if (found.size() != 3) throw ParseError(splits_path.string() + ": needs train, val and test lines");
  }

  try {
    data.validate();
  } catch (const Error& e) {
    throw ParseError(splits_path.string() + ": " + e.what());
  }
  return data;
}

Dataset load_dataset(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw IoError("dataset directory not found: " + dir.string());
  Dataset d = load_dataset(dir / kEdgesFile, dir / kFeaturesFile, dir / kLabelsFile, dir / kSplitsFile);
  d.name = dir.filename().string();
  return d;
}

void save_dataset(const Dataset& data, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  {
    auto out = open_output(dir / kEdgesFile);
    out << "# src\tdst\tweight\n";
    for (const Edge& e : data.graph.entries())
      if (e.row <= e.col) out << e.row << '\t' << e.col << '\t' << e.weight << '\n';
  }
  {
    auto out = open_output(dir / kFeaturesFile);
    for (std::size_t i = 0; i < data.features.rows(); ++i) {
      auto row = data.features.row(i);
      for (std::size_t j = 0; j < row.size(); ++j) out << (j ? "\t" : "") << row[j];
      out << '\n';
    }
  }
  {
    auto out = open_output(dir / kLabelsFile);
    for (std::size_t l : data.labels) out << l << '\n';
  }
  {
    auto out = open_output(dir / kSplitsFile);
    auto write = [&out](const char* name, const std::vector<std::size_t>& idx) {
      out << name << ':';
      for (std::size_t i : idx) out << ' ' << i;
      out << '\n';
    };
    write("train", data.splits.train);
    write("val", data.splits.val);
    write("test", data.splits.test);
  }
  if (!std::filesystem::exists(dir / kSplitsFile)) throw IoError("failed writing " + dir.string());
}

Dataset synth_chain(std::size_t num_chains, std::size_t chain_len, std::size_t d,
                    std::uint64_t seed) {
  if (num_chains == 0) throw DomainError("synth_chain: need at least one chain");
  if (chain_len < 2) throw DomainError("synth_chain: chain_len must be >= 2");
  if (d < 2) throw DomainError("synth_chain: need at least two feature columns");
  Rng rng(seed);

  // Balanced bits, shuffled.
  std::vector<std::size_t> bits(num_chains);
  for (std::size_t c = 0; c < num_chains; ++c) bits[c] = c % 2;
  for (std::size_t c = num_chains; c-- > 1;) std::swap(bits[c], bits[rng.below(c + 1)]);

  const std::size_t n = num_chains * chain_len;
  Dataset data;
  data.name = "chain";
  data.features = Matrix(n, d);
  data.labels.resize(n);
  data.num_classes = 2;
  std::vector<Edge> edges;
  for (std::size_t c = 0; c < num_chains; ++c) {
    for (std::size_t j = 0; j < chain_len; ++j) {
      const std::size_t node = c * chain_len + j;
      data.labels[node] = bits[c];
      if (j == 0) {
        data.features(node, 0) = bits[c] ? 1.0 : -1.0;
        data.features(node, 1) = 1.0;
      }
      // Label-free noise on the remaining columns.
      for (std::size_t f = 2; f < d; ++f) data.features(node, f) = rng.uniform(-0.05, 0.05);
      if (j + 1 < chain_len) edges.push_back(Edge{node, node + 1, 1.0});

      if (j % 2 == 0) {
        data.splits.train.push_back(node);
      } else if (c % 4 == 3) {
        data.splits.val.push_back(node);
      } else {
        data.splits.test.push_back(node);
      }
    }
  }
  data.graph = SparseGraph::undirected(n, edges);
  data.validate();
  return data;
}

Dataset synth_citeseer(std::uint64_t seed, const CiteseerLikeOptions& opt) {
  if (opt.classes < 2 || opt.nodes < opt.classes || opt.features < opt.classes) {
    throw DomainError("synth_citeseer: degenerate size options");
  }
  Rng rng(seed);
  const std::size_t n = opt.nodes, c = opt.classes, d = opt.features;

  Dataset data;
  data.name = "citeseer-synth";
  data.num_classes = c;
  data.labels.resize(n);
  std::vector<std::vector<std::size_t>> members(c);
  for (std::size_t i = 0; i < n; ++i) {
    // Uneven class sizes, roughly as in citation data.
    const double u = rng.uniform();
    std::size_t label = static_cast<std::size_t>(std::floor(std::pow(u, 1.3) * static_cast<double>(c)));
    label = std::min(label, c - 1);
    data.labels[i] = label;
    members[label].push_back(i);
  }
  for (std::size_t k = 0; k < c; ++k)
    if (members[k].size() < opt.train_per_class + 2) throw DomainError("synth_citeseer: class too small");

  // Heavy-tailed activity weights drive the degree distribution.
  std::vector<double> activity(n);
  for (double& a : activity) a = std::exp(1.1 * rng.normal());
  std::vector<double> all_cum(n);
  std::partial_sum(activity.begin(), activity.end(), all_cum.begin());
  std::vector<std::vector<double>> class_cum(c);
  for (std::size_t k = 0; k < c; ++k) {
    double acc = 0.0;
    for (std::size_t i : members[k]) class_cum[k].push_back(acc += activity[i]);
  }

  std::set<std::pair<std::size_t, std::size_t>> pairs;
  std::vector<Edge> edges;
  std::size_t guard = 0;
  while (edges.size() < opt.edges) {
    if (++guard > 100 * opt.edges) throw DomainError("synth_citeseer: cannot place edges");
    const std::size_t u = sample_cumulative(all_cum, rng);
    std::size_t v = 0;
    if (rng.uniform() < opt.homophily) {
      const std::size_t k = data.labels[u];
      v = members[k][sample_cumulative(class_cum[k], rng)];
    } else {
      std::size_t k = rng.below(c - 1);
      if (k >= data.labels[u]) ++k;
      v = members[k][sample_cumulative(class_cum[k], rng)];
    }
    if (u == v) continue;
    if (!pairs.insert(std::minmax(u, v)).second) continue;
    edges.push_back(Edge{std::min(u, v), std::max(u, v), 1.0});
  }
  data.graph = SparseGraph::undirected(n, edges);

  // Each class owns a block of topic words; documents draw most words from
  // their class block and the rest from the whole vocabulary.
  data.features = Matrix(n, d);
  const std::size_t block = d / c;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t k = data.labels[i];
    for (std::size_t w = 0; w < opt.words_per_node; ++w) {
      std::size_t word = 0;
      if (rng.uniform() < opt.topic_focus) {
        word = k * block + rng.below(block);
      } else {
        word = rng.below(d);
      }
      data.features(i, word) = 1.0;
    }
  }

  // Planetoid-style split: a fixed number of training nodes per class.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = n; i-- > 1;) std::swap(order[i], order[rng.below(i + 1)]);
  std::vector<std::size_t> taken(c, 0);
  std::vector<std::size_t> rest;
  for (std::size_t i : order) {
    if (taken[data.labels[i]] < opt.train_per_class) {
      ++taken[data.labels[i]];
      data.splits.train.push_back(i);
    } else {
      rest.push_back(i);
    }
  }
  if (rest.size() < opt.val + opt.test) throw DomainError("synth_citeseer: not enough nodes for splits");
  data.splits.val.assign(rest.begin(), rest.begin() + static_cast<std::ptrdiff_t>(opt.val));
  data.splits.test.assign(rest.begin() + static_cast<std::ptrdiff_t>(opt.val),
                          rest.begin() + static_cast<std::ptrdiff_t>(opt.val + opt.test));
  for (auto* s : {&data.splits.train, &data.splits.val, &data.splits.test}) std::sort(s->begin(), s->end());
  data.validate();
  return data;
}

Dataset open_dataset(const std::string& spec, std::uint64_t seed) {
  if (spec == "synth:citeseer") return synth_citeseer(seed);
  if (spec.rfind("synth:chain", 0) == 0) {
    std::vector<std::size_t> args{4, 6, 8};
    std::istringstream in(spec.substr(std::string("synth:chain").size()));
    std::string tok;
    std::size_t i = 0;
    while (std::getline(in, tok, ':')) {
      if (tok.empty()) continue;
      if (i >= args.size()) throw ConfigError("dataset spec '" + spec + "': too many fields");
      std::size_t v = 0;
      const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
      if (ec != std::errc() || ptr != tok.data() + tok.size()) {
        throw ConfigError("dataset spec '" + spec + "': bad number '" + tok + "'");
      }
      args[i++] = v;
    }
    return synth_chain(args[0], args[1], args[2], seed);
  }
  if (spec.rfind("synth:", 0) == 0) throw ConfigError("unknown synthetic dataset '" + spec + "'");
  return load_dataset(std::filesystem::path(spec));
}

}  // namespace ignn
