#include "dgm/config.hpp"

#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

namespace dgm {

namespace {

struct Entry {
  std::string key;
  std::function<std::string(const RunConfig &)> get;
  std::function<void(RunConfig &, const std::string &)> set;
};

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string trim(const std::string &s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string &key, const std::string &v) {
  std::size_t used = 0;
  double d = 0;
  try {
    d = std::stod(v, &used);
  } catch (const std::exception &) {
    used = 0;
  }
  if (used == 0 || used != v.size()) throw Error("config " + key + ": expected a number, got '" + v + "'");
  return d;
}

long long to_int(const std::string &key, const std::string &v) {
  std::size_t used = 0;
  long long d = 0;
  try {
    d = std::stoll(v, &used);
  } catch (const std::exception &) {
    used = 0;
  }
  if (used == 0 || used != v.size()) throw Error("config " + key + ": expected an integer, got '" + v + "'");
  return d;
}

bool to_bool(const std::string &key, const std::string &v) {
  if (v == "1" || v == "true") return true;
  if (v == "0" || v == "false") return false;
  throw Error("config " + key + ": expected true or false, got '" + v + "'");
}

template <typename F>
Entry dbl(std::string key, F field) {
  return {key, [field](const RunConfig &c) { return fmt_double(field(const_cast<RunConfig &>(c))); },
          [field, key](RunConfig &c, const std::string &v) { field(c) = to_double(key, v); }};
}

template <typename F>
Entry integer(std::string key, F field) {
  return {key, [field](const RunConfig &c) { return std::to_string(field(const_cast<RunConfig &>(c))); },
          [field, key](RunConfig &c, const std::string &v) {
            field(c) = static_cast<std::remove_reference_t<decltype(field(c))>>(to_int(key, v));
          }};
}

template <typename F>
Entry boolean(std::string key, F field) {
  return {key, [field](const RunConfig &c) { return std::string(field(const_cast<RunConfig &>(c)) ? "true" : "false"); },
          [field, key](RunConfig &c, const std::string &v) { field(c) = to_bool(key, v); }};
}

std::string format_stops(const std::vector<std::pair<int, int>> &stops) {
  std::string s;
  for (const auto &[inst, len] : stops) s += (s.empty() ? "" : ",") + std::to_string(inst) + ":" + std::to_string(len);
  return s;
}

std::vector<std::pair<int, int>> parse_stops(const std::string &key, const std::string &v) {
  std::vector<std::pair<int, int>> out;
  std::istringstream is(v);
  std::string item;
  while (std::getline(is, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    const auto colon = item.find(':');
    if (colon == std::string::npos) throw Error("config " + key + ": expected instance:length pairs");
    out.emplace_back(static_cast<int>(to_int(key, item.substr(0, colon))),
                     static_cast<int>(to_int(key, item.substr(colon + 1))));
  }
  return out;
}

const std::vector<Entry> &registry() {
  static const std::vector<Entry> entries = [] {
    std::vector<Entry> e;
#define FIELD(expr) [](RunConfig &c) -> auto & { return c.expr; }
    e.push_back(integer("train.eta", FIELD(train.eta)));
    e.push_back(integer("train.beta", FIELD(train.beta)));
    e.push_back(integer("train.init_steps", FIELD(train.init_steps)));
    e.push_back(integer("train.target_count", FIELD(train.target_count)));
    e.push_back(integer("train.k_max", FIELD(train.k_max)));
    e.push_back({"train.instance_stop",
                 [](const RunConfig &c) { return format_stops(c.train.instance_stop); },
                 [](RunConfig &c, const std::string &v) {
                   c.train.instance_stop = parse_stops("train.instance_stop", v);
                 }});
    e.push_back(integer("train.seed", FIELD(train.seed)));
    e.push_back(integer("train.track_window", FIELD(train.track_window)));
    e.push_back(integer("train.track_k", FIELD(train.track_k)));
    e.push_back(integer("train.iso_neighbors", FIELD(train.iso_neighbors)));
    e.push_back(integer("train.iso_samples", FIELD(train.iso_samples)));
    e.push_back(dbl("train.prune_opacity", FIELD(train.prune_opacity)));
    e.push_back(dbl("train.prune_scale", FIELD(train.prune_scale)));
    e.push_back(dbl("loss.tracking", FIELD(train.weights.tracking)));
    e.push_back(dbl("loss.photometric", FIELD(train.weights.photometric)));
    e.push_back(dbl("loss.depth", FIELD(train.weights.depth)));
    e.push_back(dbl("loss.segmentation", FIELD(train.weights.segmentation)));
    e.push_back(dbl("loss.iso_local", FIELD(train.weights.iso_local)));
    e.push_back(dbl("loss.iso_instance", FIELD(train.weights.iso_instance)));
    e.push_back(dbl("loss.tv_depth", FIELD(train.weights.tv_depth)));
    e.push_back(dbl("loss.chamfer", FIELD(train.weights.chamfer)));
    e.push_back(dbl("optim.lr_mu", FIELD(train.optim.lr.mu)));
    e.push_back(dbl("optim.lr_delta_x", FIELD(train.optim.lr.delta_x)));
    e.push_back(dbl("optim.lr_scale", FIELD(train.optim.lr.log_scale)));
    e.push_back(dbl("optim.lr_color", FIELD(train.optim.lr.color)));
    e.push_back(dbl("optim.lr_opacity", FIELD(train.optim.lr.opacity)));
    e.push_back(dbl("optim.beta1", FIELD(train.optim.beta1)));
    e.push_back(dbl("optim.beta2", FIELD(train.optim.beta2)));
    e.push_back(dbl("optim.eps", FIELD(train.optim.eps)));
    e.push_back(dbl("optim.min_scale", FIELD(train.optim.min_scale)));
    e.push_back(dbl("optim.lr_decay", FIELD(train.optim.lr_decay)));
    e.push_back(integer("render.tile_size", FIELD(train.render.tile_size)));
    e.push_back(dbl("render.cutoff_sigma", FIELD(train.render.cutoff_sigma)));
    e.push_back(dbl("render.min_transmittance", FIELD(train.render.min_transmittance)));
    e.push_back(dbl("render.cov_floor", FIELD(train.render.cov_floor)));
    e.push_back(dbl("render.near_plane", FIELD(train.render.near_plane)));
    e.push_back(integer("render.num_labels", FIELD(train.render.num_labels)));
    e.push_back(integer("init.outlier_neighbors", FIELD(train.init.outlier_neighbors)));
    e.push_back(dbl("init.outlier_std_ratio", FIELD(train.init.outlier_std_ratio)));
    e.push_back(integer("init.scale_neighbors", FIELD(train.init.scale_neighbors)));
    e.push_back(dbl("init.opacity", FIELD(train.init.init_opacity)));
    e.push_back(boolean("init.allow_undershoot", FIELD(train.init.allow_undershoot)));
    e.push_back(dbl("eval.pck_threshold", FIELD(eval.pck_threshold)));
    e.push_back(integer("eval.pck_k", FIELD(eval.pck_k)));
    e.push_back(integer("eval.isotropy_iterations", FIELD(eval.isotropy_iterations)));
    e.push_back(integer("eval.isotropy_marbles", FIELD(eval.isotropy_marbles)));
    e.push_back(integer("run.threads", FIELD(threads)));
#undef FIELD
    return e;
  }();
  return entries;
}

const Entry &find(const std::string &key) {
  for (const Entry &e : registry())
    if (e.key == key) return e;
  throw Error("unknown config key '" + key + "'");
}

}  // namespace

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const Entry &e : registry()) keys.push_back(e.key);
  return keys;
}

std::string get_config_value(const RunConfig &config, const std::string &key) {
  return find(key).get(config);
}

void set_config_value(RunConfig &config, const std::string &key, const std::string &value) {
  find(key).set(config, trim(value));
}

std::string format_config(const RunConfig &config) {
  std::string s;
  for (const Entry &e : registry()) s += e.key + "=" + e.get(config) + "\n";
  return s;
}

void apply_config_text(RunConfig &config, const std::string &text, const std::string &source) {
  std::istringstream in(text);
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw Error(source + ":" + std::to_string(n) + ": expected key=value");
    try {
      set_config_value(config, trim(line.substr(0, eq)), line.substr(eq + 1));
    } catch (const Error &e) {
      throw Error(source + ":" + std::to_string(n) + ": " + e.what());
    }
  }
}

void apply_config_file(RunConfig &config, const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  apply_config_text(config, ss.str(), path.string());
}

std::uint64_t fnv1a(std::string_view data, std::uint64_t h) {
  for (unsigned char c : data) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace dgm
