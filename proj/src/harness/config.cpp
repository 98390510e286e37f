#include "rws/harness/config.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include <boost/algorithm/string.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "rws/error.hpp"

namespace rws::harness {

namespace pt = boost::property_tree;

namespace {

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> parts;
  boost::split(parts, s, boost::is_any_of(","));
  std::vector<std::string> out;
  for (auto& p : parts) {
    boost::trim(p);
    if (!p.empty()) out.push_back(p);
  }
  return out;
}

template <class T>
T to_number(const std::string& key, const std::string& text) {
  std::istringstream in(text);
  T v{};
  if (!(in >> v) || !(in >> std::ws).eof())
    throw ConfigError("bad value '" + text + "' for " + key);
  if constexpr (std::is_unsigned_v<T>) {
    if (!text.empty() && text[0] == '-') throw ConfigError(key + " must be non-negative");
  }
  return v;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

est::ControlKind parse_control(const std::string& s) {
  if (s == "relax_mlp") return est::ControlKind::relax_mlp;
  if (s == "rebar") return est::ControlKind::rebar;
  throw ConfigError("unknown control variate '" + s + "'");
}

std::string control_name(est::ControlKind k) {
  return k == est::ControlKind::rebar ? "rebar" : "relax_mlp";
}

template <class T, class F>
std::string join(const std::vector<T>& v, F f) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + f(v[i]);
  return s;
}

// Reads known keys from one section and rejects the rest.
class Section {
 public:
  Section(const pt::ptree& root, const std::string& name) : name_(name) {
    if (auto child = root.get_child_optional(name)) tree_ = *child;
  }
  ~Section() = default;

  bool has(const std::string& key) {
    seen_.insert(key);
    return tree_.count(key) > 0;
  }
  std::string text(const std::string& key) { return tree_.get<std::string>(key); }
  template <class T>
  void number(const std::string& key, T& out) {
    if (has(key)) out = to_number<T>(name_ + "." + key, text(key));
  }
  void finish() const {
    for (const auto& [key, value] : tree_)
      if (!seen_.contains(key)) throw ConfigError("unknown key " + name_ + "." + key);
  }

 private:
  std::string name_;
  pt::ptree tree_;
  std::set<std::string> seen_;
};

}  // namespace

Benchmark parse_benchmark(std::string_view name) {
  if (name == "gmm") return Benchmark::gmm;
  if (name == "pcfg") return Benchmark::pcfg;
  throw ConfigError("unknown benchmark '" + std::string(name) + "'");
}

std::string_view benchmark_name(Benchmark b) { return b == Benchmark::gmm ? "gmm" : "pcfg"; }

gmm::GmmConfig ExperimentConfig::gmm_cell(Method m, std::size_t K, std::uint64_t seed) const {
  gmm::GmmConfig c = gmm;
  c.method = m;
  c.K = K;
  c.seed = seed;
  return c;
}

pcfg::PcfgConfig ExperimentConfig::pcfg_cell(Method m, std::size_t K, std::uint64_t seed) const {
  pcfg::PcfgConfig c = pcfg;
  c.method = m;
  c.K = K;
  c.seed = seed;
  return c;
}

void ExperimentConfig::validate() const {
  if (methods.empty()) throw ConfigError("no methods");
  if (Ks.empty()) throw ConfigError("no K values");
  if (seeds.empty()) throw ConfigError("no seeds");
  if (workers < 1) throw ConfigError("workers must be at least 1");
  if (out_dir.empty()) throw ConfigError("empty output directory");
  for (Method m : methods)
    for (std::size_t K : Ks) {
      if (benchmark == Benchmark::gmm) gmm_cell(m, K, 0).validate();
      else pcfg_cell(m, K, 0).validate();
    }
  if (benchmark == Benchmark::pcfg && posterior_samples < 1)
    throw ConfigError("posterior_samples must be at least 1");
}

ExperimentConfig parse_config(std::string_view ini) {
  pt::ptree root;
  std::istringstream in{std::string(ini)};
  try {
    pt::read_ini(in, root);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  for (const auto& [section, child] : root) {
    if (section != "experiment" && section != "gmm" && section != "pcfg" && section != "adam")
      throw ConfigError("unknown section [" + section + "]");
    if (!child.data().empty()) throw ConfigError("key '" + section + "' outside any section");
  }
  ExperimentConfig c;
  Section e(root, "experiment");
  if (e.has("benchmark")) c.benchmark = parse_benchmark(e.text("benchmark"));
  if (e.has("methods")) {
    c.methods.clear();
    for (const auto& m : split_list(e.text("methods"))) c.methods.push_back(parse_method(m));
  }
  if (e.has("K")) {
    c.Ks.clear();
    for (const auto& k : split_list(e.text("K"))) c.Ks.push_back(to_number<std::size_t>("experiment.K", k));
  }
  if (e.has("seeds")) {
    c.seeds.clear();
    for (const auto& s : split_list(e.text("seeds")))
      c.seeds.push_back(to_number<std::uint64_t>("experiment.seeds", s));
  }
  if (e.has("out_dir")) c.out_dir = e.text("out_dir");
  e.number("workers", c.workers);
  e.finish();

  Section g(root, "gmm");
  g.number("iterations", c.gmm.iterations);
  g.number("C", c.gmm.C);
  g.number("batch", c.gmm.batch);
  g.number("delta", c.gmm.delta);
  if (g.has("init")) c.gmm.init = gmm::parse_init_mode(g.text("init"));
  g.number("temperature_start", c.gmm.temperature_start);
  g.number("temperature_end", c.gmm.temperature_end);
  g.number("cadence", c.gmm.cadence);
  g.number("test_points", c.gmm.test_points);
  g.number("grad_std_repeats", c.gmm.grad_std_repeats);
  if (g.has("control")) c.gmm.control = parse_control(g.text("control"));
  g.finish();

  Section p(root, "pcfg");
  p.number("iterations", c.pcfg.iterations);
  p.number("wallclock_cap_s", c.pcfg.wallclock_cap_s);
  p.number("batch", c.pcfg.batch);
  p.number("max_expansions", c.pcfg.max_expansions);
  p.number("cadence", c.pcfg.cadence);
  p.number("metric_samples", c.pcfg.metric_samples);
  p.number("corpus_size", c.pcfg.corpus_size);
  if (p.has("grammar")) c.grammar = p.text("grammar");
  if (p.has("posterior_sentence")) c.posterior_sentence = p.text("posterior_sentence");
  p.number("posterior_samples", c.posterior_samples);
  p.finish();

  Section a(root, "adam");
  optim::AdamConfig adam;
  a.number("lr", adam.lr);
  a.number("beta1", adam.beta1);
  a.number("beta2", adam.beta2);
  a.number("eps", adam.eps);
  a.finish();
  c.gmm.adam = c.pcfg.adam = adam;

  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string serialize(const ExperimentConfig& c) {
  std::ostringstream o;
  auto u = [](auto v) { return std::to_string(v); };
  o << "[experiment]\n"
    << "benchmark = " << benchmark_name(c.benchmark) << "\n"
    << "methods = " << join(c.methods, [](Method m) { return std::string(method_name(m)); }) << "\n"
    << "K = " << join(c.Ks, u) << "\n"
    << "seeds = " << join(c.seeds, u) << "\n"
    << "out_dir = " << c.out_dir.string() << "\n"
    << "workers = " << c.workers << "\n\n";
  const auto& g = c.gmm;
  o << "[gmm]\n"
    << "iterations = " << g.iterations << "\n"
    << "C = " << g.C << "\n"
    << "batch = " << g.batch << "\n"
    << "delta = " << fmt(g.delta) << "\n"
    << "init = " << gmm::init_mode_name(g.init) << "\n"
    << "temperature_start = " << fmt(g.temperature_start) << "\n"
    << "temperature_end = " << fmt(g.temperature_end) << "\n"
    << "cadence = " << g.cadence << "\n"
    << "test_points = " << g.test_points << "\n"
    << "grad_std_repeats = " << g.grad_std_repeats << "\n"
    << "control = " << control_name(g.control) << "\n\n";
  const auto& p = c.pcfg;
  o << "[pcfg]\n"
    << "iterations = " << p.iterations << "\n"
    << "wallclock_cap_s = " << fmt(p.wallclock_cap_s) << "\n"
    << "batch = " << p.batch << "\n"
    << "max_expansions = " << p.max_expansions << "\n"
    << "cadence = " << p.cadence << "\n"
    << "metric_samples = " << p.metric_samples << "\n"
    << "corpus_size = " << p.corpus_size << "\n"
    << "grammar = " << c.grammar << "\n"
    << "posterior_sentence = " << c.posterior_sentence << "\n"
    << "posterior_samples = " << c.posterior_samples << "\n\n";
  o << "[adam]\n"
    << "lr = " << fmt(g.adam.lr) << "\n"
    << "beta1 = " << fmt(g.adam.beta1) << "\n"
    << "beta2 = " << fmt(g.adam.beta2) << "\n"
    << "eps = " << fmt(g.adam.eps) << "\n";
  return o.str();
}

std::string config_hash(const ExperimentConfig& c) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(hash_string(serialize(c))));
  return buf;
}

}  // namespace rws::harness
