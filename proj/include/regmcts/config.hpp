#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/format.h>

#include "regmcts/agent.hpp"
#include "regmcts/simplex.hpp"

namespace regmcts {

class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/**
 * Experiment settings, read from a flat INI file (no sections). Every key
 * has a default; unknown keys are rejected. Lists are comma separated and
 * integer lists accept inclusive ranges ("0-19").
 */
struct RunConfig {
  std::vector<std::uint64_t> seeds = range(0, 19);
  int n_sim = 1000;                        ///< track: simulations per root
  std::vector<int> n_sims = {2, 5, 50};    ///< sweep: budgets
  std::vector<int> actions = {10};         ///< track / bound / props: |A|
  std::string prior = "uniform";           ///< track: uniform | random
  double c = 1.25;
  DivergenceKind divergence = DivergenceKind::kReverseKL;
  std::vector<VariantFlags> variants = {VariantFlags::baseline(), VariantFlags::act(),
                                        VariantFlags::search(), VariantFlags::learn(),
                                        VariantFlags::all()};
  std::string env = "chain";               ///< sweep: chain | bandit | factorized
  int episodes = 500;
  int chain_length = 10;
  double discount = 0.95;
  int horizon = 0;                         ///< chain episode cap; 0 means 2 * length
  double learning_rate = 0.1;
  bool normalize_for_solver = true;
  int rounds = 10000;                      ///< bound: rounds per run
  std::string selector = "greedy";         ///< bound: greedy | violating
  std::string target = "random";           ///< bound: random | uniform
  int instances = 10000;                   ///< props: instances per property and kind
  int dims = 2;
  int bins = 5;
  double coupling = 0.0;                   ///< factorized bandit coupling scale

  static std::vector<std::uint64_t> range(std::uint64_t lo, std::uint64_t hi) {
    std::vector<std::uint64_t> v;
    for (std::uint64_t s = lo; s <= hi; ++s) v.push_back(s);
    return v;
  }

  [[nodiscard]] AgentConfig agent(const VariantFlags& flags, int budget) const {
    AgentConfig a;
    a.flags = flags;
    a.n_sim = budget;
    a.solver.c = c;
    a.solver.kind = divergence;
    a.learning_rate = learning_rate;
    a.normalize_for_solver = normalize_for_solver;
    return a;
  }

  void set(const std::string& key, const std::string& value);
  void validate() const;

  static RunConfig from_ini_stream(std::istream& in, const std::string& origin = "<stream>");
  static RunConfig from_file(const std::string& path);
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= value.size()) {
    const std::size_t comma = value.find(',', start);
    const std::string item =
        trim(std::string_view(value).substr(start, comma == std::string::npos ? value.npos
                                                                              : comma - start));
    if (!item.empty()) out.push_back(item);
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

template <class T>
T parse_number(const std::string& key, const std::string& text) {
  try {
    std::size_t used = 0;
    T value{};
    if constexpr (std::is_same_v<T, double>) {
      value = std::stod(text, &used);
    } else if constexpr (std::is_same_v<T, std::uint64_t>) {
      if (!text.empty() && text[0] == '-') throw std::invalid_argument("negative");
      value = std::stoull(text, &used);
    } else {
      value = static_cast<T>(std::stoll(text, &used));
    }
    if (used != text.size()) throw std::invalid_argument("trailing characters");
    return value;
  } catch (const std::exception&) {
    throw ConfigError(fmt::format("config key '{}': cannot parse '{}' as a number", key, text));
  }
}

template <class T>
std::vector<T> parse_int_list(const std::string& key, const std::string& value) {
  std::vector<T> out;
  for (const std::string& item : split_list(value)) {
    const std::size_t dash = item.find('-', 1);
    if (dash != std::string::npos) {
      const T lo = parse_number<T>(key, trim(item.substr(0, dash)));
      const T hi = parse_number<T>(key, trim(item.substr(dash + 1)));
      if (hi < lo) throw ConfigError(fmt::format("config key '{}': empty range '{}'", key, item));
      for (T x = lo; x <= hi; ++x) out.push_back(x);
    } else {
      out.push_back(parse_number<T>(key, item));
    }
  }
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw ConfigError(fmt::format("config key '{}': expected a boolean, got '{}'", key, value));
}

}  // namespace detail

inline void RunConfig::set(const std::string& key, const std::string& raw) {
  using namespace detail;
  const std::string value = trim(raw);
  try {
    if (key == "seeds") seeds = parse_int_list<std::uint64_t>(key, value);
    else if (key == "n_sim") n_sim = parse_number<int>(key, value);
    else if (key == "n_sims") n_sims = parse_int_list<int>(key, value);
    else if (key == "actions") actions = parse_int_list<int>(key, value);
    else if (key == "prior") prior = value;
    else if (key == "c") c = parse_number<double>(key, value);
    else if (key == "divergence") divergence = parse_divergence_kind(value);
    else if (key == "variants") {
      variants.clear();
      for (const std::string& v : split_list(value)) variants.push_back(parse_variant(v));
    } else if (key == "env") env = value;
    else if (key == "episodes") episodes = parse_number<int>(key, value);
    else if (key == "chain_length") chain_length = parse_number<int>(key, value);
    else if (key == "discount") discount = parse_number<double>(key, value);
    else if (key == "horizon") horizon = parse_number<int>(key, value);
    else if (key == "learning_rate") learning_rate = parse_number<double>(key, value);
    else if (key == "normalize_for_solver") normalize_for_solver = parse_bool(key, value);
    else if (key == "rounds") rounds = parse_number<int>(key, value);
    else if (key == "selector") selector = value;
    else if (key == "target") target = value;
    else if (key == "instances") instances = parse_number<int>(key, value);
    else if (key == "dims") dims = parse_number<int>(key, value);
    else if (key == "bins") bins = parse_number<int>(key, value);
    else if (key == "coupling") coupling = parse_number<double>(key, value);
    else throw ConfigError(fmt::format("unknown config key '{}'", key));
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(fmt::format("config key '{}': {}", key, e.what()));
  }
}

inline void RunConfig::validate() const {
  auto fail = [](std::string_view msg) { throw ConfigError(std::string(msg)); };
  if (n_sim < 1) fail("n_sim must be >= 1");
  for (int n : n_sims) {
    if (n < 1) fail("n_sims entries must be >= 1");
  }
  for (int a : actions) {
    if (a < 1) fail("actions entries must be >= 1");
  }
  if (prior != "uniform" && prior != "random") fail("prior must be uniform or random");
  if (!(c > 0.0)) fail("c must be > 0");
  if (env != "chain" && env != "bandit" && env != "factorized") {
    fail("env must be chain, bandit or factorized");
  }
  if (episodes < 0) fail("episodes must be >= 0");
  if (chain_length < 1) fail("chain_length must be >= 1");
  if (!(discount > 0.0 && discount <= 1.0)) fail("discount must lie in (0, 1]");
  if (horizon < 0) fail("horizon must be >= 0");
  if (!(learning_rate > 0.0)) fail("learning_rate must be > 0");
  if (rounds < 0) fail("rounds must be >= 0");
  if (selector != "greedy" && selector != "violating") fail("selector must be greedy or violating");
  if (target != "random" && target != "uniform") fail("target must be random or uniform");
  if (instances < 0) fail("instances must be >= 0");
  if (dims < 1 || bins < 1) fail("dims and bins must be >= 1");
  if (!(coupling >= 0.0)) fail("coupling must be >= 0");
}

inline RunConfig RunConfig::from_ini_stream(std::istream& in, const std::string& origin) {
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(fmt::format("{}: {}", origin, e.message()));
  }
  RunConfig cfg;
  for (const auto& [key, node] : tree) {
    if (!node.empty()) {
      throw ConfigError(fmt::format("{}: sections are not supported ('[{}]')", origin, key));
    }
    cfg.set(key, node.data());
  }
  cfg.validate();
  return cfg;
}

inline RunConfig RunConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot open config '{}'", path));
  return from_ini_stream(in, path);
}

}  // namespace regmcts
