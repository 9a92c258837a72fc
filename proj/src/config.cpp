#include "esiii/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "esiii/error.hpp"

namespace esiii {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad(const std::string& key, const std::string& value, const std::string& why) {
  throw ConfigError("config key '" + key + "': " + why + " (got '" + value + "')");
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const char* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end || value.empty()) bad(key, value, "malformed number");
  return out;
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(value, &pos);
    if (pos != value.size()) bad(key, value, "malformed number");
    return v;
  } catch (const std::logic_error&) {
    bad(key, value, "malformed number");
  }
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  bad(key, value, "expected true or false");
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> out;
  std::stringstream ss(value);
  for (std::string item; std::getline(ss, item, ',');)
    if (!trim(item).empty()) out.push_back(trim(item));
  return out;
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <typename T>
std::string join(const std::vector<T>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out.push_back(',');
    if constexpr (std::is_same_v<T, std::string>)
      out += v[i];
    else if constexpr (std::is_same_v<T, Setting>)
      out += to_string(v[i]);
    else
      out += std::to_string(v[i]);
  }
  return out;
}

struct Field {
  std::function<void(RunConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename T>
Field str_field(T RunConfig::*section, std::string T::*member) {
  return {[=](RunConfig& c, const std::string&, const std::string& v) { (c.*section).*member = v; },
          [=](const RunConfig& c) { return (c.*section).*member; }};
}

const std::map<std::string, Field>& fields() {
  static const std::map<std::string, Field> kFields = [] {
    std::map<std::string, Field> f;
    using P = RunConfig::Paths;
    f["paths.checkpoint"] = str_field(&RunConfig::paths, &P::checkpoint);
    f["paths.shield"] = str_field(&RunConfig::paths, &P::shield);
    f["paths.benchmark_dir"] = str_field(&RunConfig::paths, &P::benchmark_dir);
    f["paths.report_dir"] = str_field(&RunConfig::paths, &P::report_dir);
    f["paths.corpus"] = str_field(&RunConfig::paths, &P::corpus);
    f["paths.vocab"] = str_field(&RunConfig::paths, &P::vocab);

    auto count = [](auto getter) {
      return Field{[getter](RunConfig& c, const std::string& k, const std::string& v) {
                     const auto n = parse_number<std::size_t>(k, v);
                     if (n < 1) bad(k, v, "must be >= 1");
                     getter(c) = n;
                   },
                   [getter](const RunConfig& c) { return std::to_string(getter(const_cast<RunConfig&>(c))); }};
    };
    auto seed = [](auto getter) {
      return Field{[getter](RunConfig& c, const std::string& k, const std::string& v) {
                     getter(c) = parse_number<std::uint64_t>(k, v);
                   },
                   [getter](const RunConfig& c) { return std::to_string(getter(const_cast<RunConfig&>(c))); }};
    };
    auto integer = [](auto getter, int lo) {
      return Field{[getter, lo](RunConfig& c, const std::string& k, const std::string& v) {
                     const int n = parse_number<int>(k, v);
                     if (n < lo) bad(k, v, "must be >= " + std::to_string(lo));
                     getter(c) = n;
                   },
                   [getter](const RunConfig& c) { return std::to_string(getter(const_cast<RunConfig&>(c))); }};
    };
    auto real = [](auto getter, auto check, const char* why) {
      return Field{[getter, check, why](RunConfig& c, const std::string& k, const std::string& v) {
                     const double x = parse_double(k, v);
                     if (!check(x)) bad(k, v, why);
                     getter(c) = x;
                   },
                   [getter](const RunConfig& c) { return fmt_double(getter(const_cast<RunConfig&>(c))); }};
    };
    const auto positive = [](double x) { return x > 0 && std::isfinite(x); };
    const auto unit = [](double x) { return x > 0 && x <= 1; };
    const auto fraction = [](double x) { return x >= 0 && x <= 1; };
    const auto nonneg = [](double x) { return x >= 0 && std::isfinite(x); };

    f["bench.harmful"] = count([](RunConfig& c) -> auto& { return c.bench.harmful; });
    f["bench.benign"] = count([](RunConfig& c) -> auto& { return c.bench.benign; });
    f["bench.text_attack"] = count([](RunConfig& c) -> auto& { return c.bench.text_attack; });
    f["bench.seed"] = seed([](RunConfig& c) -> auto& { return c.bench.seed; });

    f["train.steps"] = integer([](RunConfig& c) -> auto& { return c.train.config.steps; }, 0);
    f["train.batch_size"] = integer([](RunConfig& c) -> auto& { return c.train.config.batch_size; }, 1);
    f["train.learning_rate"] =
        real([](RunConfig& c) -> auto& { return c.train.config.learning_rate; }, positive, "must be > 0");
    f["train.warmup_steps"] = integer([](RunConfig& c) -> auto& { return c.train.config.warmup_steps; }, 1);
    f["train.min_lr_fraction"] =
        real([](RunConfig& c) -> auto& { return c.train.config.min_lr_fraction; }, fraction, "must be in [0, 1]");
    f["train.grad_clip"] =
        real([](RunConfig& c) -> auto& { return c.train.config.grad_clip; }, positive, "must be > 0");
    f["train.prompt_loss_weight"] =
        real([](RunConfig& c) -> auto& { return c.train.config.prompt_loss_weight; }, nonneg, "must be >= 0");
    f["train.log_every"] = integer([](RunConfig& c) -> auto& { return c.train.config.log_every; }, 0);
    f["train.data_size"] = count([](RunConfig& c) -> auto& { return c.train.data_size; });
    f["train.seed"] = seed([](RunConfig& c) -> auto& { return c.train.seed; });

    f["pgd.epsilon"] = real([](RunConfig& c) -> auto& { return c.pgd.epsilon; }, unit, "must be in (0, 1]");
    f["pgd.eta"] = real([](RunConfig& c) -> auto& { return c.pgd.eta; }, positive, "must be > 0");
    f["pgd.max_iters"] = integer([](RunConfig& c) -> auto& { return c.pgd.max_iters; }, 0);
    f["pgd.use_sign_step"] = {
        [](RunConfig& c, const std::string& k, const std::string& v) { c.pgd.use_sign_step = parse_bool(k, v); },
        [](const RunConfig& c) { return std::string(c.pgd.use_sign_step ? "true" : "false"); }};
    f["pgd.init_mode"] = {[](RunConfig& c, const std::string& k, const std::string& v) {
                            try {
                              c.pgd.init_mode = parse_init_mode(v);
                            } catch (const Error&) {
                              bad(k, v, "expected black or mid_gray");
                            }
                          },
                          [](const RunConfig& c) { return to_string(c.pgd.init_mode); }};
    f["pgd.seed"] = seed([](RunConfig& c) -> auto& { return c.pgd.seed; });

    f["eval.settings"] = {[](RunConfig& c, const std::string& k, const std::string& v) {
                            std::vector<Setting> s;
                            for (const auto& item : split_list(v)) {
                              try {
                                s.push_back(parse_setting(item));
                              } catch (const Error&) {
                                bad(k, v, "unknown setting '" + item + "'");
                              }
                            }
                            if (s.empty()) bad(k, v, "at least one setting required");
                            c.eval.settings = std::move(s);
                          },
                          [](const RunConfig& c) { return join(c.eval.settings); }};
    f["eval.k"] = integer([](RunConfig& c) -> auto& { return c.eval.k; }, 0);
    f["eval.seed"] = seed([](RunConfig& c) -> auto& { return c.eval.seed; });
    f["eval.max_len"] = integer([](RunConfig& c) -> auto& { return c.eval.max_len; }, 1);
    f["eval.judge"] = str_field(&RunConfig::eval, &RunConfig::Eval::judge);
    f["eval.sweep_k"] = {[](RunConfig& c, const std::string& k, const std::string& v) {
                           std::vector<int> ks;
                           for (const auto& item : split_list(v)) {
                             const int n = parse_number<int>(k, item);
                             if (n < 0) bad(k, v, "k values must be >= 0");
                             ks.push_back(n);
                           }
                           c.eval.sweep_k = std::move(ks);
                         },
                         [](const RunConfig& c) { return join(c.eval.sweep_k); }};
    f["eval.transfer_checkpoints"] = {
        [](RunConfig& c, const std::string&, const std::string& v) { c.eval.transfer_checkpoints = split_list(v); },
        [](const RunConfig& c) { return join(c.eval.transfer_checkpoints); }};
    f["eval.transfer_shields"] = {
        [](RunConfig& c, const std::string&, const std::string& v) { c.eval.transfer_shields = split_list(v); },
        [](const RunConfig& c) { return join(c.eval.transfer_shields); }};

    f["attack.epsilon_att"] =
        real([](RunConfig& c) -> auto& { return c.attack.epsilon_att; }, unit, "must be in (0, 1]");
    f["attack.steps"] = integer([](RunConfig& c) -> auto& { return c.attack.steps; }, 0);
    f["attack.eta_att"] = real([](RunConfig& c) -> auto& { return c.attack.eta_att; }, positive, "must be > 0");
    f["attack.target_string"] = str_field(&RunConfig::attack, &AttackConfig::target_string);
    return f;
  }();
  return kFields;
}

void apply_text(RunConfig& cfg, const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::size_t lineno = 0;
  for (std::string line; std::getline(in, line);) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key=value, got '" + t + "'");
    set_config_value(cfg, trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
  }
}

}  // namespace

EvalOptions RunConfig::eval_options() const {
  EvalOptions o;
  o.k = eval.k;
  o.seed = eval.seed;
  o.max_len = eval.max_len;
  o.judge = eval.judge;
  return o;
}

void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value) {
  const auto it = fields().find(key);
  if (it == fields().end()) throw ConfigError("unknown config key '" + key + "'");
  it->second.set(cfg, key, value);
}

RunConfig parse_config_text(const std::string& text, const std::vector<Override>& overrides) {
  RunConfig cfg;
  apply_text(cfg, text, "config");
  for (const auto& [k, v] : overrides) set_config_value(cfg, k, v);
  return cfg;
}

RunConfig parse_config(const std::optional<std::filesystem::path>& path, const std::vector<Override>& overrides) {
  std::string text;
  if (path) {
    std::ifstream in(*path);
    if (!in) throw IoError("cannot read config file: " + path->string());
    std::stringstream ss;
    ss << in.rdbuf();
    text = ss.str();
  }
  RunConfig cfg;
  apply_text(cfg, text, path ? path->string() : "config");
  for (const auto& [k, v] : overrides) set_config_value(cfg, k, v);
  return cfg;
}

std::string render_config(const RunConfig& cfg) {
  std::string out;
  for (const auto& [key, field] : fields()) out += key + "=" + field.get(cfg) + "\n";
  return out;
}

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& [key, _] : fields()) out.push_back(key);
  return out;
}

}  // namespace esiii
