#include "slv/config.hpp"

#include "slv/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <system_error>

namespace slv {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <typename Int>
Int parse_int(const std::string& s) {
  Int x{};
  const char* end = s.data() + s.size();
  const auto r = std::from_chars(s.data(), end, x);
  if (s.empty() || r.ec != std::errc() || r.ptr != end)
    throw std::invalid_argument("expected an integer, got '" + s + "'");
  return x;
}

double parse_real(const std::string& s) {
  try {
    return io::parse_double(s);
  } catch (const std::exception&) {
    throw std::invalid_argument("expected a number, got '" + s + "'");
  }
}

double parse_finite(const std::string& s) {
  const double x = parse_real(s);
  if (!std::isfinite(x)) throw std::invalid_argument("expected a finite number, got '" + s + "'");
  return x;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string part;
  while (std::getline(ss, part, sep)) out.push_back(trim(part));
  return out;
}

std::vector<int> parse_int_list(const std::string& s, int dim, const char* what) {
  std::vector<int> out;
  for (const auto& p : split(s, ',')) out.push_back(parse_int<int>(p));
  if (static_cast<int>(out.size()) != dim)
    throw std::invalid_argument(std::string(what) + " needs " + std::to_string(dim) + " entries");
  return out;
}

std::vector<double> parse_real_list(const std::string& s, int dim, const char* what) {
  std::vector<double> out;
  for (const auto& p : split(s, ',')) out.push_back(parse_finite(p));
  if (static_cast<int>(out.size()) != dim)
    throw std::invalid_argument(std::string(what) + " needs " + std::to_string(dim) + " entries");
  return out;
}

template <typename T>
std::string join(const std::vector<T>& v, char sep) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += sep;
    if constexpr (std::is_same_v<T, double>)
      out += io::format_double(v[i]);
    else
      out += std::to_string(v[i]);
  }
  return out;
}

// Splits "kind k1=v1 k2=v2" into the kind and its parameters.
std::pair<std::string, std::map<std::string, std::string>> parse_spec(const std::string& value) {
  std::stringstream ss(value);
  std::string kind;
  ss >> kind;
  std::map<std::string, std::string> kv;
  std::string tok;
  while (ss >> tok) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos || eq == 0) throw std::invalid_argument("expected key=value, got '" + tok + "'");
    const auto key = tok.substr(0, eq);
    if (kv.count(key)) throw std::invalid_argument("parameter '" + key + "' given twice");
    kv[key] = tok.substr(eq + 1);
  }
  return {kind, kv};
}

void check_allowed(const std::map<std::string, std::string>& kv, std::initializer_list<const char*> allowed,
                   const std::string& kind) {
  for (const auto& [k, v] : kv) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || k == a;
    if (!ok) throw std::invalid_argument("unknown parameter '" + k + "' for " + kind);
  }
}

const std::string& require(const std::map<std::string, std::string>& kv, const char* key, const std::string& kind) {
  const auto it = kv.find(key);
  if (it == kv.end()) throw std::invalid_argument(kind + " needs " + key + "=");
  return it->second;
}

void check_mode(const std::vector<int>& k) {
  bool nonzero = false;
  for (int x : k) nonzero = nonzero || x != 0;
  if (!nonzero) throw std::invalid_argument("k must be a nonzero wavevector");
}

}  // namespace

IcConfig parse_ic(const std::string& value, int dim) {
  const auto [kind, kv] = parse_spec(value);
  IcConfig ic;
  if (kind == "zero") {
    check_allowed(kv, {}, kind);
  } else if (kind == "random") {
    check_allowed(kv, {"amp", "decay", "deg", "ufrac"}, kind);
    ic.kind = IcConfig::Kind::random;
    if (kv.count("amp")) ic.random.amp = parse_finite(kv.at("amp"));
    if (kv.count("decay")) ic.random.decay = parse_finite(kv.at("decay"));
    if (kv.count("deg")) ic.random.deg = parse_int<int>(kv.at("deg"));
    if (kv.count("ufrac")) ic.random.ufrac = parse_finite(kv.at("ufrac"));
    ic.random.validate();
  } else if (kind == "mode") {
    check_allowed(kv, {"k", "comp", "u", "v"}, kind);
    ic.kind = IcConfig::Kind::mode;
    ic.k = parse_int_list(require(kv, "k", kind), dim, "k");
    check_mode(ic.k);
    if (kv.count("comp")) ic.comp = parse_int<int>(kv.at("comp"));
    if (ic.comp < 0 || ic.comp >= dim) throw std::invalid_argument("comp must lie in [0, dim)");
    if (kv.count("u")) ic.u = parse_finite(kv.at("u"));
    if (kv.count("v")) ic.v = parse_finite(kv.at("v"));
  } else {
    throw std::invalid_argument("unknown ic kind '" + kind + "' (expected zero, random or mode)");
  }
  return ic;
}

ForceConfig parse_force(const std::string& value, int dim) {
  const auto [kind, kv] = parse_spec(value);
  ForceConfig f;
  if (kind == "zero") {
    check_allowed(kv, {}, kind);
  } else if (kind == "mode") {
    check_allowed(kv, {"k", "amp"}, kind);
    f.kind = ForceConfig::Kind::mode;
    f.k = parse_int_list(require(kv, "k", kind), dim, "k");
    check_mode(f.k);
    f.amp = parse_real_list(require(kv, "amp", kind), dim, "amp");
  } else if (kind == "manufactured") {
    check_allowed(kv, {"A", "omega"}, kind);
    f.kind = ForceConfig::Kind::manufactured;
    f.A = parse_finite(require(kv, "A", kind));
    f.omega = parse_finite(require(kv, "omega", kind));
    if (f.A < 0.0) throw std::invalid_argument("A must be nonnegative");
  } else if (kind == "tabulated") {
    check_allowed(kv, {"file"}, kind);
    f.kind = ForceConfig::Kind::tabulated;
    f.file = require(kv, "file", kind);
    if (f.file.empty()) throw std::invalid_argument("file must be nonempty");
  } else {
    throw std::invalid_argument("unknown force kind '" + kind +
                                "' (expected zero, mode, manufactured or tabulated)");
  }
  return f;
}

std::string to_string(const IcConfig& ic) {
  switch (ic.kind) {
    case IcConfig::Kind::zero:
      return "zero";
    case IcConfig::Kind::random:
      return "random amp=" + io::format_double(ic.random.amp) + " decay=" + io::format_double(ic.random.decay) +
             " deg=" + std::to_string(ic.random.deg) + " ufrac=" + io::format_double(ic.random.ufrac);
    case IcConfig::Kind::mode:
      return "mode k=" + join(ic.k, ',') + " comp=" + std::to_string(ic.comp) + " u=" + io::format_double(ic.u) +
             " v=" + io::format_double(ic.v);
  }
  return "zero";
}

std::string to_string(const ForceConfig& f) {
  switch (f.kind) {
    case ForceConfig::Kind::zero:
      return "zero";
    case ForceConfig::Kind::mode:
      return "mode k=" + join(f.k, ',') + " amp=" + join(f.amp, ',');
    case ForceConfig::Kind::manufactured:
      return "manufactured A=" + io::format_double(f.A) + " omega=" + io::format_double(f.omega);
    case ForceConfig::Kind::tabulated:
      return "tabulated file=" + f.file;
  }
  return "zero";
}

ConstitutiveParams RunConfig::params() const {
  ConstitutiveParams p;
  p.a = a;
  p.alpha = alpha;
  p.n = n;
  return p;
}

std::vector<int> RunConfig::effective_grid() const {
  if (!grid_shape.empty()) return grid_shape;
  int e = 1;
  while (e < 2 * (m + 1)) e *= 2;
  return std::vector<int>(static_cast<std::size_t>(dim), e);
}

namespace {

void check_dim(int dim) {
  if (dim != 2 && dim != 3) throw std::invalid_argument("dim must be 2 or 3");
}

void check_grid(const std::vector<int>& g, int dim, int m) {
  if (static_cast<int>(g.size()) != dim)
    throw std::invalid_argument("grid_shape needs " + std::to_string(dim) + " extents");
  for (int n : g) {
    if (n < 1 || (n & (n - 1)) != 0) throw std::invalid_argument("grid extent " + std::to_string(n) + " is not a power of two");
    if (n < 2 * (m + 1))
      throw std::invalid_argument("grid extent " + std::to_string(n) + " is below 2(m+1) = " + std::to_string(2 * (m + 1)));
  }
}

void check_cadence(double cadence, double dt) {
  if (!(cadence > 0.0)) throw std::invalid_argument("cadence must be positive");
  const double q = cadence / dt;
  if (std::abs(q - std::round(q)) > 1e-9 * std::max(1.0, q) || std::round(q) < 1.0)
    throw std::invalid_argument("cadence must be a positive integer multiple of dt");
}

}  // namespace

void RunConfig::validate() const {
  check_dim(dim);
  if (m < 1) throw ConfigError("m must be >= 1");
  if (!grid_shape.empty()) check_grid(grid_shape, dim, m);
  params().validate();
  if (!(T_final >= 0.0) || !std::isfinite(T_final)) throw ConfigError("T_final must be nonnegative");
  if (!(dt > 0.0) || !std::isfinite(dt)) throw ConfigError("dt must be positive");
  if (cadence) check_cadence(*cadence, dt);
  if (checkpoint_every < 0) throw ConfigError("checkpoint_every must be >= 0");
  if (out_dir.empty()) throw ConfigError("out_dir must be nonempty");
  if (ic.kind == IcConfig::Kind::mode && static_cast<int>(ic.k.size()) != dim)
    throw ConfigError("ic mode k needs dim entries");
  if (force.kind == ForceConfig::Kind::mode && static_cast<int>(force.k.size()) != dim)
    throw ConfigError("force mode k needs dim entries");
}

RunConfig parse_config(std::string_view text) {
  struct Entry {
    std::string value;
    int line;
  };
  std::map<std::string, Entry> entries;
  static const char* const known[] = {"dim", "m",      "grid_shape", "a",   "alpha", "n",       "T_final",
                                      "dt",  "method", "ic",         "force", "out_dir", "seed", "cadence",
                                      "checkpoint_every"};
  int lineno = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    const std::string_view raw = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++lineno;
    const auto hash = raw.find('#');
    const std::string line = trim(raw.substr(0, hash));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = "line " + std::to_string(lineno) + ": ";
    if (eq == std::string::npos) throw ConfigError(where + "expected 'key = value'");
    const std::string key = trim(std::string_view(line).substr(0, eq));
    const std::string value = trim(std::string_view(line).substr(eq + 1));
    bool ok = false;
    for (const char* k : known) ok = ok || key == k;
    if (!ok) throw ConfigError(where + "unknown key '" + key + "'");
    if (entries.count(key))
      throw ConfigError(where + "key '" + key + "' repeats line " + std::to_string(entries[key].line));
    entries[key] = {value, lineno};
  }

  for (const char* req : {"dim", "m", "a", "alpha", "n", "T_final", "dt"})
    if (!entries.count(req)) throw ConfigError(std::string("missing required key '") + req + "'");

  RunConfig c;
  auto with = [&](const char* key, auto&& apply) {
    const auto it = entries.find(key);
    if (it == entries.end()) return;
    try {
      apply(it->second.value);
    } catch (const std::exception& e) {
      throw ConfigError("line " + std::to_string(it->second.line) + ": " + key + ": " + e.what());
    }
  };
  with("dim", [&](const std::string& v) {
    c.dim = parse_int<int>(v);
    check_dim(c.dim);
  });
  with("m", [&](const std::string& v) {
    c.m = parse_int<int>(v);
    if (c.m < 1) throw std::invalid_argument("m must be >= 1");
  });
  with("grid_shape", [&](const std::string& v) {
    c.grid_shape.clear();
    for (const auto& p : split(v, 'x')) c.grid_shape.push_back(parse_int<int>(p));
    check_grid(c.grid_shape, c.dim, c.m);
  });
  with("a", [&](const std::string& v) {
    c.a = parse_real(v);
    if (!(c.a > 0.0) || !std::isfinite(c.a)) throw std::invalid_argument("a must be positive and finite");
  });
  with("alpha", [&](const std::string& v) {
    c.alpha = parse_real(v);
    if (!(c.alpha > 0.0) || !std::isfinite(c.alpha))
      throw std::invalid_argument("alpha must be positive and finite");
  });
  with("n", [&](const std::string& v) {
    if (v == "inf") {
      c.n.reset();
      return;
    }
    c.n = parse_int<long>(v);
    if (*c.n < 1) throw std::invalid_argument("n must be >= 1 or inf");
  });
  with("T_final", [&](const std::string& v) {
    c.T_final = parse_real(v);
    if (!(c.T_final >= 0.0) || !std::isfinite(c.T_final)) throw std::invalid_argument("T_final must be nonnegative");
  });
  with("dt", [&](const std::string& v) {
    c.dt = parse_real(v);
    if (!(c.dt > 0.0) || !std::isfinite(c.dt)) throw std::invalid_argument("dt must be positive");
  });
  with("method", [&](const std::string& v) { c.method = parse_method(v); });
  with("ic", [&](const std::string& v) { c.ic = parse_ic(v, c.dim); });
  with("force", [&](const std::string& v) { c.force = parse_force(v, c.dim); });
  with("out_dir", [&](const std::string& v) {
    if (v.empty()) throw std::invalid_argument("out_dir must be nonempty");
    c.out_dir = v;
  });
  with("seed", [&](const std::string& v) { c.seed = parse_int<std::uint64_t>(v); });
  with("cadence", [&](const std::string& v) {
    c.cadence = parse_real(v);
    check_cadence(*c.cadence, c.dt);
  });
  with("checkpoint_every", [&](const std::string& v) {
    c.checkpoint_every = parse_int<long>(v);
    if (c.checkpoint_every < 0) throw std::invalid_argument("checkpoint_every must be >= 0");
  });
  c.validate();
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string serialize(const RunConfig& c) {
  std::string out;
  auto kv = [&](const char* k, const std::string& v) { out += std::string(k) + " = " + v + "\n"; };
  kv("dim", std::to_string(c.dim));
  kv("m", std::to_string(c.m));
  if (!c.grid_shape.empty()) kv("grid_shape", join(c.grid_shape, 'x'));
  kv("a", io::format_double(c.a));
  kv("alpha", io::format_double(c.alpha));
  kv("n", c.n ? std::to_string(*c.n) : "inf");
  kv("T_final", io::format_double(c.T_final));
  kv("dt", io::format_double(c.dt));
  kv("method", to_string(c.method));
  kv("ic", to_string(c.ic));
  kv("force", to_string(c.force));
  kv("out_dir", c.out_dir);
  kv("seed", std::to_string(c.seed));
  if (c.cadence) kv("cadence", io::format_double(*c.cadence));
  kv("checkpoint_every", std::to_string(c.checkpoint_every));
  return out;
}

}  // namespace slv
