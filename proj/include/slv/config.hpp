#pragma once

#include "slv/constitutive.hpp"
#include "slv/solver.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace slv {

/// Parse or validation failure; the message names the offending line when
/// there is one.
class ConfigError : public std::invalid_argument {
 public:
  explicit ConfigError(const std::string& what) : std::invalid_argument(what) {}
};

/// `zero | random amp= decay= deg= ufrac= | mode k= comp= u= v=`
struct IcConfig {
  enum class Kind { zero, random, mode };
  Kind kind = Kind::zero;
  RandomIcSpec random;
  std::vector<int> k;  // mode: wavevector, one entry per axis
  int comp = 0;
  double u = 0.0;  // mode: u0 = u sin(2 pi k.x) e_comp
  double v = 0.0;  // mode: v0 = v sin(2 pi k.x) e_comp

  friend bool operator==(const IcConfig&, const IcConfig&) = default;
};

/// `zero | mode k= amp= | manufactured A= omega= | tabulated file=`
struct ForceConfig {
  enum class Kind { zero, mode, manufactured, tabulated };
  Kind kind = Kind::zero;
  std::vector<int> k;
  std::vector<double> amp;
  double A = 0.0;
  double omega = 0.0;
  std::string file;

  friend bool operator==(const ForceConfig&, const ForceConfig&) = default;
};

struct RunConfig {
  int dim = 2;
  int m = 1;
  std::vector<int> grid_shape;  // empty: default extent on every axis
  double a = 1.0;
  double alpha = 1.0;
  std::optional<long> n;  // nullopt: n = infinity
  double T_final = 0.0;
  double dt = 0.0;
  Method method = Method::rk4;
  IcConfig ic;
  ForceConfig force;
  std::string out_dir = "out";
  std::uint64_t seed = 0;
  std::optional<double> cadence;  // default 10 dt
  long checkpoint_every = 0;

  ConstitutiveParams params() const;
  double effective_cadence() const { return cadence.value_or(10.0 * dt); }
  /// Grid extents, filled with the default when grid_shape is empty.
  std::vector<int> effective_grid() const;
  void validate() const;

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

/// Parses `key = value` lines; `#` starts a comment. Required keys: dim, m,
/// a, alpha, n, T_final, dt.
RunConfig parse_config(std::string_view text);
RunConfig load_config(const std::filesystem::path& path);
/// Canonical text form; parse_config(serialize(c)) == c.
std::string serialize(const RunConfig& c);

std::string to_string(const IcConfig& ic);
std::string to_string(const ForceConfig& f);
IcConfig parse_ic(const std::string& value, int dim);
ForceConfig parse_force(const std::string& value, int dim);

}  // namespace slv
