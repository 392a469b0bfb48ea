#include "slv/io.hpp"

#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <system_error>

namespace slv::io {

std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  std::array<char, 64> buf{};
  const auto r = std::to_chars(buf.data(), buf.data() + buf.size(), x);
  return std::string(buf.data(), r.ptr);
}

double parse_double(const std::string& s) {
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  double x = 0.0;
  const char* end = s.data() + s.size();
  const auto r = std::from_chars(s.data(), end, x);
  if (r.ec != std::errc() || r.ptr != end) throw std::invalid_argument("not a number: '" + s + "'");
  return x;
}

std::string format_csv_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  std::array<char, 64> buf{};
  const auto r = std::to_chars(buf.data(), buf.data() + buf.size(), x, std::chars_format::general, 17);
  return std::string(buf.data(), r.ptr);
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

long parse_long(const std::string& s) {
  long x = 0;
  const char* end = s.data() + s.size();
  const auto r = std::from_chars(s.data(), end, x);
  if (r.ec != std::errc() || r.ptr != end) throw std::invalid_argument("not an integer: '" + s + "'");
  return x;
}

void put_le(std::ostream& out, double x) {
  const auto bits = std::bit_cast<std::uint64_t>(x);
  std::array<char, 8> b{};
  for (int i = 0; i < 8; ++i) b[static_cast<std::size_t>(i)] = static_cast<char>((bits >> (8 * i)) & 0xff);
  out.write(b.data(), 8);
}

double get_le(std::istream& in) {
  std::array<unsigned char, 8> b{};
  in.read(reinterpret_cast<char*>(b.data()), 8);
  if (in.gcount() != 8) throw std::runtime_error("snapshot payload is truncated");
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[static_cast<std::size_t>(i)]) << (8 * i);
  return std::bit_cast<double>(bits);
}

template <int Dim>
std::string format_shape(const typename SpectralConfig<Dim>::Shape& g) {
  std::string out;
  for (int a = 0; a < Dim; ++a) {
    if (a) out += 'x';
    out += std::to_string(g[a]);
  }
  return out;
}

template <int Dim>
typename SpectralConfig<Dim>::Shape parse_shape(const std::string& s) {
  typename SpectralConfig<Dim>::Shape g{};
  std::stringstream ss(s);
  std::string part;
  int a = 0;
  while (std::getline(ss, part, 'x')) {
    if (a >= Dim) throw std::invalid_argument("grid_shape has too many extents: " + s);
    g[a++] = static_cast<int>(parse_long(trim(part)));
  }
  if (a != Dim) throw std::invalid_argument("grid_shape has too few extents: " + s);
  return g;
}

}  // namespace

const std::string& SnapshotHeader::get(const std::string& key) const {
  for (const auto& [k, v] : entries)
    if (k == key) return v;
  throw std::runtime_error("snapshot header lacks key '" + key + "'");
}

int SnapshotHeader::dim() const { return static_cast<int>(parse_long(get("dim"))); }

SnapshotHeader read_header(std::istream& in) {
  std::string magic(kCheckpointMagic.size(), '\0');
  in.read(magic.data(), static_cast<std::streamsize>(magic.size()));
  SnapshotHeader h;
  if (magic == kCheckpointMagic)
    h.kind = SnapshotKind::checkpoint;
  else if (magic == kFinalMagic)
    h.kind = SnapshotKind::final_state;
  else
    throw std::runtime_error("not a snapshot file (bad magic)");
  std::string line;
  while (true) {
    if (!std::getline(in, line)) throw std::runtime_error("snapshot header is not terminated");
    if (line.empty()) break;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw std::runtime_error("malformed snapshot header line: " + line);
    h.entries.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return h;
}

SnapshotHeader read_header(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return read_header(in);
}

template <int Dim>
void write_state(std::ostream& out, const SolverState<Dim>& s, SnapshotKind kind) {
  const auto& cfg = s.basis().config();
  out << (kind == SnapshotKind::checkpoint ? kCheckpointMagic : kFinalMagic);
  out << "dim = " << Dim << '\n';
  out << "m = " << cfg.m << '\n';
  out << "grid_shape = " << format_shape<Dim>(cfg.grid) << '\n';
  out << "a = " << format_double(s.params.a) << '\n';
  out << "alpha = " << format_double(s.params.alpha) << '\n';
  out << "n = " << (s.params.n ? std::to_string(*s.params.n) : std::string("inf")) << '\n';
  out << "t = " << format_double(s.t) << '\n';
  out << "step_index = " << s.step_index << '\n';
  out << "coeff_rows = " << s.basis().coeff_rows() << '\n';
  const auto& acc = s.acc;
  out << "acc_dissipation = " << format_double(acc.dissipation) << '\n';
  out << "acc_power = " << format_double(acc.power) << '\n';
  out << "acc_T_L1 = " << format_double(acc.T_L1) << '\n';
  out << "acc_strain_rate_pow = " << format_double(acc.strain_rate_pow) << '\n';
  out << "acc_reg_L2sq = " << format_double(acc.reg_L2sq) << '\n';
  out << "acc_grad_dissipation = " << format_double(acc.grad_dissipation) << '\n';
  out << "acc_last_grad_density = " << format_double(acc.last_grad_density) << '\n';
  out << "acc_last_grad_step = " << acc.last_grad_step << '\n';
  out << '\n';
  for (const auto* f : {&s.u, &s.v}) {
    const auto& c = f->coeffs();
    for (Eigen::Index r = 0; r < c.rows(); ++r)
      for (int k = 0; k < Dim; ++k) put_le(out, c(r, k));
  }
  if (!out) throw std::runtime_error("snapshot write failed");
}

template <int Dim>
void write_state(const std::filesystem::path& path, const SolverState<Dim>& s, SnapshotKind kind) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot create " + path.string());
  write_state(out, s, kind);
  out.flush();
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

template <int Dim>
SolverState<Dim> read_state(std::istream& in, SnapshotKind* kind) {
  const SnapshotHeader h = read_header(in);
  if (kind) *kind = h.kind;
  if (h.dim() != Dim)
    throw std::runtime_error("snapshot has dim " + std::to_string(h.dim()) + ", expected " +
                             std::to_string(Dim));
  static const char* const known[] = {"dim",
                                      "m",
                                      "grid_shape",
                                      "a",
                                      "alpha",
                                      "n",
                                      "t",
                                      "step_index",
                                      "coeff_rows",
                                      "acc_dissipation",
                                      "acc_power",
                                      "acc_T_L1",
                                      "acc_strain_rate_pow",
                                      "acc_reg_L2sq",
                                      "acc_grad_dissipation",
                                      "acc_last_grad_density",
                                      "acc_last_grad_step"};
  for (const auto& [k, v] : h.entries) {
    bool ok = false;
    for (const char* name : known) ok = ok || k == name;
    if (!ok) throw std::runtime_error("unknown snapshot header key '" + k + "'");
  }
  const auto cfg = SpectralConfig<Dim>::make(static_cast<int>(parse_long(h.get("m"))),
                                             parse_shape<Dim>(h.get("grid_shape")));
  ConstitutiveParams p;
  p.a = parse_double(h.get("a"));
  p.alpha = parse_double(h.get("alpha"));
  const std::string& n = h.get("n");
  if (n != "inf") p.n = parse_long(n);
  p.validate();

  auto s = SolverState<Dim>::zero(make_basis(cfg), p);
  s.t = parse_double(h.get("t"));
  s.step_index = parse_long(h.get("step_index"));
  if (parse_long(h.get("coeff_rows")) != s.basis().coeff_rows())
    throw std::runtime_error("snapshot coeff_rows does not match its m");
  s.acc.dissipation = parse_double(h.get("acc_dissipation"));
  s.acc.power = parse_double(h.get("acc_power"));
  s.acc.T_L1 = parse_double(h.get("acc_T_L1"));
  s.acc.strain_rate_pow = parse_double(h.get("acc_strain_rate_pow"));
  s.acc.reg_L2sq = parse_double(h.get("acc_reg_L2sq"));
  s.acc.grad_dissipation = parse_double(h.get("acc_grad_dissipation"));
  s.acc.last_grad_density = parse_double(h.get("acc_last_grad_density"));
  s.acc.last_grad_step = parse_long(h.get("acc_last_grad_step"));
  for (auto* f : {&s.u, &s.v}) {
    auto& c = f->coeffs();
    for (Eigen::Index r = 0; r < c.rows(); ++r)
      for (int k = 0; k < Dim; ++k) c(r, k) = get_le(in);
  }
  if (in.peek() != std::char_traits<char>::eof()) throw std::runtime_error("snapshot has trailing bytes");
  return s;
}

template <int Dim>
SolverState<Dim> read_state(const std::filesystem::path& path, SnapshotKind* kind) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return read_state<Dim>(in, kind);
}

#define SLV_INSTANTIATE_IO(D)                                                                       \
  template void write_state<D>(std::ostream&, const SolverState<D>&, SnapshotKind);                 \
  template void write_state<D>(const std::filesystem::path&, const SolverState<D>&, SnapshotKind);  \
  template SolverState<D> read_state<D>(std::istream&, SnapshotKind*);                              \
  template SolverState<D> read_state<D>(const std::filesystem::path&, SnapshotKind*);

SLV_INSTANTIATE_IO(1)
SLV_INSTANTIATE_IO(2)
SLV_INSTANTIATE_IO(3)
#undef SLV_INSTANTIATE_IO

struct CsvWriter::Impl {
  std::ofstream out;
  std::filesystem::path path;
};

CsvWriter::CsvWriter(const std::filesystem::path& path, const std::string& header)
    : impl_(std::make_unique<Impl>()) {
  impl_->path = path;
  impl_->out.open(path, std::ios::trunc);
  if (!impl_->out) throw std::runtime_error("cannot create " + path.string());
  impl_->out << header << '\n';
  impl_->out.flush();
}

CsvWriter::CsvWriter() = default;
CsvWriter::~CsvWriter() = default;
CsvWriter::CsvWriter(CsvWriter&&) noexcept = default;
CsvWriter& CsvWriter::operator=(CsvWriter&&) noexcept = default;

bool CsvWriter::is_open() const { return impl_ && impl_->out.is_open(); }

void CsvWriter::row(const std::vector<double>& values) {
  std::vector<std::string> cells;
  cells.reserve(values.size());
  for (double v : values) cells.push_back(format_csv_double(v));
  row(cells);
}

void CsvWriter::row(const std::vector<std::string>& cells) {
  if (!is_open()) throw std::logic_error("CsvWriter is not open");
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) impl_->out << ',';
    impl_->out << cells[i];
  }
  impl_->out << '\n';
  impl_->out.flush();
  if (!impl_->out) throw std::runtime_error("write failed for " + impl_->path.string());
}

}  // namespace slv::io
