#pragma once

#include "slv/state.hpp"

#include <filesystem>
#include <iosfwd>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

namespace slv::io {

/// Binary field snapshots.
///
/// Layout: the magic line, then `key = value` header lines ending with a
/// blank line, then little-endian IEEE-754 doubles: every u coefficient, then
/// every v coefficient. Coefficients are ordered by mode (the basis mode
/// table), cosine row before sine row, components innermost.
enum class SnapshotKind { checkpoint, final_state };

inline constexpr std::string_view kCheckpointMagic = "SLVC1\n";
inline constexpr std::string_view kFinalMagic = "SLVF1\n";

/// Shortest decimal form that reads back to the same double.
std::string format_double(double x);
/// Inverse of format_double; also accepts "inf", "-inf" and "nan".
double parse_double(const std::string& s);
/// 17 significant digits, '.' decimal point, independent of the locale.
std::string format_csv_double(double x);

struct SnapshotHeader {
  SnapshotKind kind = SnapshotKind::checkpoint;
  std::vector<std::pair<std::string, std::string>> entries;

  const std::string& get(const std::string& key) const;
  int dim() const;
};

/// Reads the magic and the header block, leaving the stream at the payload.
SnapshotHeader read_header(std::istream& in);
SnapshotHeader read_header(const std::filesystem::path& path);

template <int Dim>
void write_state(std::ostream& out, const SolverState<Dim>& s, SnapshotKind kind);
template <int Dim>
void write_state(const std::filesystem::path& path, const SolverState<Dim>& s, SnapshotKind kind);

template <int Dim>
SolverState<Dim> read_state(std::istream& in, SnapshotKind* kind = nullptr);
template <int Dim>
SolverState<Dim> read_state(const std::filesystem::path& path, SnapshotKind* kind = nullptr);

/// Line-oriented CSV writer that flushes every row.
class CsvWriter {
 public:
  CsvWriter();
  CsvWriter(const std::filesystem::path& path, const std::string& header);
  ~CsvWriter();
  CsvWriter(CsvWriter&&) noexcept;
  CsvWriter& operator=(CsvWriter&&) noexcept;

  void row(const std::vector<double>& values);
  void row(const std::vector<std::string>& cells);
  bool is_open() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace slv::io
