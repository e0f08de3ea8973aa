#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "tabql/oracle.hpp"

namespace tabql {

inline constexpr const char* kCurveHeader = "seed,episode,end_step,return,phase";
inline constexpr const char* kLedgerHeader =
    "seed,step,eps_icl,eps_stat,eps_label,m_min,m_mean,sup_error,theorem1_rhs";

struct CurveRow {
  std::uint64_t seed = 0;
  std::size_t episode = 0;
  std::size_t end_step = 0;
  double episode_return = 0.0;
  std::string phase;
};

/// Header line plus one row per entry; floats in shortest round-trip form.
void write_curve(std::ostream& out, const std::vector<CurveRow>& rows);
/// Throws std::runtime_error naming the line on a malformed file.
std::vector<CurveRow> read_curve(std::istream& in);
std::vector<CurveRow> read_curve_file(const std::string& path);

void write_ledger_header(std::ostream& out);
void write_ledger_rows(std::ostream& out, std::uint64_t seed, const ErrorLedger& ledger);

}  // namespace tabql
