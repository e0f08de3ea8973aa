#include "tabql/csv.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <stdexcept>

#include "tabql/bridge_client.hpp"

namespace tabql {

namespace {

template <typename T>
T parse_integer(std::string_view text, std::size_t line_no) {
  T value{};
  const auto res = std::from_chars(text.data(), text.data() + text.size(), value);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw std::runtime_error("curve csv line " + std::to_string(line_no) + ": bad integer");
  }
  return value;
}

}  // namespace

void write_curve(std::ostream& out, const std::vector<CurveRow>& rows) {
  out << kCurveHeader << '\n';
  for (const auto& r : rows) {
    out << r.seed << ',' << r.episode << ',' << r.end_step << ',' << format_double(r.episode_return)
        << ',' << r.phase << '\n';
  }
}

std::vector<CurveRow> read_curve(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kCurveHeader) {
    throw std::runtime_error("curve csv: missing header '" + std::string(kCurveHeader) + "'");
  }
  std::vector<CurveRow> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != 5) throw std::runtime_error("curve csv line " + std::to_string(line_no) + ": expected 5 fields");
    CurveRow r;
    r.seed = parse_integer<std::uint64_t>(f[0], line_no);
    r.episode = parse_integer<std::size_t>(f[1], line_no);
    r.end_step = parse_integer<std::size_t>(f[2], line_no);
    const auto ret = parse_double(f[3]);
    if (!ret) throw std::runtime_error("curve csv line " + std::to_string(line_no) + ": bad return");
    r.episode_return = *ret;
    r.phase = std::string(f[4]);
    rows.push_back(std::move(r));
  }
  return rows;
}

std::vector<CurveRow> read_curve_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return read_curve(in);
}

void write_ledger_header(std::ostream& out) { out << kLedgerHeader << '\n'; }

void write_ledger_rows(std::ostream& out, std::uint64_t seed, const ErrorLedger& ledger) {
  for (std::size_t i = 0; i < ledger.size(); ++i) {
    out << seed << ',' << ledger.step[i] << ',' << format_double(ledger.eps_icl[i]) << ','
        << format_double(ledger.eps_stat[i]) << ',' << format_double(ledger.eps_label) << ','
        << ledger.m_min[i] << ',' << format_double(ledger.m_mean[i]) << ','
        << format_double(ledger.sup_error[i]) << ',' << format_double(ledger.theorem1_bound[i])
        << '\n';
  }
}

}  // namespace tabql
