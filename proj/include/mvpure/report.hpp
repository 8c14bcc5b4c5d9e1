#pragma once

// CSV artifacts of an experiment (errors, p-values, ranks, summary), dense
// matrix CSV, and optional SVG bar charts of the error summaries.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "mvpure/config.hpp"
#include "mvpure/errors.hpp"
#include "mvpure/harness.hpp"
#include "mvpure/matcore.hpp"

namespace mvpure {

namespace detail {

// Shortest representation that round-trips; keeps CSVs diff-friendly.
inline std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  const std::string long_form = os.str();
  for (int p = 6; p < 17; ++p) {
    std::ostringstream s;
    s << std::setprecision(p) << v;
    if (std::stod(s.str()) == v) return s.str();
  }
  return long_form;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace detail

inline void write_errors_csv(std::ostream& os, const std::vector<ErrorRow>& rows) {
  os << "run_id,snr_db,index,iteration,error_mm\n";
  for (const ErrorRow& r : rows)
    os << r.run_id << ',' << detail::fmt(r.snr_db) << ',' << to_string(r.family) << ',' << r.iteration << ','
       << detail::fmt(r.error_mm) << '\n';
}

inline std::vector<ErrorRow> read_errors_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || detail::trim(line) != "run_id,snr_db,index,iteration,error_mm")
    throw ConfigError("errors.csv: missing or unexpected header");
  std::vector<ErrorRow> rows;
  std::size_t n = 1;
  while (std::getline(is, line)) {
    ++n;
    if (detail::trim(line).empty()) continue;
    const auto cells = detail::split_csv_line(line);
    const std::string at = "errors.csv line " + std::to_string(n);
    if (cells.size() != 5) throw ConfigError(at + ": expected 5 fields");
    ErrorRow r;
    r.run_id = static_cast<Index>(detail::parse_int(cells[0], at));
    r.snr_db = detail::parse_double(cells[1], at);
    const auto f = parse_family(cells[2]);
    if (!f) throw ConfigError(at + ": unknown index '" + cells[2] + "'");
    r.family = *f;
    r.iteration = static_cast<Index>(detail::parse_int(cells[3], at));
    r.error_mm = detail::parse_double(cells[4], at);
    if (r.iteration < 1) throw ConfigError(at + ": iteration must be at least 1");
    rows.push_back(r);
  }
  if (rows.empty()) throw ConfigError("errors.csv: no data rows");
  return rows;
}

inline void write_pvalues_csv(std::ostream& os, const std::vector<PValueRow>& rows) {
  os << "scope,snr_db,hypothesis,n_a,n_b,median_a,median_b,u,method,p_value\n";
  for (const PValueRow& r : rows)
    os << to_string(r.scope) << ',' << detail::fmt(r.snr_db) << ',' << to_string(r.a) << '>' << to_string(r.b) << ','
       << r.n_a << ',' << r.n_b << ',' << detail::fmt(r.median_a) << ',' << detail::fmt(r.median_b) << ','
       << detail::fmt(r.test.u) << ','
       << (r.test.all_tied ? "all_tied" : r.test.exact ? "exact_midp" : "normal") << ','
       << detail::fmt(r.test.p_value) << '\n';
}

inline void write_ranks_csv(std::ostream& os, const RankHistogram& h) {
  os << "snr_db,rank,count\n";
  for (const auto& [snr, counts] : h)
    for (const auto& [rank, count] : counts) os << detail::fmt(snr) << ',' << rank << ',' << count << '\n';
}

inline void write_summary_csv(std::ostream& os, const std::vector<ErrorSummary>& rows) {
  os << "scope,snr_db,index,n,mean_mm,std_mm,median_mm\n";
  for (const ErrorSummary& s : rows)
    os << to_string(s.scope) << ',' << detail::fmt(s.snr_db) << ',' << to_string(s.family) << ',' << s.n << ','
       << detail::fmt(s.mean) << ',' << detail::fmt(s.std) << ',' << detail::fmt(s.median) << '\n';
}

/// Per-run metadata: selected rank, achieved SNR and any recorded failure.
inline void write_runs_csv(std::ostream& os, const std::vector<RunRecord>& records) {
  os << "run_id,snr_db,snr_achieved,r_selected,theta0,error\n";
  for (const RunRecord& r : records) {
    std::string theta;
    for (std::size_t k = 0; k < r.theta0.size(); ++k) theta += (k ? " " : "") + std::to_string(r.theta0[k]);
    std::string err = r.error;
    std::replace(err.begin(), err.end(), ',', ';');
    std::replace(err.begin(), err.end(), '\n', ' ');
    os << r.run_id << ',' << detail::fmt(r.snr_db) << ',' << detail::fmt(r.snr_achieved) << ',' << r.r_selected
       << ',' << theta << ',' << err << '\n';
  }
}

inline void write_matrix_csv(std::ostream& os, const Matrix& a) {
  os << std::setprecision(17);
  for (Index i = 0; i < a.rows(); ++i) {
    for (Index j = 0; j < a.cols(); ++j) os << (j ? "," : "") << a(i, j);
    os << '\n';
  }
}

inline Matrix read_matrix_csv(std::istream& is, const std::string& name = "matrix") {
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t n = 0;
  while (std::getline(is, line)) {
    ++n;
    if (detail::trim(line).empty()) continue;
    std::vector<double> row;
    for (const std::string& c : detail::split_csv_line(line))
      row.push_back(detail::parse_double(c, name + " line " + std::to_string(n)));
    if (!rows.empty() && row.size() != rows.front().size())
      throw ConfigError(name + " line " + std::to_string(n) + ": ragged row");
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ConfigError(name + ": empty matrix");
  Matrix a(static_cast<Index>(rows.size()), static_cast<Index>(rows.front().size()));
  for (Index i = 0; i < a.rows(); ++i)
    for (Index j = 0; j < a.cols(); ++j) a(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  return a;
}

inline Matrix load_matrix_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  return read_matrix_csv(in, path);
}

// --- SVG ------------------------------------------------------------------

/// Grouped bar chart: one group per SNR level, one bar per index, with
/// standard-deviation whiskers.
inline void write_error_svg(std::ostream& os, const std::vector<ErrorSummary>& rows, const std::string& title) {
  std::vector<double> snrs;
  std::vector<IndexFamily> fams;
  double top = 1.0;
  for (const ErrorSummary& s : rows) {
    if (std::find(snrs.begin(), snrs.end(), s.snr_db) == snrs.end()) snrs.push_back(s.snr_db);
    if (std::find(fams.begin(), fams.end(), s.family) == fams.end()) fams.push_back(s.family);
    top = std::max(top, s.mean + s.std);
  }
  static const char* colors[] = {"#4477aa", "#ee6677", "#228833", "#ccbb44", "#66ccee", "#aa3377"};
  const double w = 720, h = 360, left = 60, bottom = 40, right = 150, plot_top = 40;
  const double plot_w = w - left - right, plot_h = h - bottom - plot_top;
  const double group_w = plot_w / static_cast<double>(std::max<std::size_t>(1, snrs.size()));
  const double bar_w = group_w * 0.8 / static_cast<double>(std::max<std::size_t>(1, fams.size()));
  auto y = [&](double v) { return plot_top + plot_h * (1.0 - v / top); };

  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\">\n";
  os << "<text x=\"" << left << "\" y=\"20\" font-family=\"sans-serif\" font-size=\"14\">" << title << "</text>\n";
  os << "<line x1=\"" << left << "\" y1=\"" << y(0) << "\" x2=\"" << left + plot_w << "\" y2=\"" << y(0)
     << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << left << "\" y1=\"" << plot_top << "\" x2=\"" << left << "\" y2=\"" << y(0)
     << "\" stroke=\"black\"/>\n";
  for (int t = 0; t <= 4; ++t) {
    const double v = top * t / 4.0;
    os << "<text x=\"" << left - 6 << "\" y=\"" << y(v) + 4 << "\" font-family=\"sans-serif\" font-size=\"10\" "
       << "text-anchor=\"end\">" << std::fixed << std::setprecision(1) << v << "</text>\n";
  }
  os << std::defaultfloat << std::setprecision(6);
  os << "<text x=\"14\" y=\"" << plot_top + plot_h / 2 << "\" font-family=\"sans-serif\" font-size=\"11\" "
     << "transform=\"rotate(-90 14 " << plot_top + plot_h / 2 << ")\">error [mm]</text>\n";
  for (std::size_t g = 0; g < snrs.size(); ++g) {
    const double gx = left + group_w * static_cast<double>(g) + group_w * 0.1;
    os << "<text x=\"" << gx + group_w * 0.4 << "\" y=\"" << h - 15 << "\" font-family=\"sans-serif\" "
       << "font-size=\"11\" text-anchor=\"middle\">" << detail::fmt(snrs[g]) << " dB</text>\n";
    for (std::size_t k = 0; k < fams.size(); ++k) {
      const auto it = std::find_if(rows.begin(), rows.end(), [&](const ErrorSummary& s) {
        return s.snr_db == snrs[g] && s.family == fams[k];
      });
      if (it == rows.end()) continue;
      const double x = gx + bar_w * static_cast<double>(k);
      os << "<rect x=\"" << x << "\" y=\"" << y(it->mean) << "\" width=\"" << bar_w * 0.9 << "\" height=\""
         << y(0) - y(it->mean) << "\" fill=\"" << colors[k % 6] << "\"/>\n";
      const double cx = x + bar_w * 0.45;
      os << "<line x1=\"" << cx << "\" y1=\"" << y(it->mean + it->std) << "\" x2=\"" << cx << "\" y2=\""
         << y(std::max(0.0, it->mean - it->std)) << "\" stroke=\"black\"/>\n";
    }
  }
  for (std::size_t k = 0; k < fams.size(); ++k) {
    const double ly = plot_top + 16.0 * static_cast<double>(k);
    os << "<rect x=\"" << left + plot_w + 12 << "\" y=\"" << ly << "\" width=\"10\" height=\"10\" fill=\""
       << colors[k % 6] << "\"/>\n";
    os << "<text x=\"" << left + plot_w + 28 << "\" y=\"" << ly + 9 << "\" font-family=\"sans-serif\" "
       << "font-size=\"11\">" << to_string(fams[k]) << "</text>\n";
  }
  os << "</svg>\n";
}

/// Bars of rank counts per SNR level.
inline void write_rank_svg(std::ostream& os, const RankHistogram& hist) {
  Index max_rank = 0;
  for (const auto& [snr, counts] : hist)
    for (const auto& [rank, count] : counts) max_rank = std::max(max_rank, rank);
  const double w = 720, h = 300, left = 60, bottom = 40, top_pad = 40;
  double top = 1.0;
  for (const auto& [snr, counts] : hist)
    for (const auto& [rank, count] : counts) top = std::max(top, static_cast<double>(count));
  const double plot_w = w - left - 40, plot_h = h - bottom - top_pad;
  const double group_w = plot_w / static_cast<double>(std::max<std::size_t>(1, hist.size()));
  const double bar_w = group_w * 0.8 / static_cast<double>(std::max<Index>(1, max_rank));
  auto y = [&](double v) { return top_pad + plot_h * (1.0 - v / top); };
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\">\n";
  os << "<text x=\"" << left << "\" y=\"20\" font-family=\"sans-serif\" font-size=\"14\">selected rank</text>\n";
  os << "<line x1=\"" << left << "\" y1=\"" << y(0) << "\" x2=\"" << left + plot_w << "\" y2=\"" << y(0)
     << "\" stroke=\"black\"/>\n";
  std::size_t g = 0;
  for (const auto& [snr, counts] : hist) {
    const double gx = left + group_w * static_cast<double>(g) + group_w * 0.1;
    os << "<text x=\"" << gx + group_w * 0.4 << "\" y=\"" << h - 15 << "\" font-family=\"sans-serif\" "
       << "font-size=\"11\" text-anchor=\"middle\">" << detail::fmt(snr) << " dB</text>\n";
    for (const auto& [rank, count] : counts) {
      const double x = gx + bar_w * static_cast<double>(rank - 1);
      os << "<rect x=\"" << x << "\" y=\"" << y(static_cast<double>(count)) << "\" width=\"" << bar_w * 0.9
         << "\" height=\"" << y(0) - y(static_cast<double>(count)) << "\" fill=\"#4477aa\"/>\n";
      os << "<text x=\"" << x + bar_w * 0.45 << "\" y=\"" << y(static_cast<double>(count)) - 3
         << "\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"middle\">r=" << rank << "</text>\n";
    }
    ++g;
  }
  os << "</svg>\n";
}

/// The full artifact set written by `bench` and `report`.
struct ReportFiles {
  std::vector<ErrorRow> rows;
  std::vector<PValueRow> pvalues;
  std::vector<ErrorSummary> summary;
};

inline ReportFiles build_report(const std::vector<ErrorRow>& rows) {
  ReportFiles r;
  r.rows = rows;
  r.pvalues = pvalue_table(rows);
  r.summary = aggregate_rows(rows, ErrorScope::AllIterations);
  const auto last = aggregate_rows(rows, ErrorScope::LastTwo);
  r.summary.insert(r.summary.end(), last.begin(), last.end());
  return r;
}

}  // namespace mvpure
