#include <gtest/gtest.h>

#include <sstream>

#include "mvpure/config.hpp"
#include "mvpure/report.hpp"

using namespace mvpure;

namespace {

AppConfig parse(const std::string& text) {
  std::istringstream in(text);
  return parse_config(in, "test.cfg");
}

std::string config_error(const std::string& text) {
  try {
    parse(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST(Config, EmptyFileKeepsDefaults) {
  const AppConfig c = parse("");
  EXPECT_EQ(c.experiment.m, 32);
  EXPECT_EQ(c.experiment.s, 300);
  EXPECT_EQ(c.experiment.l0, 5);
  EXPECT_DOUBLE_EQ(c.experiment.delta, 0.8);
  EXPECT_EQ(c.experiment.snr_grid_db, (std::vector<double>{-10.0, 0.0, 10.0}));
  EXPECT_EQ(c.experiment.indices.size(), 6u);
  EXPECT_EQ(c.jobs, 0u);
  EXPECT_FALSE(c.input.leadfield.has_value());
}

TEST(Config, ParsesEverySection) {
  const AppConfig c = parse(R"(
[experiment]
m = 20
s = 100
l0 = 4
n_fixed_close = 2
runs = 7
samples_pre = 300
samples_post = 400
delta = 0.9
seed = 42
snr_grid_db = -5, 5
indices = MAI, MAI_RR-I
exact_covariances = yes

[geometry]
coherence = 0.8
radius_mm = 80

[sources]
mvar_order = 3
mask = identity
innovation_correlation = 0.1
exact_source_correlation = 0.3

[noise]
background_sources = 10
background_mask = dense
white_noise_db = -15
ridge_rel = 1e-5

[run]
jobs = 3
)");
  const ExperimentConfig& e = c.experiment;
  EXPECT_EQ(e.m, 20);
  EXPECT_EQ(e.runs, 7);
  EXPECT_EQ(e.seed_base, 42u);
  EXPECT_EQ(e.snr_grid_db, (std::vector<double>{-5.0, 5.0}));
  EXPECT_EQ(e.indices, (std::vector<IndexFamily>{IndexFamily::MAI, IndexFamily::MAI_RR_I}));
  EXPECT_TRUE(e.exact_covariances);
  EXPECT_DOUBLE_EQ(e.coherence, 0.8);
  EXPECT_EQ(e.source_mask, MaskKind::Identity);
  EXPECT_EQ(e.background_mask, MaskKind::Dense);
  EXPECT_DOUBLE_EQ(e.white_noise_db, -15.0);
  EXPECT_DOUBLE_EQ(e.ridge_rel, 1e-5);
  EXPECT_EQ(c.jobs, 3u);
}

TEST(Config, RejectsUnknownAndMalformed) {
  EXPECT_NE(config_error("[experiment]\nsnr = 3\n").find("unknown key [experiment] snr"), std::string::npos);
  EXPECT_NE(config_error("[plot]\nx = 1\n").find("unknown section"), std::string::npos);
  EXPECT_NE(config_error("m = 3\n").find("outside a section"), std::string::npos);
  EXPECT_NE(config_error("[experiment]\nm = 3x\n").find("[experiment] m"), std::string::npos);
  EXPECT_FALSE(config_error("[experiment]\nindices = MAI, NAI\n").empty());
  EXPECT_FALSE(config_error("[experiment]\nindices = MAI, mai\n").empty());
  EXPECT_FALSE(config_error("[experiment]\nexact_covariances = maybe\n").empty());
  EXPECT_FALSE(config_error("[experiment]\nseed = -1\n").empty());
  EXPECT_FALSE(config_error("[run]\njobs = 5000\n").empty());
  EXPECT_FALSE(config_error("[sources]\nmask = sparse\n").empty());
  EXPECT_FALSE(config_error("[input]\nleadfield = a.csv\n").empty());
  EXPECT_FALSE(config_error("[experiment]\nl0 = 40\n").empty());
  EXPECT_THROW(load_config("/nonexistent/x.cfg"), ConfigError);
}

TEST(Config, InputFilesTogether) {
  const AppConfig c = parse("[input]\nleadfield = l.csv\ncovariance_r = r.csv\ncovariance_n = n.csv\n");
  EXPECT_EQ(*c.input.covariance_r, "r.csv");
}

TEST(Report, ShortestRoundTripFormatting) {
  EXPECT_EQ(detail::fmt(0.1), "0.1");
  EXPECT_EQ(detail::fmt(-10.0), "-10");
  EXPECT_EQ(detail::fmt(21.825), "21.825");
  const double third = 1.0 / 3.0;
  EXPECT_EQ(std::stod(detail::fmt(third)), third);
}

TEST(Report, ErrorsCsvRoundTrip) {
  const std::vector<ErrorRow> rows = {{0, -10.0, IndexFamily::MAI_RR_I, 1, 21.8253},
                                      {3, 0.0, IndexFamily::MPZ_EXT, 5, 0.0},
                                      {1, 10.0, IndexFamily::MAI, 2, 1.0 / 7.0}};
  std::stringstream ss;
  write_errors_csv(ss, rows);
  const auto back = read_errors_csv(ss);
  ASSERT_EQ(back.size(), rows.size());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    EXPECT_EQ(back[k].run_id, rows[k].run_id);
    EXPECT_EQ(back[k].snr_db, rows[k].snr_db);
    EXPECT_EQ(back[k].family, rows[k].family);
    EXPECT_EQ(back[k].iteration, rows[k].iteration);
    EXPECT_EQ(back[k].error_mm, rows[k].error_mm);
  }
}

TEST(Report, ErrorsCsvRejectsBadInput) {
  std::stringstream bad_header("a,b\n");
  EXPECT_THROW(read_errors_csv(bad_header), ConfigError);
  std::stringstream bad_index("run_id,snr_db,index,iteration,error_mm\n0,0,NAI,1,2\n");
  EXPECT_THROW(read_errors_csv(bad_index), ConfigError);
  std::stringstream short_row("run_id,snr_db,index,iteration,error_mm\n0,0,MAI,1\n");
  EXPECT_THROW(read_errors_csv(short_row), ConfigError);
  std::stringstream empty("run_id,snr_db,index,iteration,error_mm\n");
  EXPECT_THROW(read_errors_csv(empty), ConfigError);
}

TEST(Report, MatrixCsvRoundTripAndRagged) {
  Matrix a(2, 3);
  a << 1.0 / 3.0, -2.5, 1e-300, 4, 5, 6;
  std::stringstream ss;
  write_matrix_csv(ss, a);
  EXPECT_EQ(read_matrix_csv(ss), a);
  std::stringstream ragged("1,2\n3\n");
  EXPECT_THROW(read_matrix_csv(ragged), ConfigError);
}

TEST(Report, PValueAndSummaryTables) {
  std::vector<ErrorRow> rows;
  for (Index run = 0; run < 2; ++run)
    for (Index it = 1; it <= 3; ++it) {
      rows.push_back({run, 0.0, IndexFamily::MAI, it, 10.0 * it});
      rows.push_back({run, 0.0, IndexFamily::MAI_RR_I, it, 1.0 * it});
    }
  const ReportFiles rep = build_report(rows);
  std::stringstream p, s;
  write_pvalues_csv(p, rep.pvalues);
  write_summary_csv(s, rep.summary);
  std::string line;
  std::getline(p, line);
  EXPECT_EQ(line, "scope,snr_db,hypothesis,n_a,n_b,median_a,median_b,u,method,p_value");
  std::getline(p, line);
  EXPECT_EQ(line.rfind("all_iterations,0,MAI>MAI_RR-I,6,6,", 0), 0u) << line;
  std::getline(s, line);
  EXPECT_EQ(line, "scope,snr_db,index,n,mean_mm,std_mm,median_mm");
  std::getline(s, line);
  EXPECT_EQ(line.rfind("all_iterations,0,MAI,6,20,", 0), 0u) << line;
}

TEST(Report, SvgIsWellFormedText) {
  const std::vector<ErrorSummary> rows = {summarize({1.0, 3.0})};
  std::stringstream ss;
  write_error_svg(ss, rows, "errors");
  const std::string svg = ss.str();
  EXPECT_EQ(svg.rfind("<svg", 0), 0u);
  EXPECT_NE(svg.find("</svg>"), std::string::npos);
}
