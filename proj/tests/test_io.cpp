#include "cim/io.hpp"

#include "oracles.hpp"

#include <doctest.h>

#include <unistd.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

using namespace cim;

namespace {

struct TempDir {
  std::filesystem::path path;

  TempDir() {
    static int counter = 0;
    path = std::filesystem::temp_directory_path() /
           ("cim_io_test_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter++));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  std::string file(const std::string& name) const {
    return (path / name).string();
  }
};

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
}

std::string read_text(const std::string& path) {
  std::ifstream in(path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

bool same_double(double a, double b) {
  if (std::isnan(a) || std::isnan(b)) return false;
  return a == b && std::signbit(a) == std::signbit(b);
}

const std::vector<double> kAwkward = {
    1.0 / 3.0,  0.1,   1e-300, 1e308, -0.0,
    4.9406564584124654e-324,  // smallest subnormal
    123456789.123456789,      9007199254740993.0, -2.5e-15};

}  // namespace

TEST_SUITE("io") {

TEST_CASE("format_double round-trips through strtod bit for bit") {
  for (double v : kAwkward) {
    const std::string s = format_double(v);
    const double back = std::strtod(s.c_str(), nullptr);
    CHECK(same_double(back, v));
  }
  CHECK(format_double(1.0) == "1");
  CHECK(format_double(-0.0).substr(0, 1) == "-");
}

TEST_CASE("event logs round-trip") {
  TempDir dir;
  DiffusionLog log;
  log.dims = {5, 3, 4};
  log.events = {{0, 1, 0, 0}, {1, 2, 2, 3}, {4, 0, 1, 1}, {1, 2, 2, 3}};
  const auto path = dir.file("log.txt");
  write_event_log(path, log);
  const auto back = read_event_log(path);
  CHECK(back.dims.nodes == 5);
  CHECK(back.dims.memes == 3);
  CHECK(back.dims.times == 4);
  REQUIRE(back.events.size() == log.events.size());
  for (std::size_t e = 0; e < log.events.size(); ++e) {
    CHECK(back.events[e] == log.events[e]);
  }
}

TEST_CASE("event log reader names the offending line") {
  TempDir dir;
  const auto path = dir.file("bad.txt");
  write_text(path, "3 2 2\n0 1 0 0\n0 9 0 0\n");
  try {
    (void)read_event_log(path);
    FAIL("expected a data error");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find(":3:") != std::string::npos);
  }
  write_text(path, "3 2 2\n0 1 0\n");
  CHECK_THROWS_AS((void)read_event_log(path), DataError);
  write_text(path, "0 2 2\n");
  CHECK_THROWS_AS((void)read_event_log(path), DataError);
  write_text(path, "3 2 2\n0 1 0 0 7\n");
  CHECK_THROWS_AS((void)read_event_log(path), DataError);
  CHECK_THROWS_AS((void)read_event_log(dir.file("missing.txt")), DataError);
}

TEST_CASE("tensors round-trip bitwise") {
  TempDir dir;
  std::vector<Cell> cells;
  std::vector<double> values;
  for (std::size_t i = 0; i < kAwkward.size(); ++i) {
    if (kAwkward[i] == 0.0) continue;  // stored tensors drop exact zeros
    cells.push_back({(Index)i, 0, 0, 0});
    values.push_back(kAwkward[i]);
  }
  const auto t = SparseTensor4d::from_coords({12, 3, 2, 2}, std::move(cells),
                                             std::move(values));
  const auto path = dir.file("tensor.txt");
  write_tensor(path, t);
  const auto back = read_tensor(path);
  CHECK(back.dims() == t.dims());
  REQUIRE(back.nnz() == t.nnz());
  for (Index e = 0; e < t.nnz(); ++e) {
    CHECK(back.cells()[(std::size_t)e] == t.cells()[(std::size_t)e]);
    CHECK(same_double(back.values()[(std::size_t)e],
                      t.values()[(std::size_t)e]));
  }
}

TEST_CASE("tensor reader rejects malformed files") {
  TempDir dir;
  const auto path = dir.file("tensor.txt");
  write_text(path, "2 2 2 2\n0 0 0 0 1.5\nnot a line\n");
  try {
    (void)read_tensor(path);
    FAIL("expected a data error");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find(":3:") != std::string::npos);
  }
  write_text(path, "2 2 2\n");  // short header
  CHECK_THROWS_AS((void)read_tensor(path), DataError);
  write_text(path, "2 2 2 2\n0 0 0 5 1.0\n");  // cell out of range
  CHECK_THROWS_AS((void)read_tensor(path), DataError);
}

TEST_CASE("matrices round-trip bitwise including negative zero") {
  TempDir dir;
  Matrixd m(3, 3);
  m << 1.0 / 3.0, -0.0, 1e-300,
      1e308, 0.1, -2.5e-15,
      4.9406564584124654e-324, 9007199254740993.0, -1.0;
  const auto path = dir.file("matrix.txt");
  write_matrix(path, m);
  const auto back = read_matrix(path);
  REQUIRE(back.rows() == 3);
  REQUIRE(back.cols() == 3);
  for (Index i = 0; i < 3; ++i) {
    for (Index j = 0; j < 3; ++j) {
      CHECK(same_double(back(i, j), m(i, j)));
    }
  }
}

TEST_CASE("matrix reader rejects ragged input") {
  TempDir dir;
  const auto path = dir.file("m.txt");
  write_text(path, "2 3\n1 2 3\n4 5\n");
  CHECK_THROWS_AS((void)read_matrix(path), DataError);
  write_text(path, "2 3\n1 2 3\n4 5 6\n7 8 9\n");
  CHECK_THROWS_AS((void)read_matrix(path), DataError);
  write_text(path, "2 3\n1 2 3 4\n4 5 6\n");
  CHECK_THROWS_AS((void)read_matrix(path), DataError);
  write_text(path, "2 3\n1 2 3\n");
  CHECK_THROWS_AS((void)read_matrix(path), DataError);
  // zero-size matrices are fine
  write_text(path, "0 0\n");
  const auto empty = read_matrix(path);
  CHECK(empty.rows() == 0);
  CHECK(empty.cols() == 0);
}

TEST_CASE("checkpoints round-trip the model bitwise") {
  TempDir dir;
  Rng rng(95);
  auto m = oracle::random_model({6, 6, 3, 4}, 3, rng);
  m.core[0] = 1.0 / 3.0;
  m.src_factor(2, 1) = 1e-300;
  const auto path = dir.file("checkpoint.txt");
  write_checkpoint(path, m);
  const auto back = read_checkpoint(path);
  CHECK(back == m);
  CHECK(back.rank == 3);
  CHECK(back.dims() == m.dims());
}

TEST_CASE("checkpoint reader validates the header and body") {
  TempDir dir;
  const auto path = dir.file("c.txt");
  write_text(path, "2 2 2 0\n");
  CHECK_THROWS_AS((void)read_checkpoint(path), DataError);
  write_text(path, "2 2 2 1\n1 2\n");  // core must hold exactly R^4 values
  CHECK_THROWS_AS((void)read_checkpoint(path), DataError);
  write_text(path, "2 2 2 1\n1\n0.5\n0.5\n0.5\n0.5\n0.5\n0.5\n0.5\n");  // short
  CHECK_THROWS_AS((void)read_checkpoint(path), DataError);
}

TEST_CASE("loss trace csv carries the initial loss as epoch zero") {
  TempDir dir;
  FitReport report;
  report.initial_loss = 12.5;
  ObjectiveTerms t1;
  t1.total = 10.0;
  t1.recon = 8.0;
  t1.reg = 2.0;
  ObjectiveTerms t2;
  t2.total = 9.5;
  report.loss_trace = {t1, t2};
  const auto path = dir.file("trace.csv");
  write_loss_trace_csv(path, report);
  const auto text = read_text(path);
  CHECK(text.find("epoch,total,recon,reg,sda,nma,mc,ts\n") == 0);
  CHECK(text.find("\n0,12.5,,,,,,\n") != std::string::npos);
  CHECK(text.find("\n1,10,8,2,0,0,0,0\n") != std::string::npos);
  CHECK(text.find("\n2,9.5,") != std::string::npos);
}

TEST_CASE("plan and eval and bench csvs have stable headers") {
  TempDir dir;
  WindowPlan plan;
  plan.windows = {{1, 3}, {2, 5}};
  plan.window_nnz = {4, 6};
  write_plan_csv(dir.file("plan.csv"), plan);
  auto text = read_text(dir.file("plan.csv"));
  CHECK(text == "window,start,end,width,nnz\n1,1,3,3,4\n2,2,5,4,6\n");

  EvalReport r;
  r.method = "TD";
  r.removal_fraction = 0.3;
  r.seed = 2;
  r.ra = 0.75;
  r.rmse = 1.25;
  r.wall_time_seconds = 0.5;
  write_eval_csv(dir.file("eval.csv"), {r});
  text = read_text(dir.file("eval.csv"));
  CHECK(text ==
        "method,fraction,seed,ra,rmse,wall_seconds\nTD,0.3,2,0.75,1.25,0.5\n");

  BenchRow row;
  row.nodes = 300;
  row.memes = 2;
  row.times = 35;
  row.nnz = 123;
  row.solver = "twpda";
  row.threads = 4;
  row.wall_time_seconds = 2.0;
  row.speedup = 1.5;
  write_bench_csv(dir.file("bench.csv"), {row});
  text = read_text(dir.file("bench.csv"));
  CHECK(text ==
        "nodes,memes,times,nnz,solver,threads,wall_seconds,speedup\n"
        "300,2,35,123,twpda,4,2,1.5\n");
}

TEST_CASE("merged estimates export reads back as a tensor") {
  TempDir dir;
  // single full-span window holding a constant-2 model
  TwpdaFitd fit;
  fit.dims = {3, 3, 2, 2};
  fit.plan.windows = {{1, 2}};
  fit.plan.window_nnz = {0};
  TuckerModeld model;
  model.rank = 1;
  model.core = Vectord::Constant(1, 2.0);
  model.src_factor = Matrixd::Ones(3, 1);
  model.dst_factor = Matrixd::Ones(3, 1);
  model.meme_factor = Matrixd::Ones(2, 1);
  model.time_factor = Matrixd::Ones(2, 1);
  fit.models = {model};

  const auto path = dir.file("estimates.txt");
  write_merged_estimates(path, fit, 1e-3);
  const auto back = read_tensor(path);
  CHECK(back.dims() == Dims4{3, 3, 2, 2});
  CHECK(back.nnz() == 3 * 3 * 2 * 2);
  for (double v : back.values()) CHECK(v == 2.0);

  write_merged_estimates(path, fit, 2.0);  // strict threshold drops all
  CHECK(read_tensor(path).nnz() == 0);
}

}  // TEST_SUITE
